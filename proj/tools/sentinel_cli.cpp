#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>

#include "CLI11.hpp"

#include "sentinel/config.hpp"
#include "sentinel/errors.hpp"
#include "sentinel/experiment.hpp"
#include "sentinel/gradcheck.hpp"
#include "sentinel/state_io.hpp"

using namespace sentinel;

namespace {

struct CommonFlags {
    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool need_config) {
    auto* opt = cmd->add_option("--config", f.config_path, "flat key = value configuration file");
    if (need_config) opt->check(CLI::ExistingFile);
    cmd->add_option("--out", f.out_dir, "output directory (overrides out_dir)");
    cmd->add_option("--seed", f.seed, "random seed (overrides seed)");
    cmd->add_option("--threads", f.threads, "client worker threads (overrides threads)")->check(CLI::PositiveNumber);
}

RunConfig resolve(const CommonFlags& f) {
    RunConfig cfg = f.config_path.empty() ? RunConfig{} : load_config(f.config_path);
    if (f.seed) cfg.seed = *f.seed;
    if (f.threads) cfg.threads = *f.threads;
    if (!f.out_dir.empty()) cfg.out_dir = f.out_dir;
    validate_config(cfg);
    return cfg;
}

int cmd_run(const CommonFlags& f) {
    const RunConfig cfg = resolve(f);
    const auto res = run_experiment(cfg, cfg.out_dir);
    if (!res.reports.empty()) {
        const auto& last = res.reports.back();
        double sum = 0.0;
        int n = 0;
        const char* kind = cfg.is_fedavg() ? "global" : "teacher";
        for (const auto& row : last.rows) {
            if (row.model == kind) {
                sum += row.metrics.macro_f1;
                ++n;
            }
        }
        if (n > 0) std::printf("round %d mean %s macro-F1 %.4f\n", last.round, kind, sum / n);
    }
    std::printf("wrote %s\n", (std::filesystem::path(cfg.out_dir) / "rounds.csv").string().c_str());
    return 0;
}

int cmd_gradcheck(std::uint64_t seed, int trials) {
    GradcheckOptions opts;
    opts.seed = seed;
    opts.trials = trials;
    bool ok = true;
    for (const auto& r : run_gradcheck_suite(opts)) {
        std::printf("%-24s trials=%d max_rel_err=%.3e skipped=%ld %s\n", r.name.c_str(), r.trials, r.max_rel_error,
                    r.skipped_entries, r.passed ? "ok" : "FAIL");
        ok = ok && r.passed;
    }
    return ok ? 0 : 1;
}

int cmd_partition_inspect(const CommonFlags& f, bool iid) {
    RunConfig cfg = resolve(f);
    if (iid) cfg.alpha = std::numeric_limits<double>::infinity();
    const auto ds = build_dataset(cfg);
    const auto plan = build_partition(cfg, ds);
    const auto table = partition_table(ds, plan);
    std::cout << format_partition_table(table);
    const auto path = std::filesystem::path(cfg.out_dir) / "partition.csv";
    write_file_atomic(path, partition_table_csv(table));
    std::printf("wrote %s\n", path.string().c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Personalized federated intrusion-detection simulator"};
    app.require_subcommand(1);

    CommonFlags run_flags, part_flags;
    auto* run = app.add_subcommand("run", "train a federation and write round reports");
    add_common(run, run_flags, true);

    auto* grad = app.add_subcommand("gradcheck", "finite-difference check of every analytic gradient");
    std::uint64_t grad_seed = 7;
    int grad_trials = 100;
    grad->add_option("--seed", grad_seed, "random seed for the trial instances");
    grad->add_option("--trials", grad_trials, "instances per check")->check(CLI::PositiveNumber);

    auto* part = app.add_subcommand("partition-inspect", "print per-client class counts");
    add_common(part, part_flags, true);
    bool iid = false;
    part->add_flag("--iid", iid, "force the IID split (alpha = inf)");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*run) return cmd_run(run_flags);
        if (*grad) return cmd_gradcheck(grad_seed, grad_trials);
        if (*part) return cmd_partition_inspect(part_flags, iid);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "configuration error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
