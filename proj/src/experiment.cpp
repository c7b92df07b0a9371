#include "sentinel/experiment.hpp"

#include <cstdio>

#include "sentinel/errors.hpp"
#include "sentinel/random.hpp"
#include "sentinel/report.hpp"
#include "sentinel/state_io.hpp"

namespace sentinel {

TabularDataset build_dataset(const RunConfig& cfg) {
    if (!cfg.csv_path.empty()) return load_csv(cfg.csv_path, cfg.label_column);
    auto rng = make_stream(cfg.seed, streams::kSynthData);
    return synth_imbalanced(static_cast<int>(cfg.synth_counts.size()), cfg.synth_counts, cfg.synth_dim,
                            cfg.synth_separation, rng);
}

PartitionPlan build_partition(const RunConfig& cfg, const TabularDataset& ds) {
    auto rng = make_stream(cfg.seed, streams::kPartition);
    if (cfg.iid()) return iid_partition(ds.size(), cfg.num_clients, rng);
    return dirichlet_partition(ds.labels, cfg.num_clients, cfg.alpha, rng, cfg.min_per_client);
}

ClientConfig make_client_config(const RunConfig& cfg) {
    ClientConfig c;
    c.local_epochs = cfg.local_epochs;
    c.batch_size = cfg.batch_size;
    c.optimizer.lr = cfg.lr;
    c.optimizer.weight_decay = cfg.weight_decay;
    c.clip_norm = cfg.clip_norm;
    c.lr_decay = cfg.lr_decay;
    c.use_balanced = cfg.use_balanced;
    c.use_kd = cfg.use_kd;
    c.use_align = cfg.use_align;
    c.delta_mode = cfg.delta_mode == "geometric" ? DeltaMode::GeometricMean : DeltaMode::MeanProduct;
    c.bank_capacity = cfg.bank_capacity;
    c.reset_student_optimizer = cfg.reset_student_optimizer;
    return c;
}

ServerConfig make_server_config(const RunConfig& cfg) {
    ServerConfig s;
    s.algorithm = cfg.is_fedavg() ? Algorithm::FedAvg : Algorithm::Sentinel;
    s.rounds = cfg.rounds;
    s.selection = SelectionConfig{cfg.rho, cfg.p_drop, cfg.t_thresh};
    s.threads = cfg.threads;
    s.seed = cfg.seed;
    s.macro_mode = cfg.macro_mode == "present" ? MacroMode::PresentClasses : MacroMode::AllClasses;
    s.injected_delay = cfg.straggler_delay;
    return s;
}

VariantSpec make_architecture(const RunConfig& cfg, int input_dim, int num_classes) {
    const Variant v = cfg.variant == "sentinel-2" ? Variant::SentinelII : Variant::SentinelI;
    return build_variant(v, input_dim, num_classes);
}

Experiment build_experiment(const RunConfig& cfg) {
    validate_config(cfg);
    Experiment ex;
    ex.config = cfg;
    ex.dataset = build_dataset(cfg);
    ex.dataset.validate();
    ex.plan = build_partition(cfg, ex.dataset);
    ex.arch = make_architecture(cfg, static_cast<int>(ex.dataset.dim()), ex.dataset.num_classes);
    ex.client_cfg = make_client_config(cfg);
    ex.server_cfg = make_server_config(cfg);

    std::vector<std::pair<TabularDataset, TabularDataset>> splits;
    for (int c = 0; c < cfg.num_clients; ++c) {
        const auto idx = ex.plan.indices_of(c);
        auto rng = make_stream(cfg.seed, streams::kSplit, static_cast<std::uint64_t>(c));
        auto split = split_train_test(ex.dataset.subset(idx), cfg.train_fraction, rng);
        if (split.first.empty() || split.second.empty()) {
            throw DataError("client " + std::to_string(c) + " holds " + std::to_string(idx.size()) +
                            " samples: too few for a train/test split");
        }
        splits.push_back(std::move(split));
    }

    ScalerParams global_scaler;
    if (cfg.scaler == "global") {
        Eigen::Index rows = 0;
        for (const auto& s : splits) rows += s.first.features.rows();
        MatrixXr all(rows, ex.dataset.dim());
        Eigen::Index off = 0;
        for (const auto& s : splits) {
            all.middleRows(off, s.first.features.rows()) = s.first.features;
            off += s.first.features.rows();
        }
        global_scaler = fit_scaler(all);
    }

    for (int c = 0; c < cfg.num_clients; ++c) {
        auto& [train, test] = splits[static_cast<std::size_t>(c)];
        const ScalerParams sc = cfg.scaler == "global" ? global_scaler : fit_scaler(train);
        ex.clients.push_back(
            make_client(c, ex.arch, apply_scaler(sc, train), apply_scaler(sc, test), ex.client_cfg, cfg.seed));
    }

    auto init_rng = make_stream(cfg.seed, streams::kGlobalInit);
    ex.server = make_server(init_params<double>(ex.arch.student, init_rng), cfg.eta, cfg.beta_momentum);
    return ex;
}

RunResult run_experiment(const RunConfig& cfg, const std::filesystem::path& out_dir) {
    Experiment ex = build_experiment(cfg);
    RunResult res;
    res.teacher_parameters = ex.arch.teacher.parameter_count();
    res.student_parameters = ex.arch.student.parameter_count();
    res.reports = run_training(ex.clients, ex.server, ex.server_cfg, ex.client_cfg);
    if (!out_dir.empty()) {
        write_file_atomic(out_dir / "rounds.csv", rounds_csv(res.reports));
        write_file_atomic(out_dir / "summary.json",
                          summary_json(res.reports, cfg.variant, res.teacher_parameters, res.student_parameters));
        write_file_atomic(out_dir / "timing.csv", timing_csv(res.reports, cfg.straggler_delay));
        write_file_atomic(out_dir / "trace.csv", trace_csv(res.reports));
        write_file_atomic(out_dir / "effective_config.txt", serialize_config(cfg));
        write_label_mapping(ex.dataset, out_dir / "labels.json");
        save_state_dict(state_dict(ex.server.global_student), out_dir / "global_student.json");
    }
    return res;
}

PartitionTable partition_table(const TabularDataset& ds, const PartitionPlan& plan) {
    PartitionTable t;
    t.class_names = ds.class_names;
    if (t.class_names.empty()) {
        for (int c = 0; c < ds.num_classes; ++c) t.class_names.push_back(std::to_string(c));
    }
    const auto global = class_counts(ds);
    std::vector<double> ref(global.size());
    for (std::size_t c = 0; c < global.size(); ++c) {
        ref[c] = static_cast<double>(global[c]) / static_cast<double>(ds.size());
    }
    for (int k = 0; k < plan.num_clients; ++k) {
        std::vector<long> counts(static_cast<std::size_t>(ds.num_classes), 0);
        for (std::size_t i : plan.indices_of(k)) counts[static_cast<std::size_t>(ds.labels[i])] += 1;
        for (long n : counts) t.total += n;
        t.tv.push_back(tv_distance(counts, ref));
        t.counts.push_back(std::move(counts));
    }
    return t;
}

std::string format_partition_table(const PartitionTable& t) {
    std::string out = "client";
    char buf[64];
    for (const auto& name : t.class_names) {
        std::snprintf(buf, sizeof buf, " %10s", name.c_str());
        out += buf;
    }
    out += "         tv\n";
    for (std::size_t k = 0; k < t.counts.size(); ++k) {
        std::snprintf(buf, sizeof buf, "%6zu", k);
        out += buf;
        for (long n : t.counts[k]) {
            std::snprintf(buf, sizeof buf, " %10ld", n);
            out += buf;
        }
        std::snprintf(buf, sizeof buf, " %10.4f\n", t.tv[k]);
        out += buf;
    }
    out += "total " + std::to_string(t.total) + "\n";
    return out;
}

std::string partition_table_csv(const PartitionTable& t) {
    std::string out = "client";
    for (const auto& name : t.class_names) out += "," + name;
    out += ",tv\n";
    char buf[32];
    for (std::size_t k = 0; k < t.counts.size(); ++k) {
        out += std::to_string(k);
        for (long n : t.counts[k]) out += "," + std::to_string(n);
        std::snprintf(buf, sizeof buf, ",%.10g\n", t.tv[k]);
        out += buf;
    }
    return out;
}

}  // namespace sentinel
