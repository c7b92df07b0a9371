#pragma once

// Run configuration: a flat "key = value" text file, '#' starts a comment.

#include <cstdint>
#include <filesystem>
#include <limits>
#include <set>
#include <string>
#include <vector>

namespace sentinel {

struct RunConfig {
    // dataset: a CSV file, or synthetic Gaussian blobs when csv_path is empty
    std::string csv_path;
    std::string label_column = "label";
    std::vector<long> synth_counts{2000, 400, 200, 100};
    int synth_dim = 10;
    double synth_separation = 3.0;

    int num_clients = 10;
    int rounds = 100;
    int local_epochs = 5;
    int batch_size = 64;
    double lr = 0.005;
    std::string variant = "sentinel-1";  // sentinel-1 | sentinel-2 | fedavg
    double alpha = 1.0;                  // infinity selects the IID split
    std::uint64_t seed = 13;
    double rho = 1.0;
    double p_drop = 0.0;
    double t_thresh = 10000.0;
    double eta = 1.0;
    double beta_momentum = 0.9;
    bool use_balanced = true;
    bool use_kd = true;
    bool use_align = true;
    std::string out_dir = "out";

    double train_fraction = 0.8;
    long min_per_client = 10;
    double clip_norm = 1.0;
    double weight_decay = 0.0;
    double lr_decay = 1.0;
    long bank_capacity = 1024;
    std::string scaler = "local";      // local | global
    std::string delta_mode = "mean";   // mean | geometric
    std::string macro_mode = "all";    // all | present
    bool reset_student_optimizer = false;
    int threads = 1;
    std::vector<double> straggler_delay;  // seconds per client id

    std::set<std::string> explicit_keys;  // keys present in the parsed text

    bool iid() const { return alpha == std::numeric_limits<double>::infinity(); }
    bool is_fedavg() const { return variant == "fedavg"; }
};

RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
// Every key with its effective value; parse_config(serialize_config(c)) == c.
std::string serialize_config(const RunConfig& cfg);
// Throws ConfigError listing every offending key.
void validate_config(const RunConfig& cfg);
std::vector<std::string> config_keys();

bool same_effective_values(const RunConfig& a, const RunConfig& b);

}  // namespace sentinel
