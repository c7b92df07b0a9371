#pragma once

// Turns a RunConfig into a ready-to-train federation and writes run artifacts.

#include <filesystem>
#include <string>
#include <vector>

#include "sentinel/client.hpp"
#include "sentinel/config.hpp"
#include "sentinel/data.hpp"
#include "sentinel/server.hpp"

namespace sentinel {

TabularDataset build_dataset(const RunConfig& cfg);
PartitionPlan build_partition(const RunConfig& cfg, const TabularDataset& ds);

ClientConfig make_client_config(const RunConfig& cfg);
ServerConfig make_server_config(const RunConfig& cfg);
VariantSpec make_architecture(const RunConfig& cfg, int input_dim, int num_classes);

struct Experiment {
    RunConfig config;
    TabularDataset dataset;
    PartitionPlan plan;
    VariantSpec arch;
    ClientConfig client_cfg;
    ServerConfig server_cfg;
    std::vector<ClientState> clients;
    ServerState server;
};

Experiment build_experiment(const RunConfig& cfg);

struct RunResult {
    std::vector<RoundReport> reports;
    long teacher_parameters = 0;
    long student_parameters = 0;
};

// Builds, trains and, when out_dir is non-empty, writes rounds.csv,
// summary.json, timing.csv, trace.csv, effective_config.txt, labels.json and
// global_student.json into it.
RunResult run_experiment(const RunConfig& cfg, const std::filesystem::path& out_dir);

// Per-client class counts with a TV distance column against the global mix.
struct PartitionTable {
    std::vector<std::string> class_names;
    std::vector<std::vector<long>> counts;  // [client][class]
    std::vector<double> tv;
    long total = 0;
};

PartitionTable partition_table(const TabularDataset& ds, const PartitionPlan& plan);
std::string format_partition_table(const PartitionTable& t);
std::string partition_table_csv(const PartitionTable& t);

}  // namespace sentinel
