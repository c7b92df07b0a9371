#pragma once

// Round orchestration: client selection, broadcast, dropout / straggler
// filtering, normalised pseudo-gradient aggregation with server momentum, and
// the FedAvg baseline.

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sentinel/client.hpp"
#include "sentinel/metrics.hpp"
#include "sentinel/models.hpp"

namespace sentinel {

enum class Algorithm { Sentinel, FedAvg };

struct SelectionConfig {
    double rho = 1.0;
    double p_drop = 0.0;
    double t_thresh = 10000.0;  // seconds
};

struct ServerState {
    ModelParams<double> global_student;
    VectorXr momentum;
    double eta = 1.0;
    double beta_m = 0.9;
    int round = 0;
    double eps = 1e-8;
};

ServerState make_server(ModelParams<double> global_student, double eta = 1.0, double beta_m = 0.9);

// Uniform sample without replacement of ceil(rho * N) ids, returned sorted.
std::vector<int> select_clients(std::span<const int> all_ids, double rho, std::mt19937_64& rng);

struct FilterResult {
    std::vector<int> active;    // survivors of the dropout draw
    std::vector<int> reliable;  // active clients within the time threshold
};

// times[k] is the execution time of selected[k].
FilterResult filter_reliable(std::span<const int> selected, std::mt19937_64& rng, double p_drop,
                             std::span<const double> times, double t_thresh);

// g_i = global - client_i, normalised to unit length (eps 1e-8) and averaged
// with equal weight. Clients with |g_i| <= 1e-12 contribute a zero vector.
VectorXr aggregate_normalized(const VectorXr& global_flat, std::span<const VectorXr> client_flats, double eps = 1e-8);

// v <- beta v + (1 - beta) g;  theta <- theta - eta v;  round += 1
void momentum_update(ServerState& st, const VectorXr& aggregated);

// Sample-count weighted mean of parameter vectors.
VectorXr fedavg_aggregate(std::span<const VectorXr> client_flats, std::span<const long> sample_counts);
ModelParams<double> fedavg_aggregate(std::span<const ModelParams<double>> clients, std::span<const long> sample_counts);

struct ServerConfig {
    Algorithm algorithm = Algorithm::Sentinel;
    int rounds = 100;
    SelectionConfig selection;
    int threads = 1;
    std::uint64_t seed = 13;
    MacroMode macro_mode = MacroMode::AllClasses;
    std::vector<double> injected_delay;  // synthetic per-round delay per client id (seconds)
    bool evaluate_each_round = true;
};

struct ClientRow {
    int round = 0;
    int client_id = 0;
    std::string model;  // teacher | student | global
    ClassificationReport metrics;
    double wall_time_s = 0.0;  // synthetic (injected) component only: deterministic
    double lambda_kd_last = 0.0;
    double lambda_align_last = 0.0;
};

struct RoundReport {
    int round = 0;
    bool skipped = false;
    std::vector<int> selected;
    std::vector<int> reliable;
    std::vector<ClientRow> rows;
    long student_parameters = 0;
    long downlink_bytes = 0;
    long uplink_bytes = 0;
    std::vector<double> measured_time_s;          // per selected client, wall clock
    std::vector<std::vector<BatchRecord>> traces;  // per selected client
};

inline constexpr long kValueWidthBytes = static_cast<long>(sizeof(double));

std::vector<RoundReport> run_training(std::vector<ClientState>& clients, ServerState& server,
                                      const ServerConfig& server_cfg, const ClientConfig& client_cfg);

// Rows for every client in the current state (used per round and standalone).
std::vector<ClientRow> evaluate_all(const std::vector<ClientState>& clients, const ServerState& server,
                                    Algorithm algorithm, int round, MacroMode mode,
                                    std::span<const double> injected_delay);

}  // namespace sentinel
