#include "sentinel/server.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "sentinel/errors.hpp"
#include "sentinel/random.hpp"

namespace sentinel {

ServerState make_server(ModelParams<double> global_student, double eta, double beta_m) {
    if (!(eta > 0.0)) throw std::invalid_argument("make_server: eta must be positive");
    if (!(beta_m >= 0.0 && beta_m < 1.0)) throw std::invalid_argument("make_server: beta_m must lie in [0,1)");
    ServerState st;
    st.momentum = VectorXr::Zero(global_student.parameter_count());
    st.global_student = std::move(global_student);
    st.eta = eta;
    st.beta_m = beta_m;
    return st;
}

std::vector<int> select_clients(std::span<const int> all_ids, double rho, std::mt19937_64& rng) {
    if (!(rho > 0.0 && rho <= 1.0)) throw std::invalid_argument("select_clients: rho must lie in (0,1]");
    if (all_ids.empty()) return {};
    const auto n = all_ids.size();
    const auto k = std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil(rho * static_cast<double>(n) - 1e-9)),
                                           1, n);
    std::vector<int> pool(all_ids.begin(), all_ids.end());
    if (k < n) {
        // partial Fisher-Yates
        for (std::size_t i = 0; i < k; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, n - 1);
            std::swap(pool[i], pool[pick(rng)]);
        }
        pool.resize(k);
    }
    std::sort(pool.begin(), pool.end());
    return pool;
}

FilterResult filter_reliable(std::span<const int> selected, std::mt19937_64& rng, double p_drop,
                             std::span<const double> times, double t_thresh) {
    require_dim(static_cast<Eigen::Index>(times.size()), static_cast<Eigen::Index>(selected.size()),
                "filter_reliable", "times length");
    if (!(p_drop >= 0.0 && p_drop < 1.0)) throw std::invalid_argument("filter_reliable: p_drop must lie in [0,1)");
    FilterResult out;
    std::bernoulli_distribution survive(1.0 - p_drop);
    for (std::size_t k = 0; k < selected.size(); ++k) {
        // one draw per selected client, even when p_drop == 0, keeps the stream aligned
        const bool alive = survive(rng);
        if (!alive) continue;
        out.active.push_back(selected[k]);
        if (times[k] <= t_thresh) out.reliable.push_back(selected[k]);
    }
    return out;
}

VectorXr aggregate_normalized(const VectorXr& global_flat, std::span<const VectorXr> client_flats, double eps) {
    VectorXr sum = VectorXr::Zero(global_flat.size());
    if (client_flats.empty()) return sum;
    for (std::size_t i = 0; i < client_flats.size(); ++i) {
        if (client_flats[i].size() != global_flat.size()) {
            throw DimensionError("aggregate_normalized: client " + std::to_string(i) + " has " +
                                 std::to_string(client_flats[i].size()) + " parameters, global has " +
                                 std::to_string(global_flat.size()));
        }
        const VectorXr g = global_flat - client_flats[i];
        const double norm = g.norm();
        if (norm <= 1e-12) continue;
        sum += g / (norm + eps);
    }
    return sum / static_cast<double>(client_flats.size());
}

void momentum_update(ServerState& st, const VectorXr& aggregated) {
    VectorXr theta = flatten(st.global_student);
    require_dim(aggregated.size(), theta.size(), "momentum_update", "aggregated gradient length");
    if (st.momentum.size() != theta.size()) st.momentum = VectorXr::Zero(theta.size());
    st.momentum = st.beta_m * st.momentum + (1.0 - st.beta_m) * aggregated;
    theta -= st.eta * st.momentum;
    unflatten(st.global_student, theta);
    st.round += 1;
}

VectorXr fedavg_aggregate(std::span<const VectorXr> client_flats, std::span<const long> sample_counts) {
    if (client_flats.empty()) throw std::invalid_argument("fedavg_aggregate: no clients");
    require_dim(static_cast<Eigen::Index>(sample_counts.size()), static_cast<Eigen::Index>(client_flats.size()),
                "fedavg_aggregate", "sample_counts length");
    double total = 0.0;
    for (long n : sample_counts) {
        if (n <= 0) throw std::invalid_argument("fedavg_aggregate: sample counts must be positive");
        total += static_cast<double>(n);
    }
    VectorXr out = VectorXr::Zero(client_flats.front().size());
    for (std::size_t i = 0; i < client_flats.size(); ++i) {
        if (client_flats[i].size() != out.size()) {
            throw DimensionError("fedavg_aggregate: client " + std::to_string(i) + " parameter layout differs");
        }
        out += (static_cast<double>(sample_counts[i]) / total) * client_flats[i];
    }
    return out;
}

ModelParams<double> fedavg_aggregate(std::span<const ModelParams<double>> clients, std::span<const long> sample_counts) {
    if (clients.empty()) throw std::invalid_argument("fedavg_aggregate: no clients");
    std::vector<VectorXr> flats;
    flats.reserve(clients.size());
    for (const auto& c : clients) flats.push_back(flatten(c));
    ModelParams<double> out = clients.front();
    unflatten(out, fedavg_aggregate(std::span<const VectorXr>(flats), sample_counts));
    return out;
}

std::vector<ClientRow> evaluate_all(const std::vector<ClientState>& clients, const ServerState& server,
                                    Algorithm algorithm, int round, MacroMode mode,
                                    std::span<const double> injected_delay) {
    std::vector<ClientRow> rows;
    for (const auto& st : clients) {
        const double delay =
            static_cast<std::size_t>(st.client_id) < injected_delay.size() ? injected_delay[st.client_id] : 0.0;
        auto row = [&](const char* model, ClassificationReport rep) {
            ClientRow r;
            r.round = round;
            r.client_id = st.client_id;
            r.model = model;
            r.metrics = std::move(rep);
            r.wall_time_s = delay;
            if (algorithm == Algorithm::Sentinel) {
                r.lambda_kd_last = st.weights.lambda_kd;
                r.lambda_align_last = st.weights.lambda_align;
            }
            rows.push_back(std::move(r));
        };
        if (algorithm == Algorithm::Sentinel) {
            row("teacher", evaluate_client(st, ModelRole::Teacher, mode));
            row("student", evaluate_client(st, ModelRole::Student, mode));
        }
        row("global", evaluate_model(server.global_student, st.test, mode));
    }
    return rows;
}

namespace {

// Runs fn(k) for k in [0, n) on up to `threads` workers. Exceptions are
// collected per task; the first one (by task index) is rethrown.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
    std::vector<std::exception_ptr> errors(n);
    const std::size_t workers = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), 1, std::max<std::size_t>(n, 1));
    if (workers <= 1) {
        for (std::size_t k = 0; k < n; ++k) {
            try {
                fn(k);
            } catch (...) {
                errors[k] = std::current_exception();
            }
        }
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t k = next++; k < n; k = next++) {
                    try {
                        fn(k);
                    } catch (...) {
                        errors[k] = std::current_exception();
                    }
                }
            });
        }
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

}  // namespace

std::vector<RoundReport> run_training(std::vector<ClientState>& clients, ServerState& server,
                                      const ServerConfig& server_cfg, const ClientConfig& client_cfg) {
    if (clients.empty()) throw std::invalid_argument("run_training: no clients");
    std::vector<RoundReport> reports;
    if (server_cfg.rounds <= 0) return reports;

    std::vector<int> ids;
    for (const auto& c : clients) ids.push_back(c.client_id);
    auto index_of = [&](int id) {
        for (std::size_t k = 0; k < clients.size(); ++k) {
            if (clients[k].client_id == id) return k;
        }
        throw std::logic_error("run_training: unknown client id");
    };
    auto delay_of = [&](int id) {
        return static_cast<std::size_t>(id) < server_cfg.injected_delay.size() ? server_cfg.injected_delay[id] : 0.0;
    };

    auto select_rng = make_stream(server_cfg.seed, streams::kSelection);
    auto drop_rng = make_stream(server_cfg.seed, streams::kDropout);
    std::vector<double> time_sum(clients.size(), 0.0);
    std::vector<int> time_count(clients.size(), 0);
    const long student_params = server.global_student.parameter_count();

    for (int r = 1; r <= server_cfg.rounds; ++r) {
        RoundReport rep;
        rep.round = r;
        rep.student_parameters = student_params;
        rep.selected = select_clients(ids, server_cfg.selection.rho, select_rng);
        rep.downlink_bytes = static_cast<long>(rep.selected.size()) * student_params * kValueWidthBytes;

        const StateDict broadcast = state_dict(server.global_student);
        std::vector<StateDict> returned(rep.selected.size());
        try {
            parallel_for(rep.selected.size(), server_cfg.threads, [&](std::size_t k) {
                auto& st = clients[index_of(rep.selected[k])];
                returned[k] = server_cfg.algorithm == Algorithm::Sentinel
                                  ? client_update(st, broadcast, r, client_cfg)
                                  : fedavg_client_update(st, broadcast, r, client_cfg);
            });
        } catch (const std::exception& e) {
            throw std::runtime_error("round " + std::to_string(r) + ": " + e.what());
        }

        // average per-round execution time t_c, including the injected delay
        std::vector<double> t_c(rep.selected.size());
        for (std::size_t k = 0; k < rep.selected.size(); ++k) {
            const std::size_t ci = index_of(rep.selected[k]);
            const double measured = clients[ci].last_round_wall_time;
            rep.measured_time_s.push_back(measured);
            rep.traces.push_back(clients[ci].trace);
            time_sum[ci] += measured + delay_of(rep.selected[k]);
            time_count[ci] += 1;
            t_c[k] = time_sum[ci] / time_count[ci];
        }
        const auto filt =
            filter_reliable(rep.selected, drop_rng, server_cfg.selection.p_drop, t_c, server_cfg.selection.t_thresh);
        rep.reliable = filt.reliable;
        rep.uplink_bytes = static_cast<long>(rep.reliable.size()) * student_params * kValueWidthBytes;

        if (rep.reliable.empty()) {
            rep.skipped = true;
            server.round += 1;
        } else {
            std::vector<VectorXr> flats;
            std::vector<long> counts;
            for (int id : rep.reliable) {
                const auto k = static_cast<std::size_t>(
                    std::find(rep.selected.begin(), rep.selected.end(), id) - rep.selected.begin());
                ModelParams<double> tmp = server.global_student;
                load_state_dict(tmp, returned[k]);
                flats.push_back(flatten(tmp));
                counts.push_back(std::max<long>(1, static_cast<long>(clients[index_of(id)].train.size())));
            }
            if (server_cfg.algorithm == Algorithm::Sentinel) {
                momentum_update(server, aggregate_normalized(flatten(server.global_student), flats, server.eps));
            } else {
                unflatten(server.global_student, fedavg_aggregate(std::span<const VectorXr>(flats), counts));
                server.round += 1;
            }
        }

        if (server_cfg.evaluate_each_round || r == server_cfg.rounds) {
            rep.rows = evaluate_all(clients, server, server_cfg.algorithm, r, server_cfg.macro_mode,
                                    server_cfg.injected_delay);
        }
        reports.push_back(std::move(rep));
    }
    return reports;
}

}  // namespace sentinel
