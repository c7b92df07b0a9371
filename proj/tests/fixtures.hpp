#pragma once

#include <vector>

#include "sentinel/client.hpp"
#include "sentinel/data.hpp"
#include "sentinel/random.hpp"
#include "sentinel/server.hpp"

namespace testutil {

inline sentinel::TabularDataset blobs(std::uint64_t seed, std::vector<long> sizes = {40, 20, 12}, int dim = 6,
                                      double sep = 3.0) {
    auto rng = sentinel::make_stream(seed, 99);
    return sentinel::synth_imbalanced(static_cast<int>(sizes.size()), sizes, dim, sep, rng);
}

inline bool same_dict(const sentinel::StateDict& a, const sentinel::StateDict& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t k = 0; k < a.size(); ++k) {
        if (a[k].name != b[k].name || a[k].rows != b[k].rows || a[k].cols != b[k].cols || a[k].values != b[k].values)
            return false;
    }
    return true;
}

inline sentinel::ClientConfig small_client_config(int epochs = 1) {
    sentinel::ClientConfig cfg;
    cfg.local_epochs = epochs;
    cfg.batch_size = 16;
    cfg.optimizer.lr = 0.005;
    return cfg;
}

// n clients over an IID split of one blob dataset, plus a matching server.
struct Federation {
    std::vector<sentinel::ClientState> clients;
    sentinel::ServerState server;
};

inline Federation federation(int n, const sentinel::VariantSpec& arch, const sentinel::ClientConfig& cfg,
                             std::uint64_t seed = 3) {
    auto data = blobs(seed, {60, 30, 20});
    auto prng = sentinel::make_stream(seed, 2);
    const auto plan = sentinel::iid_partition(data.size(), n, prng);
    Federation f;
    for (int c = 0; c < n; ++c) {
        const auto idx = plan.indices_of(c);
        auto srng = sentinel::make_stream(seed, 3, static_cast<std::uint64_t>(c));
        auto [tr, te] = sentinel::split_train_test(data.subset(idx), 0.8, srng);
        f.clients.push_back(sentinel::make_client(c, arch, std::move(tr), std::move(te), cfg, seed));
    }
    auto grng = sentinel::make_stream(seed, 6);
    f.server = sentinel::make_server(sentinel::init_params<double>(arch.student, grng));
    return f;
}

}  // namespace testutil
