#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sentinel/tensor.hpp"

namespace sentinel {

struct TabularDataset {
    MatrixXr features;  // [N, d]
    std::vector<int> labels;
    int num_classes = 0;
    std::vector<std::string> feature_names;
    std::vector<std::string> class_names;  // class_names[code] is the original label text

    std::size_t size() const { return labels.size(); }
    Eigen::Index dim() const { return features.cols(); }
    bool empty() const { return labels.empty(); }

    TabularDataset subset(std::span<const std::size_t> indices) const;
    void validate() const;
};

// Comma-separated with a header row. If every label parses as a non-negative
// integer, codes follow ascending numeric order; otherwise codes follow first
// appearance.
TabularDataset load_csv(const std::filesystem::path& path, const std::string& label_column);

// {"label": code, ...}
void write_label_mapping(const TabularDataset& ds, const std::filesystem::path& path);

std::vector<long> class_counts(std::span<const int> labels, int num_classes);
std::vector<long> class_counts(const TabularDataset& ds);

struct ScalerParams {
    RowVectorXr mean;
    RowVectorXr stddev;  // population convention, floored at 1e-8

    static constexpr double kStdFloor = 1e-8;
};

ScalerParams fit_scaler(const MatrixXr& x);
ScalerParams fit_scaler(const TabularDataset& train);
// Constant (floored) features map to 0.
MatrixXr apply_scaler(const ScalerParams& sc, const MatrixXr& x);
TabularDataset apply_scaler(const ScalerParams& sc, const TabularDataset& ds);

struct PartitionPlan {
    std::vector<int> assignment;  // client index per sample
    double alpha = 0.0;           // 0 marks an IID plan
    int num_clients = 0;
    long min_per_client = 0;
    int attempts = 0;

    std::vector<std::size_t> indices_of(int client) const;
    std::vector<long> client_sizes() const;
};

class PartitionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Per class, proportions ~ Dirichlet(alpha * 1_N) split that class's shuffled
// samples by cumulative share. Draws leaving any client under
// min_per_client samples are redrawn up to max_retries times.
PartitionPlan dirichlet_partition(std::span<const int> labels, int num_clients, double alpha, std::mt19937_64& rng,
                                  long min_per_client = 10, int max_retries = 100);

// Uniform random equal-size partition (sizes differ by at most one).
PartitionPlan iid_partition(std::size_t num_samples, int num_clients, std::mt19937_64& rng);

// Stratified: classes with >= 2 samples land in both splits; singletons go to
// train. The overall train size is round(fraction * N).
std::pair<TabularDataset, TabularDataset> split_train_test(const TabularDataset& ds, double train_fraction,
                                                           std::mt19937_64& rng);

// Gaussian blobs with unit covariance centred at separation * u_c, where the
// u_c are orthonormal when dim >= num_classes and random unit vectors otherwise.
TabularDataset synth_imbalanced(int num_classes, std::span<const long> class_sizes, int dim, double separation,
                                std::mt19937_64& rng);

// Total-variation distance between a count histogram and a reference
// distribution. Empty histograms yield 0.
double tv_distance(std::span<const long> counts, std::span<const double> reference);

}  // namespace sentinel
