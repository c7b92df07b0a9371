#include "sentinel/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "sentinel/errors.hpp"
#include "sentinel/state_io.hpp"

namespace sentinel {

namespace {

std::string trim(std::string s) {
    const auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
    return s;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (char ch : line) {
        if (ch == '"') {
            quoted = !quoted;
            cur.push_back(ch);
        } else if (ch == ',' && !quoted) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    out.push_back(trim(cur));
    return out;
}

bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (*first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last;
}

bool parse_nonneg_int(const std::string& s, long& out) {
    if (s.empty()) return false;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size() && out >= 0;
}

}  // namespace

TabularDataset TabularDataset::subset(std::span<const std::size_t> indices) const {
    TabularDataset out;
    out.num_classes = num_classes;
    out.feature_names = feature_names;
    out.class_names = class_names;
    out.features.resize(static_cast<Eigen::Index>(indices.size()), features.cols());
    out.labels.reserve(indices.size());
    for (std::size_t k = 0; k < indices.size(); ++k) {
        out.features.row(static_cast<Eigen::Index>(k)) = features.row(static_cast<Eigen::Index>(indices[k]));
        out.labels.push_back(labels.at(indices[k]));
    }
    return out;
}

void TabularDataset::validate() const {
    if (static_cast<std::size_t>(features.rows()) != labels.size()) {
        throw DataError("dataset: " + std::to_string(features.rows()) + " feature rows but " +
                        std::to_string(labels.size()) + " labels");
    }
    for (int y : labels) {
        if (y < 0 || y >= num_classes) throw DataError("dataset: label " + std::to_string(y) + " out of range");
    }
}

TabularDataset load_csv(const std::filesystem::path& path, const std::string& label_column) {
    std::ifstream in(path);
    if (!in) throw DataError("load_csv: cannot open '" + path.string() + "'");

    std::string line;
    if (!std::getline(in, line)) throw DataError("load_csv: '" + path.string() + "' is empty");
    const auto header = split_csv_line(line);
    const auto label_it = std::find(header.begin(), header.end(), label_column);
    if (label_it == header.end()) {
        throw DataError("load_csv: label column '" + label_column + "' not found in header of '" + path.string() +
                        "'");
    }
    const std::size_t label_idx = static_cast<std::size_t>(label_it - header.begin());

    TabularDataset ds;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (c != label_idx) ds.feature_names.push_back(header[c]);
    }

    std::vector<std::vector<double>> rows;
    std::vector<std::string> raw_labels;
    long row_no = 1;
    while (std::getline(in, line)) {
        ++row_no;
        if (trim(line).empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != header.size()) {
            throw DataError("load_csv: row " + std::to_string(row_no) + " has " + std::to_string(cells.size()) +
                            " cells, header has " + std::to_string(header.size()));
        }
        std::vector<double> row;
        row.reserve(header.size() - 1);
        for (std::size_t c = 0; c < cells.size(); ++c) {
            if (c == label_idx) continue;
            double v = 0.0;
            if (!parse_double(cells[c], v)) {
                throw DataError("load_csv: non-numeric value '" + cells[c] + "' at row " + std::to_string(row_no) +
                                ", column '" + header[c] + "'");
            }
            row.push_back(v);
        }
        rows.push_back(std::move(row));
        raw_labels.push_back(cells[label_idx]);
    }
    if (rows.empty()) throw DataError("load_csv: '" + path.string() + "' has a header but no data rows");

    bool all_int = true;
    for (const auto& s : raw_labels) {
        long v = 0;
        if (!parse_nonneg_int(s, v)) {
            all_int = false;
            break;
        }
    }
    std::map<std::string, int> code;
    if (all_int) {
        std::map<long, std::string> distinct;
        for (const auto& s : raw_labels) {
            long v = 0;
            parse_nonneg_int(s, v);
            distinct.emplace(v, s);
        }
        for (const auto& [v, s] : distinct) {
            code.emplace(s, static_cast<int>(ds.class_names.size()));
            ds.class_names.push_back(s);
        }
    } else {
        for (const auto& s : raw_labels) {
            if (code.emplace(s, static_cast<int>(ds.class_names.size())).second) ds.class_names.push_back(s);
        }
    }

    ds.num_classes = static_cast<int>(ds.class_names.size());
    ds.features.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(ds.feature_names.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < rows[i].size(); ++j) {
            ds.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
        }
        ds.labels.push_back(code.at(raw_labels[i]));
    }
    return ds;
}

void write_label_mapping(const TabularDataset& ds, const std::filesystem::path& path) {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (std::size_t c = 0; c < ds.class_names.size(); ++c) j[ds.class_names[c]] = static_cast<int>(c);
    write_file_atomic(path, j.dump(2) + "\n");
}

std::vector<long> class_counts(std::span<const int> labels, int num_classes) {
    std::vector<long> counts(static_cast<std::size_t>(num_classes), 0);
    for (int y : labels) counts.at(static_cast<std::size_t>(y)) += 1;
    return counts;
}

std::vector<long> class_counts(const TabularDataset& ds) { return class_counts(ds.labels, ds.num_classes); }

ScalerParams fit_scaler(const MatrixXr& x) {
    ScalerParams sc;
    const Eigen::Index n = x.rows();
    if (n == 0) {
        sc.mean = RowVectorXr::Zero(x.cols());
        sc.stddev = RowVectorXr::Constant(x.cols(), ScalerParams::kStdFloor);
        return sc;
    }
    sc.mean = x.colwise().mean();
    const MatrixXr centered = x.rowwise() - sc.mean;
    sc.stddev = (centered.array().square().colwise().sum() / static_cast<double>(n)).sqrt().matrix();
    sc.stddev = sc.stddev.cwiseMax(ScalerParams::kStdFloor);
    return sc;
}

ScalerParams fit_scaler(const TabularDataset& train) { return fit_scaler(train.features); }

MatrixXr apply_scaler(const ScalerParams& sc, const MatrixXr& x) {
    require_dim(x.cols(), sc.mean.cols(), "apply_scaler", "axis 1 (features)");
    MatrixXr out(x.rows(), x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        if (sc.stddev(j) <= ScalerParams::kStdFloor) {
            out.col(j).setZero();
        } else {
            out.col(j) = (x.col(j).array() - sc.mean(j)) / sc.stddev(j);
        }
    }
    return out;
}

TabularDataset apply_scaler(const ScalerParams& sc, const TabularDataset& ds) {
    TabularDataset out = ds;
    out.features = apply_scaler(sc, ds.features);
    return out;
}

std::vector<std::size_t> PartitionPlan::indices_of(int client) const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < assignment.size(); ++i) {
        if (assignment[i] == client) idx.push_back(i);
    }
    return idx;
}

std::vector<long> PartitionPlan::client_sizes() const {
    std::vector<long> sizes(static_cast<std::size_t>(num_clients), 0);
    for (int c : assignment) sizes.at(static_cast<std::size_t>(c)) += 1;
    return sizes;
}

PartitionPlan dirichlet_partition(std::span<const int> labels, int num_clients, double alpha, std::mt19937_64& rng,
                                  long min_per_client, int max_retries) {
    if (!(alpha > 0.0)) throw std::invalid_argument("dirichlet_partition: alpha must be positive");
    if (num_clients < 1) throw std::invalid_argument("dirichlet_partition: num_clients must be >= 1");

    int num_classes = 0;
    for (int y : labels) num_classes = std::max(num_classes, y + 1);
    std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(num_classes));
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[static_cast<std::size_t>(labels[i])].push_back(i);

    PartitionPlan plan;
    plan.alpha = alpha;
    plan.num_clients = num_clients;
    plan.min_per_client = min_per_client;
    plan.assignment.assign(labels.size(), 0);

    std::gamma_distribution<double> gamma(alpha, 1.0);
    const std::size_t n_clients = static_cast<std::size_t>(num_clients);
    for (int attempt = 1; attempt <= std::max(1, max_retries); ++attempt) {
        plan.attempts = attempt;
        std::vector<long> sizes(n_clients, 0);
        for (auto& members : by_class) {
            std::vector<std::size_t> idx = members;
            std::shuffle(idx.begin(), idx.end(), rng);
            std::vector<double> share(n_clients, 0.0);
            double total = 0.0;
            while (!(total > 0.0)) {
                total = 0.0;
                for (auto& s : share) total += (s = gamma(rng));
            }
            // cut points floor(cumulative share * n_c); the last client absorbs the remainder
            std::size_t start = 0;
            double cum = 0.0;
            for (std::size_t c = 0; c < n_clients; ++c) {
                cum += share[c] / total;
                std::size_t stop = c + 1 == n_clients
                                       ? idx.size()
                                       : std::min(idx.size(), static_cast<std::size_t>(std::floor(
                                                                  cum * static_cast<double>(idx.size()))));
                stop = std::max(stop, start);
                for (std::size_t k = start; k < stop; ++k) plan.assignment[idx[k]] = static_cast<int>(c);
                sizes[c] += static_cast<long>(stop - start);
                start = stop;
            }
        }
        if (*std::min_element(sizes.begin(), sizes.end()) >= min_per_client) return plan;
    }
    throw PartitionError("dirichlet_partition: could not give every client >= " + std::to_string(min_per_client) +
                         " samples after " + std::to_string(max_retries) + " draws (alpha=" + std::to_string(alpha) +
                         ", clients=" + std::to_string(num_clients) + ", N=" + std::to_string(labels.size()) + ")");
}

PartitionPlan iid_partition(std::size_t num_samples, int num_clients, std::mt19937_64& rng) {
    if (num_clients < 1) throw std::invalid_argument("iid_partition: num_clients must be >= 1");
    std::vector<std::size_t> idx(num_samples);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::shuffle(idx.begin(), idx.end(), rng);
    PartitionPlan plan;
    plan.num_clients = num_clients;
    plan.attempts = 1;
    plan.assignment.assign(num_samples, 0);
    for (std::size_t k = 0; k < idx.size(); ++k) {
        plan.assignment[idx[k]] = static_cast<int>(k % static_cast<std::size_t>(num_clients));
    }
    return plan;
}

std::pair<TabularDataset, TabularDataset> split_train_test(const TabularDataset& ds, double train_fraction,
                                                           std::mt19937_64& rng) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw std::invalid_argument("split_train_test: train_fraction must lie in (0,1)");
    }
    if (ds.empty()) throw DataError("split_train_test: empty dataset");

    const std::size_t n_cls = static_cast<std::size_t>(ds.num_classes);
    std::vector<std::vector<std::size_t>> by_class(n_cls);
    for (std::size_t i = 0; i < ds.size(); ++i) by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);

    std::vector<long> lo(n_cls), hi(n_cls), alloc(n_cls);
    std::vector<double> ideal(n_cls);
    long assigned = 0;
    for (std::size_t c = 0; c < n_cls; ++c) {
        const long n = static_cast<long>(by_class[c].size());
        lo[c] = n >= 2 ? 1 : n;
        hi[c] = n >= 2 ? n - 1 : n;
        ideal[c] = train_fraction * static_cast<double>(n);
        alloc[c] = std::clamp(static_cast<long>(std::floor(ideal[c])), lo[c], hi[c]);
        assigned += alloc[c];
    }
    const long target = static_cast<long>(std::llround(train_fraction * static_cast<double>(ds.size())));
    // largest-remainder style correction towards the overall target
    while (assigned != target) {
        long best = -1;
        for (std::size_t c = 0; c < n_cls; ++c) {
            const double rem = ideal[c] - static_cast<double>(alloc[c]);
            if (assigned < target && alloc[c] < hi[c]) {
                if (best < 0 || rem > ideal[best] - static_cast<double>(alloc[best])) best = static_cast<long>(c);
            } else if (assigned > target && alloc[c] > lo[c]) {
                if (best < 0 || rem < ideal[best] - static_cast<double>(alloc[best])) best = static_cast<long>(c);
            }
        }
        if (best < 0) break;
        const long step = assigned < target ? 1 : -1;
        alloc[static_cast<std::size_t>(best)] += step;
        assigned += step;
    }

    std::vector<std::size_t> train_idx, test_idx;
    for (std::size_t c = 0; c < n_cls; ++c) {
        auto idx = by_class[c];
        std::shuffle(idx.begin(), idx.end(), rng);
        for (std::size_t k = 0; k < idx.size(); ++k) {
            (static_cast<long>(k) < alloc[c] ? train_idx : test_idx).push_back(idx[k]);
        }
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(test_idx.begin(), test_idx.end());
    return {ds.subset(train_idx), ds.subset(test_idx)};
}

TabularDataset synth_imbalanced(int num_classes, std::span<const long> class_sizes, int dim, double separation,
                                std::mt19937_64& rng) {
    if (num_classes < 1 || dim < 1) throw std::invalid_argument("synth_imbalanced: num_classes and dim must be >= 1");
    require_dim(static_cast<Eigen::Index>(class_sizes.size()), num_classes, "synth_imbalanced", "class_sizes length");
    for (long n : class_sizes) {
        if (n < 1) throw std::invalid_argument("synth_imbalanced: every class needs at least one sample");
    }
    std::normal_distribution<double> normal(0.0, 1.0);

    MatrixXr raw(dim, num_classes);
    for (Eigen::Index i = 0; i < raw.rows(); ++i) {
        for (Eigen::Index j = 0; j < raw.cols(); ++j) raw(i, j) = normal(rng);
    }
    MatrixXr dirs(dim, num_classes);
    if (dim >= num_classes) {
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(raw);
        const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(dim, num_classes);
        dirs = q;
    } else {
        for (int c = 0; c < num_classes; ++c) dirs.col(c) = raw.col(c).normalized();
    }

    const long total = std::accumulate(class_sizes.begin(), class_sizes.end(), 0L);
    TabularDataset ds;
    ds.num_classes = num_classes;
    ds.features.resize(total, dim);
    ds.labels.reserve(static_cast<std::size_t>(total));
    for (int j = 0; j < dim; ++j) ds.feature_names.push_back("f" + std::to_string(j));
    for (int c = 0; c < num_classes; ++c) ds.class_names.push_back("class" + std::to_string(c));
    Eigen::Index row = 0;
    for (int c = 0; c < num_classes; ++c) {
        const RowVectorXr centre = separation * dirs.col(c).transpose();
        for (long k = 0; k < class_sizes[static_cast<std::size_t>(c)]; ++k, ++row) {
            for (int j = 0; j < dim; ++j) ds.features(row, j) = centre(j) + normal(rng);
            ds.labels.push_back(c);
        }
    }
    return ds;
}

double tv_distance(std::span<const long> counts, std::span<const double> reference) {
    require_dim(static_cast<Eigen::Index>(counts.size()), static_cast<Eigen::Index>(reference.size()), "tv_distance",
                "class axis");
    const long n = std::accumulate(counts.begin(), counts.end(), 0L);
    if (n == 0) return 0.0;
    double s = 0.0;
    for (std::size_t c = 0; c < counts.size(); ++c) {
        s += std::abs(static_cast<double>(counts[c]) / static_cast<double>(n) - reference[c]);
    }
    return 0.5 * s;
}

}  // namespace sentinel
