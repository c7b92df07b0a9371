#include <filesystem>
#include <fstream>
#include <limits>
#include <set>

#include "test_util.hpp"

#include "sentinel/data.hpp"
#include "sentinel/errors.hpp"

using namespace sentinel;

namespace {

std::filesystem::path write_tmp(const std::string& name, const std::string& body) {
    const auto p = std::filesystem::temp_directory_path() / ("sentinel_test_" + name);
    std::ofstream(p) << body;
    return p;
}

std::vector<int> labels_of(const std::vector<long>& counts) {
    std::vector<int> y;
    for (std::size_t c = 0; c < counts.size(); ++c) y.insert(y.end(), counts[c], static_cast<int>(c));
    return y;
}

double centroid_accuracy(const TabularDataset& ds) {
    MatrixXr mu = MatrixXr::Zero(ds.num_classes, ds.dim());
    std::vector<long> n(ds.num_classes, 0);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        mu.row(ds.labels[i]) += ds.features.row(static_cast<Eigen::Index>(i));
        n[ds.labels[i]] += 1;
    }
    for (int c = 0; c < ds.num_classes; ++c) mu.row(c) /= static_cast<double>(n[c]);
    long ok = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        Eigen::Index best;
        (mu.rowwise() - ds.features.row(static_cast<Eigen::Index>(i))).rowwise().squaredNorm().minCoeff(&best);
        ok += best == ds.labels[i];
    }
    return static_cast<double>(ok) / static_cast<double>(ds.size());
}

}  // namespace

TEST_CASE("csv loading with text labels") {
    const auto p = write_tmp("text.csv", "a,label,b\n1,dos,2\n3,normal,4\n5,dos,6\n7,probe,8\n");
    const auto ds = load_csv(p, "label");
    CHECK(ds.size() == 4);
    CHECK(ds.dim() == 2);
    CHECK(ds.num_classes == 3);
    CHECK(ds.class_names == std::vector<std::string>{"dos", "normal", "probe"});
    CHECK(ds.labels == std::vector<int>{0, 1, 0, 2});
    CHECK(ds.feature_names == std::vector<std::string>{"a", "b"});
    CHECK(ds.features(3, 1) == 8.0);
}

TEST_CASE("csv loading with integer labels") {
    const auto p = write_tmp("int.csv", "x,y\n0.5,3\n1.5,1\n2.5,3\n");
    const auto ds = load_csv(p, "y");
    CHECK(ds.class_names == std::vector<std::string>{"1", "3"});
    CHECK(ds.labels == std::vector<int>{1, 0, 1});
}

TEST_CASE("csv errors") {
    const auto p = write_tmp("nocol.csv", "x,y\n1,2\n");
    try {
        load_csv(p, "attack");
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("attack") != std::string::npos);
    }
    CHECK_THROWS_AS(load_csv(write_tmp("hdr.csv", "x,label\n"), "label"), DataError);
    CHECK_THROWS_AS(load_csv(write_tmp("bad.csv", "x,label\nfoo,1\n"), "label"), DataError);
    CHECK_THROWS_AS(load_csv(write_tmp("ragged.csv", "x,label\n1,2,3\n"), "label"), DataError);
    CHECK_THROWS_AS(load_csv("/nonexistent/file.csv", "label"), DataError);
}

TEST_CASE("scaler") {
    const MatrixXr x = testutil::mat({{1, 7}, {3, 7}});
    const auto sc = fit_scaler(x);
    CHECK(sc.mean(0) == 2.0);
    CHECK(sc.stddev(0) == 1.0);
    const MatrixXr z = apply_scaler(sc, x);
    CHECK(z(0, 0) == -1.0);
    CHECK(z(1, 0) == 1.0);
    CHECK(z(0, 1) == 0.0);
    CHECK(z(1, 1) == 0.0);
    CHECK_THROWS_AS(apply_scaler(sc, MatrixXr(MatrixXr::Zero(1, 3))), DimensionError);
}

TEST_CASE("dirichlet partition basics") {
    const auto y = labels_of({300, 200, 100});
    auto rng = std::mt19937_64(1);
    const auto one = dirichlet_partition(y, 1, 0.5, rng);
    CHECK(one.client_sizes() == std::vector<long>{600});

    auto r1 = std::mt19937_64(9), r2 = std::mt19937_64(9);
    const auto a = dirichlet_partition(y, 5, 0.5, r1);
    const auto b = dirichlet_partition(y, 5, 0.5, r2);
    CHECK(a.assignment == b.assignment);

    long total = 0;
    std::set<std::size_t> seen;
    for (int c = 0; c < 5; ++c) {
        const auto idx = a.indices_of(c);
        CHECK(static_cast<long>(idx.size()) >= 10);
        total += static_cast<long>(idx.size());
        seen.insert(idx.begin(), idx.end());
    }
    CHECK(total == 600);
    CHECK(seen.size() == 600);
}

TEST_CASE("dirichlet with large alpha is near uniform per class") {
    const auto y = labels_of({1000, 500});
    auto rng = std::mt19937_64(3);
    const auto plan = dirichlet_partition(y, 10, 1e6, rng);
    for (int k = 0; k < 10; ++k) {
        std::vector<int> sub;
        for (auto i : plan.indices_of(k)) sub.push_back(y[i]);
        const auto cc = class_counts(sub, 2);
        CHECK(std::abs(cc[0] / 1000.0 - 0.1) <= 0.02 * 0.1 + 0.002);
        CHECK(std::abs(cc[1] / 500.0 - 0.1) <= 0.02 * 0.1 + 0.004);
    }
}

TEST_CASE("dirichlet infeasible minimum") {
    const auto y = labels_of({20, 5});
    auto rng = std::mt19937_64(3);
    CHECK_THROWS_AS(dirichlet_partition(y, 5, 1.0, rng, 10), PartitionError);
    CHECK_THROWS_AS(dirichlet_partition(y, 5, 0.0, rng, 1), std::invalid_argument);
}

TEST_CASE("iid partition") {
    auto rng = std::mt19937_64(5);
    const auto plan = iid_partition(103, 10, rng);
    const auto sz = plan.client_sizes();
    CHECK(*std::max_element(sz.begin(), sz.end()) - *std::min_element(sz.begin(), sz.end()) <= 1);
    CHECK(std::accumulate(sz.begin(), sz.end(), 0L) == 103);
}

TEST_CASE("stratified split") {
    TabularDataset ds;
    ds.num_classes = 3;
    ds.features = MatrixXr::Zero(11, 2);
    for (int i = 0; i < 11; ++i) ds.features(i, 0) = i;
    ds.labels = {0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 2};
    auto rng = std::mt19937_64(2);
    const auto [train, test] = split_train_test(ds, 0.8, rng);
    CHECK(train.size() + test.size() == 11);
    const auto ctr = class_counts(train), cte = class_counts(test);
    CHECK(ctr[2] == 1);
    CHECK(cte[2] == 0);
    CHECK(ctr[0] >= 1);
    CHECK(cte[0] >= 1);
    CHECK(ctr[1] >= 1);
    CHECK(cte[1] >= 1);
    std::set<double> a, b;
    for (std::size_t i = 0; i < train.size(); ++i) a.insert(train.features(static_cast<Eigen::Index>(i), 0));
    for (std::size_t i = 0; i < test.size(); ++i) b.insert(test.features(static_cast<Eigen::Index>(i), 0));
    for (double v : b) CHECK(a.count(v) == 0);
    CHECK(a.size() + b.size() == 11);

    TabularDataset ten = ds.subset(std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
    auto rng2 = std::mt19937_64(4);
    const auto [tr10, te10] = split_train_test(ten, 0.8, rng2);
    CHECK(tr10.size() == 8);
    CHECK(te10.size() == 2);
}

TEST_CASE("synthetic data") {
    const std::vector<long> sizes{80, 20, 10, 6};
    auto rng = std::mt19937_64(11);
    const auto ds = synth_imbalanced(4, sizes, 10, 3.0, rng);
    CHECK(ds.size() == 116);
    CHECK(ds.dim() == 10);
    CHECK(class_counts(ds) == sizes);
    ds.validate();

    auto r0 = std::mt19937_64(12), r10 = std::mt19937_64(12);
    const std::vector<long> big{500, 500, 500, 500};
    CHECK(centroid_accuracy(synth_imbalanced(4, big, 10, 0.0, r0)) < 0.4);
    CHECK(centroid_accuracy(synth_imbalanced(4, big, 10, 10.0, r10)) > 0.95);
}

TEST_CASE("class counts and tv distance") {
    const std::vector<int> y{0, 2, 2, 1, 2};
    CHECK(class_counts(y, 4) == std::vector<long>{1, 1, 3, 0});
    const std::vector<int> bad{0, 5};
    CHECK_THROWS(class_counts(bad, 3));
    const std::vector<long> h{5, 5};
    const std::vector<double> ref{0.5, 0.5}, skew{1.0, 0.0};
    CHECK(tv_distance(h, ref) == 0.0);
    CHECK_NEAR(tv_distance(h, skew), 0.5, 1e-15);
}
