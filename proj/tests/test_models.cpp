#include <random>

#include "test_util.hpp"

#include "sentinel/client.hpp"
#include "sentinel/models.hpp"
#include "sentinel/state_io.hpp"

using namespace sentinel;
using testutil::mat;

namespace {

std::vector<std::pair<int, int>> shapes(const MlpSpec& s) { return s.layer_shapes(); }

}  // namespace

TEST_CASE("Sentinel-I architecture") {
    const auto v = build_variant(Variant::SentinelI, 10, 5);
    const std::vector<std::pair<int, int>> want{{10, 64}, {64, 32}, {32, 16}, {16, 5}};
    CHECK(shapes(v.teacher) == want);
    CHECK(shapes(v.student) == want);
    CHECK(v.teacher.feature_dim() == 32);
    CHECK(v.aligner_in == 32);
    CHECK(v.aligner_out == 32);
}

TEST_CASE("Sentinel-II architecture") {
    const auto v = build_variant(Variant::SentinelII, 10, 5);
    CHECK(shapes(v.teacher) == std::vector<std::pair<int, int>>{{10, 128}, {128, 64}, {64, 32}, {32, 5}});
    CHECK(shapes(v.student) == std::vector<std::pair<int, int>>{{10, 64}, {64, 32}, {32, 16}, {16, 5}});
    CHECK(v.aligner_in == 64);
    CHECK(v.aligner_out == 32);
}

TEST_CASE("parameter counts in closed form") {
    // 10*64+64 + 64*32+32 + 32*16+16 + 16*5+5
    CHECK(build_variant(Variant::SentinelI, 10, 5).student.parameter_count() == 3397);
    // 10*128+128 + 128*64+64 + 64*32+32 + 32*5+5
    const auto v2 = build_variant(Variant::SentinelII, 10, 5);
    CHECK(v2.teacher.parameter_count() == 11909);
    CHECK(v2.student.parameter_count() < v2.teacher.parameter_count());
    for (int d : {1, 7, 40}) {
        for (int c : {2, 4, 9}) {
            const auto v = build_variant(Variant::SentinelII, d, c);
            CHECK(v.student.parameter_count() < v.teacher.parameter_count());
            std::mt19937_64 rng(1);
            CHECK(init_params<double>(v.teacher, rng).parameter_count() == v.teacher.parameter_count());
        }
    }
}

TEST_CASE("variant names") {
    CHECK(parse_variant("sentinel-1") == Variant::SentinelI);
    CHECK(parse_variant("sentinel-2") == Variant::SentinelII);
    CHECK(to_string(Variant::SentinelII) == "sentinel-2");
    CHECK_THROWS_AS(parse_variant("sentinel-3"), std::invalid_argument);
    CHECK_THROWS_AS(build_variant(Variant::SentinelI, 0, 3), std::invalid_argument);
}

TEST_CASE("init is seeded, fan-in bounded, zero bias") {
    const MlpSpec spec{6, {8, 4}, {3}, 2};
    std::mt19937_64 a(42), b(42);
    const auto m1 = init_params<double>(spec, a);
    const auto m2 = init_params<double>(spec, b);
    CHECK(flatten(m1) == flatten(m2));
    for (const auto* l : {&m1.feature_layers, &m1.head_layers}) {
        for (const auto& d : *l) {
            CHECK(d.bias.value.isZero());
            const double bound = 1.0 / std::sqrt(static_cast<double>(d.weight.value.rows()));
            CHECK(d.weight.value.cwiseAbs().maxCoeff() <= bound);
        }
    }
}

TEST_CASE("zero params give zero features and logits; empty batch keeps width") {
    const MlpSpec spec{3, {4}, {2}, 3};
    std::mt19937_64 rng(1);
    auto m = init_params<double>(spec, rng);
    for (auto* p : m.parameters()) p->value.setZero();
    const MatrixXr x = MatrixXr::Random(5, 3);
    CHECK(forward_features(m, x).isZero());
    CHECK(forward_head(m, forward_features(m, x)).isZero());
    const MatrixXr h0 = forward_features(m, MatrixXr(0, 3));
    CHECK(h0.rows() == 0);
    CHECK(h0.cols() == 4);
    CHECK_THROWS_AS(forward_features(m, MatrixXr(MatrixXr::Zero(2, 4))), DimensionError);
    CHECK_THROWS_AS(forward_head(m, MatrixXr(MatrixXr::Zero(2, 3))), DimensionError);
}

TEST_CASE("identity single layer on non-negative input") {
    const MlpSpec spec{3, {3}, {3}, 3};
    std::mt19937_64 rng(1);
    auto m = init_params<double>(spec, rng);
    m.feature_layers[0].weight.value = MatrixXr::Identity(3, 3);
    const MatrixXr x = mat({{0.5, 0, 2}, {1, 3, 0}});
    CHECK(forward_features(m, x) == x);

    auto a = init_aligner<double>(3, 3, rng);
    a.layer.weight.value = MatrixXr::Identity(3, 3);
    CHECK(aligner_forward(a, x) == x);
    CHECK(aligner_forward(a, MatrixXr(0, 3)).rows() == 0);
    CHECK_THROWS_AS(aligner_forward(a, MatrixXr(MatrixXr::Zero(1, 2))), DimensionError);
}

TEST_CASE("split forward equals monolithic forward") {
    const MlpSpec spec{5, {7, 6}, {4}, 3};
    std::mt19937_64 rng(11);
    const auto m = init_params<double>(spec, rng);
    const MatrixXr x = MatrixXr::Random(4, 5);
    MatrixXr y = x;
    std::vector<const Dense<double>*> all;
    for (const auto& l : m.feature_layers) all.push_back(&l);
    for (const auto& l : m.head_layers) all.push_back(&l);
    for (std::size_t k = 0; k < all.size(); ++k) {
        y = affine_forward<double>(y, all[k]->weight.value, all[k]->bias.value);
        if (k + 1 < all.size()) y = relu<double>(y);
    }
    CHECK(testutil::max_abs_diff(forward_head(m, forward_features(m, x)), y) <= 1e-12);
}

TEST_CASE("state dict names, round trip and shape errors") {
    const MlpSpec spec{4, {5, 3}, {2}, 2};
    std::mt19937_64 rng(2);
    const auto m = init_params<double>(spec, rng);
    const auto sd = state_dict(m);
    REQUIRE(sd.size() == 8);
    CHECK(sd[0].name == "features.0.weight");
    CHECK(sd[3].name == "features.1.bias");
    CHECK(sd[7].name == "head.1.bias");
    CHECK(sd[0].rows == 4);
    CHECK(sd[0].cols == 5);

    auto other = init_params<double>(spec, rng);
    load_state_dict(other, state_dict_from_json(state_dict_to_json(sd)));
    CHECK(flatten(other) == flatten(m));

    auto wrong = init_params<double>(MlpSpec{4, {6, 3}, {2}, 2}, rng);
    CHECK_THROWS_AS(load_state_dict(wrong, sd), DimensionError);
}

TEST_CASE("flatten and unflatten are inverse") {
    const MlpSpec spec{3, {4}, {2}, 2};
    std::mt19937_64 rng(3);
    auto m = init_params<double>(spec, rng);
    const VectorXr f = VectorXr::LinSpaced(m.parameter_count(), 0.0, 1.0);
    unflatten(m, f);
    CHECK(flatten(m) == f);
    CHECK(m.feature_layers[0].weight.value(0, 1) == f(1));
    CHECK_THROWS_AS(unflatten(m, VectorXr(VectorXr::Zero(3))), DimensionError);
}

TEST_CASE("alignment-only step leaves teacher feature gradients exactly zero") {
    const VariantSpec arch = build_variant(Variant::SentinelII, 6, 3);
    TabularDataset train;
    train.num_classes = 3;
    train.features = MatrixXr::Random(20, 6);
    for (int i = 0; i < 20; ++i) train.labels.push_back(i % 3);
    ClientConfig cfg;
    cfg.use_kd = false;
    ClientState st = make_client(0, arch, train, TabularDataset{}, cfg, 5);
    // with the task term removed only the alignment path remains
    const MatrixXr x = train.features.topRows(8);
    const std::vector<int> y(train.labels.begin(), train.labels.begin() + 8);

    ClientConfig off = cfg;
    off.use_align = false;
    ClientState a = st, b = st;
    compute_batch_gradients(a, x, y, 0, cfg);
    compute_batch_gradients(b, x, y, 0, off);
    for (std::size_t k = 0; k < a.teacher.feature_layers.size(); ++k) {
        CHECK(a.teacher.feature_layers[k].weight.grad == b.teacher.feature_layers[k].weight.grad);
        CHECK(a.teacher.feature_layers[k].bias.grad == b.teacher.feature_layers[k].bias.grad);
    }
    CHECK(!a.aligner.layer.weight.grad.isZero());
}
