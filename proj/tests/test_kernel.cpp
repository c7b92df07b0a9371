#include <random>

#include "test_util.hpp"

#include "sentinel/kernel.hpp"
#include "sentinel/optim.hpp"

using namespace sentinel;
using testutil::mat;

TEST_CASE("affine forward examples") {
    CHECK(affine_forward<double>(mat({{1, 2}}), mat({{1, 0}, {0, 1}}), mat({{0, 0}})) == mat({{1, 2}}));
    CHECK(affine_forward<double>(mat({{1, 1}}), mat({{2, 3}, {4, 5}}), mat({{1, 1}})) == mat({{7, 9}}));
}

TEST_CASE("affine backward of sum gives batch-count bias gradient") {
    const MatrixXr x = MatrixXr::Random(3, 2);
    const auto g = affine_backward<double>(x, MatrixXr::Random(2, 4), MatrixXr::Ones(3, 4));
    CHECK(g.dbias == MatrixXr::Constant(1, 4, 3.0));
}

TEST_CASE("affine shape errors name the axis") {
    CHECK_THROWS_AS(affine_forward<double>(mat({{1, 2, 3}}), mat({{1, 0}, {0, 1}}), mat({{0, 0}})), DimensionError);
    try {
        affine_forward<double>(mat({{1, 2, 3}}), mat({{1, 0}, {0, 1}}), mat({{0, 0}}));
    } catch (const DimensionError& e) {
        CHECK(std::string(e.what()).find("axis") != std::string::npos);
    }
}

TEST_CASE("relu and subgradient at zero") {
    CHECK(relu<double>(mat({{-1, 0, 2}})) == mat({{0, 0, 2}}));
    CHECK(relu_backward<double>(mat({{-1, 0, 2}}), mat({{1, 1, 1}})) == mat({{0, 0, 1}}));
    CHECK(relu<double>(mat({{-3, -2}})).isZero());
}

TEST_CASE("softmax with temperature") {
    const MatrixXr z = mat({{2, 0}});
    const MatrixXr p1 = softmax_with_temperature<double>(z, 1.0);
    CHECK_NEAR(p1(0, 0), 0.880797077977882, 1e-12);
    CHECK_NEAR(p1(0, 1), 0.119202922022118, 1e-12);
    const MatrixXr p2 = softmax_with_temperature<double>(z, 2.0);
    CHECK_NEAR(p2(0, 0), 0.731058578630005, 1e-12);
    CHECK_NEAR(p2(0, 1), 0.268941421369995, 1e-12);
    const MatrixXr u = softmax_with_temperature<double>(MatrixXr::Constant(2, 5, 3.0), 1.5);
    CHECK(testutil::max_abs_diff(u, MatrixXr::Constant(2, 5, 0.2)) < 1e-15);
    CHECK_THROWS_AS(softmax_with_temperature<double>(z, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(softmax_with_temperature<double>(z, -1.0), std::invalid_argument);
}

TEST_CASE("softmax rows sum to one and ignore row shifts") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n(0.0, 10.0);
    for (int t = 0; t < 200; ++t) {
        MatrixXr z(3, 4);
        for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = n(rng);
        const MatrixXr p = softmax_with_temperature<double>(z, 0.7);
        CHECK((p.rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-9);
        MatrixXr shifted = z;
        shifted.row(1).array() += 123.0;
        CHECK(testutil::max_abs_diff(softmax_with_temperature<double>(shifted, 0.7), p) <= 1e-9);
    }
}

TEST_CASE("weighted cross entropy") {
    const std::vector<int> y4{0, 1, 2, 3};
    const std::vector<double> ones4(4, 1.0);
    CHECK_NEAR(weighted_cross_entropy<double>(MatrixXr::Zero(4, 4), y4, ones4).value, std::log(4.0), 1e-12);

    const std::vector<int> y{0};
    const auto r = weighted_cross_entropy<double>(mat({{2, 0}}), y, std::vector<double>{1, 1});
    CHECK_NEAR(r.value, 0.126928011042972, 1e-12);

    const auto r2 = weighted_cross_entropy<double>(mat({{2, 0}}), y, std::vector<double>{2, 2});
    CHECK(r2.value == 2.0 * r.value);
    CHECK(r2.grad == 2.0 * r.grad);

    CHECK_THROWS_AS(weighted_cross_entropy<double>(mat({{2, 0}}), std::vector<int>{2}, std::vector<double>{1, 1}),
                    std::out_of_range);
}

TEST_CASE("kl divergence") {
    const MatrixXr p = mat({{0.3, 0.7}});
    CHECK(kl_divergence<double>(p, p) == 0.0);
    CHECK_NEAR(kl_divergence<double>(mat({{1, 0}}), mat({{0.5, 0.5}})), std::log(2.0), 1e-12);
    CHECK_THROWS_AS(kl_divergence<double>(mat({{-0.1, 1.1}}), p), std::invalid_argument);

    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 200; ++t) {
        MatrixXr a(2, 3), b(2, 3);
        for (Eigen::Index i = 0; i < a.size(); ++i) {
            a.data()[i] = u(rng);
            b.data()[i] = u(rng);
        }
        for (int i = 0; i < 2; ++i) {
            a.row(i) /= a.row(i).sum();
            b.row(i) /= b.row(i).sum();
        }
        CHECK(kl_divergence<double>(a, b) >= 0.0);
    }
}

TEST_CASE("l2 normalize rows") {
    CHECK(testutil::max_abs_diff(l2_normalize_rows<double>(mat({{3, 4}})), mat({{0.6, 0.8}})) < 1e-8);
    CHECK(l2_normalize_rows<double>(mat({{0, 0}})) == mat({{0, 0}}));
    CHECK(testutil::max_abs_diff(l2_normalize_rows<double>(mat({{0.6, 0.8}})), mat({{0.6, 0.8}})) < 1e-7);
}

TEST_CASE("adamw first step") {
    ParamTensor<double> p(MatrixXr::Constant(1, 1, 1.0));
    p.grad(0, 0) = 0.3;
    AdamWState<double> st(1, 1, AdamWConfig{});
    adamw_step(p, st);
    CHECK_NEAR(p.value(0, 0), 0.995000000166667, 1e-12);
    CHECK(st.step_count == 1);
    CHECK((st.second_moment.array() >= 0).all());
}

TEST_CASE("adamw zero gradient without decay leaves value") {
    ParamTensor<double> p(MatrixXr::Constant(2, 2, 0.7));
    AdamWState<double> st(2, 2, AdamWConfig{});
    adamw_step(p, st);
    CHECK(p.value == MatrixXr::Constant(2, 2, 0.7));
}

TEST_CASE("adamw with wd 0 matches a hand Adam loop and is bit-deterministic") {
    const double grads[] = {0.3, -1.2, 0.05, 2.0};
    ParamTensor<double> a(MatrixXr::Constant(1, 1, 1.0)), b(MatrixXr::Constant(1, 1, 1.0));
    AdamWState<double> sa(1, 1, AdamWConfig{}), sb(1, 1, AdamWConfig{});
    double x = 1.0, m = 0.0, v = 0.0;
    for (int t = 1; t <= 4; ++t) {
        const double g = grads[t - 1];
        a.grad(0, 0) = g;
        b.grad(0, 0) = g;
        adamw_step(a, sa);
        adamw_step(b, sb);
        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        x -= 0.005 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    }
    CHECK(a.value(0, 0) == b.value(0, 0));
    CHECK_NEAR(a.value(0, 0), x, 1e-15);
}

TEST_CASE("adamw decoupled weight decay") {
    ParamTensor<double> p(MatrixXr::Constant(1, 1, 2.0));
    AdamWConfig cfg;
    cfg.weight_decay = 0.1;
    AdamWState<double> st(1, 1, cfg);
    adamw_step(p, st);
    CHECK_NEAR(p.value(0, 0), 2.0 - 0.005 * 0.1 * 2.0, 1e-15);
}

TEST_CASE("adamw rejects non-finite gradients by name") {
    ParamTensor<double> p(MatrixXr::Constant(1, 1, 1.0));
    p.grad(0, 0) = std::nan("");
    AdamWState<double> st(1, 1, AdamWConfig{});
    try {
        adamw_step(p, st, "student[3]");
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("student[3]") != std::string::npos);
    }
}

TEST_CASE("clip grad norm") {
    ParamTensor<double> p(MatrixXr::Zero(1, 2));
    p.grad = mat({{3, 4}});
    std::vector<ParamTensor<double>*> ps{&p};
    const double s = clip_grad_norm<double>(ps, 1.0);
    CHECK_NEAR(s, 0.2, 1e-8);
    CHECK(testutil::max_abs_diff(p.grad, mat({{0.6, 0.8}})) < 1e-8);

    p.grad = mat({{0.1, 0.2}});
    CHECK(clip_grad_norm<double>(ps, 1.0) == 1.0);
    CHECK(p.grad == mat({{0.1, 0.2}}));
}

TEST_CASE("clip scale lies in (0, 1]") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n(0.0, 5.0);
    for (int t = 0; t < 100; ++t) {
        ParamTensor<double> a(MatrixXr::Zero(2, 3)), b(MatrixXr::Zero(1, 3));
        for (Eigen::Index i = 0; i < 6; ++i) a.grad.data()[i] = n(rng);
        for (Eigen::Index i = 0; i < 3; ++i) b.grad.data()[i] = n(rng);
        std::vector<ParamTensor<double>*> ps{&a, &b};
        const double s = clip_grad_norm<double>(ps, 1.0);
        CHECK(s > 0.0);
        CHECK(s <= 1.0);
        CHECK(std::sqrt(a.grad.squaredNorm() + b.grad.squaredNorm()) <= 1.0 + 1e-12);
    }
}

TEST_CASE("exponential lr schedule") {
    ExponentialLr s{0.01, 0.5, 0};
    CHECK(s.current() == 0.01);
    CHECK(s.step() == 0.005);
    ExponentialLr flat{0.005, 1.0, 0};
    flat.step();
    CHECK(flat.current() == 0.005);
}
