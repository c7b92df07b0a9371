#include <algorithm>
#include <numeric>
#include <random>

#include "test_util.hpp"

#include "sentinel/losses.hpp"

using namespace sentinel;
using testutil::mat;

namespace {

ClassWeights ones(int c) { return ClassWeights::uniform(c); }

MatrixXr randn(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double s = 1.0) {
    std::normal_distribution<double> n(0.0, s);
    MatrixXr m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
    return m;
}

}  // namespace

TEST_CASE("class weights") {
    const std::vector<long> a{1, 1};
    const auto w1 = compute_class_weights(a);
    CHECK(w1.weights == std::vector<double>{1.0, 1.0});

    const std::vector<long> b{1, 5};
    const auto w2 = compute_class_weights(b);
    CHECK_NEAR(w2.weights[0], 1.666110740771866, 1e-9);
    CHECK_NEAR(w2.weights[1], 0.333889259228134, 1e-9);

    const std::vector<long> c{10, 1000};
    const auto w3 = compute_class_weights(c);
    CHECK_NEAR(w3.weights[0], 1.0, 1e-12);
    CHECK_NEAR(w3.weights[1], 1.0, 1e-12);

    const std::vector<long> d{0, 3, 7};
    const auto w4 = compute_class_weights(d);
    CHECK(w4.weights[0] == 1.0);
    CHECK_NEAR((w4.weights[1] + w4.weights[2]) / 2.0, 1.0, 1e-9);

    const std::vector<long> none{0, 0};
    CHECK_THROWS_AS(compute_class_weights(none), std::invalid_argument);
}

TEST_CASE("class weights of present classes have mean one") {
    std::mt19937_64 rng(4);
    std::uniform_int_distribution<long> n(0, 3000);
    for (int t = 0; t < 200; ++t) {
        std::vector<long> counts(5);
        for (auto& v : counts) v = n(rng);
        counts[0] = std::max<long>(counts[0], 1);
        const auto w = compute_class_weights(counts);
        double s = 0.0;
        int k = 0;
        for (std::size_t i = 0; i < counts.size(); ++i) {
            if (counts[i] > 0) {
                s += w.weights[i];
                ++k;
            }
        }
        CHECK_NEAR(s / k, 1.0, 1e-9);
    }
}

TEST_CASE("task loss") {
    const std::vector<int> y{0};
    const auto r = task_loss<double>(mat({{2, 0}}), mat({{0, 2}}), y, ones(2));
    CHECK_NEAR(r.value, 1.126928011042972, 1e-12);

    const auto same = task_loss<double>(mat({{2, 0}}), mat({{2, 0}}), y, ones(2));
    CHECK_NEAR(same.value, 0.126928011042972, 1e-12);
}

TEST_CASE("balanced loss with equal counts equals plain CE") {
    std::mt19937_64 rng(8);
    const std::vector<long> counts{50, 50, 50};
    const auto w = compute_class_weights(counts);
    for (int t = 0; t < 50; ++t) {
        const MatrixXr zt = randn(rng, 4, 3), zs = randn(rng, 4, 3);
        const std::vector<int> y{0, 1, 2, 1};
        const auto bal = task_loss<double>(zt, zs, y, w);
        const auto plain = task_loss<double>(zt, zs, y, ones(3));
        CHECK(std::abs(bal.value - plain.value) <= 1e-12);
    }
}

TEST_CASE("temperature schedule") {
    CHECK(temperature(0) == 3.0);
    CHECK_NEAR(temperature(20), 2.7075, 1e-12);
    CHECK_NEAR(temperature(50), 2.3213428125, 1e-12);
    CHECK(temperature(200) == temperature(50));
    double prev = temperature(0);
    for (double r = 0.5; r < 120; r += 0.5) {
        const double t = temperature(r);
        CHECK(t <= prev);
        CHECK(t >= 1.0);
        prev = t;
    }
}

TEST_CASE("agreement and confidence") {
    const auto a = agreement_confidence<double>(mat({{2, 0}}), mat({{0, 2}}), 1.0);
    CHECK(a.gamma == 0.0);
    CHECK_NEAR(a.delta, 0.775803492574376, 1e-12);

    const MatrixXr z = mat({{1, 2, 0}, {0, 0, 3}});
    CHECK(agreement_confidence<double>(z, z, 1.0).gamma == 1.0);
    CHECK_NEAR(agreement_confidence<double>(MatrixXr::Zero(3, 2), MatrixXr::Zero(3, 2), 2.0).delta, 0.25, 1e-15);
    // ties resolve to the lowest index on both sides
    CHECK(agreement_confidence<double>(mat({{1, 1}}), mat({{1, 0}}), 1.0).gamma == 1.0);

    const auto g = agreement_confidence<double>(mat({{2, 0}}), mat({{0, 2}}), 1.0, DeltaMode::GeometricMean);
    CHECK_NEAR(g.delta, 0.880797077977882, 1e-12);
}

TEST_CASE("kd loss closed form") {
    const std::vector<int> y{0};
    const double delta = 0.775803492574376;
    const auto r = kd_loss<double>(mat({{2, 0}}), mat({{0, 2}}), y, ones(2), 1.0, 0.0, delta);
    CHECK_NEAR(r.kl_student_teacher, 1.523188311911530, 1e-12);
    CHECK_NEAR(r.kl_teacher_student, 1.523188311911530, 1e-12);
    CHECK_NEAR(r.value, 2.704883124140962, 1e-12);
}

TEST_CASE("kd loss zeros") {
    std::mt19937_64 rng(2);
    const std::vector<int> y{0, 1, 1};
    for (int t = 0; t < 50; ++t) {
        const MatrixXr z = randn(rng, 3, 2, 3.0);
        const auto same = kd_loss<double>(z, z, y, ones(2), 2.0, 0.3, 0.7);
        CHECK(same.value == 0.0);
        const auto off = kd_loss<double>(z, randn(rng, 3, 2), y, ones(2), 2.0, 1.0, 0.0);
        CHECK(off.value == 0.0);
        CHECK(off.grad_student.isZero(0.0));
        CHECK(off.grad_teacher.isZero(0.0));
    }
}

TEST_CASE("kd routing: gamma=1 silences the student, delta=0 silences the teacher") {
    std::mt19937_64 rng(6);
    const std::vector<int> y{0, 2};
    for (int t = 0; t < 50; ++t) {
        const MatrixXr zt = randn(rng, 2, 3, 2.0), zs = randn(rng, 2, 3, 2.0);
        const auto only_teacher = kd_loss<double>(zt, zs, y, ones(3), 1.7, 1.0, 0.6);
        CHECK(only_teacher.grad_student.cwiseAbs().maxCoeff() == 0.0);
        const auto only_student = kd_loss<double>(zt, zs, y, ones(3), 1.7, 0.2, 0.0);
        CHECK(only_student.grad_teacher.cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("nearest matching") {
    const auto m = match_nearest<double>(mat({{1, 0}}), mat({{0, 0}, {1, 1}}));
    CHECK(m.index == std::vector<int>{0});
    const MatrixXr h = mat({{1, 2}, {3, 4}, {-1, 0}});
    CHECK(match_nearest<double>(h, h).index == std::vector<int>{0, 1, 2});
    CHECK(match_nearest<double>(h, mat({{5, 5}})).index == std::vector<int>{0, 0, 0});
    CHECK(match_nearest<double>(MatrixXr(0, 2), h).index.empty());
}

TEST_CASE("geometric loss") {
    CHECK(geometric_loss<double>(mat({{1, 0}}), mat({{0, 0}})).value == 1.0);
    const MatrixXr a = mat({{1, 2}, {3, -1}}), b = mat({{0, 1}, {2, 2}});
    CHECK(geometric_loss<double>(a, a).value == 0.0);
    CHECK_NEAR(geometric_loss<double>(3.0 * a, 3.0 * b).value, 9.0 * geometric_loss<double>(a, b).value, 1e-12);
}

TEST_CASE("directional loss") {
    CHECK_NEAR(directional_loss<double>(mat({{1, 2}}), mat({{2, 4}})).value, 0.0, 1e-12);
    CHECK_NEAR(directional_loss<double>(mat({{1, 0}}), mat({{0, 3}})).value, 1.0, 1e-12);
    CHECK_NEAR(directional_loss<double>(mat({{1, 1}}), mat({{-2, -2}})).value, 2.0, 1e-12);
}

TEST_CASE("contrastive loss") {
    const MatrixXr empty(0, 2);
    CHECK(contrastive_loss<double>(mat({{0.3, 0.4}}), mat({{1, 2}}), empty, 0.1).value == 0.0);
    const MatrixXr e = mat({{1, 0}, {0, 1}});
    CHECK_NEAR(contrastive_loss<double>(e, e, empty, 0.1).value, 4.5398899216865e-5, 1e-9);

    MemoryBank<double> bank(4);
    CHECK(contrastive_loss<double>(e, e, bank, 0.1).value == contrastive_loss<double>(e, e, empty, 0.1).value);
    bank.push(mat({{1, 1}}));
    CHECK(contrastive_loss<double>(e, e, bank, 0.1).value > contrastive_loss<double>(e, e, empty, 0.1).value);

    std::mt19937_64 rng(12);
    for (int t = 0; t < 100; ++t) {
        CHECK(contrastive_loss<double>(randn(rng, 3, 4), randn(rng, 3, 4), randn(rng, 2, 4), 0.2).value >= 0.0);
    }
    CHECK_THROWS_AS(contrastive_loss<double>(e, e, empty, 0.0), std::invalid_argument);
}

TEST_CASE("alignment loss composite and score") {
    const MatrixXr empty(0, 3);
    const MatrixXr h = mat({{1, 2, 0.5}, {0.2, -1, 3}});
    const auto same = alignment_loss<double>(h, h, empty, AlignConfig{});
    CHECK(same.geometric == 0.0);
    CHECK_NEAR(same.directional, 0.0, 1e-12);
    CHECK(same.structural < 1e-4);
    CHECK_NEAR(same.score, 1.0, 1e-12);

    const auto orth = alignment_loss<double>(mat({{1, 0, 0}}), mat({{0, 1, 0}}), empty, AlignConfig{});
    CHECK_NEAR(orth.score, 0.5, 1e-12);

    std::mt19937_64 rng(21);
    for (int t = 0; t < 50; ++t) {
        const MatrixXr a = randn(rng, 4, 3), b = randn(rng, 4, 3), bank = randn(rng, 3, 3);
        const AlignConfig cfg;
        const auto r = alignment_loss<double>(a, b, bank, cfg);
        CHECK(std::abs(r.value - (r.geometric + cfg.lambda_cos * r.directional + cfg.lambda_contrast * r.structural)) <=
              1e-12);
        CHECK(r.score >= 0.0);
        CHECK(r.score <= 1.0);
    }
}

TEST_CASE("alignment geometric and directional parts ignore student row order") {
    std::mt19937_64 rng(22);
    const MatrixXr empty(0, 3);
    for (int t = 0; t < 50; ++t) {
        const MatrixXr a = randn(rng, 4, 3), b = randn(rng, 4, 3);
        std::vector<int> perm{0, 1, 2, 3};
        std::shuffle(perm.begin(), perm.end(), rng);
        MatrixXr bp(4, 3);
        for (int i = 0; i < 4; ++i) bp.row(i) = b.row(perm[i]);
        const auto r1 = alignment_loss<double>(a, b, empty, AlignConfig{});
        const auto r2 = alignment_loss<double>(a, bp, empty, AlignConfig{});
        CHECK_NEAR(r1.geometric, r2.geometric, 1e-12);
        CHECK_NEAR(r1.directional, r2.directional, 1e-12);
        CHECK_NEAR(r1.score, r2.score, 1e-12);
    }
}

TEST_CASE("adaptive weights") {
    AdaptiveWeights st;
    const auto r0 = update_adaptive_weights(st, 0.5, 1.0, 0);
    CHECK_NEAR(0.9 * 0.2 + 0.1 * 0.5, 0.23, 1e-15);
    CHECK(r0.lambda_kd == 0.18);
    CHECK(AdaptiveWeights::ema_alpha(7) == 0.7);
    CHECK_NEAR(AdaptiveWeights::ema_alpha(3), 0.81, 1e-15);

    AdaptiveWeights s;
    for (int i = 0; i < 500; ++i) s = update_adaptive_weights(s, 1.0, 1.0, 20);
    CHECK(s.lambda_kd == AdaptiveWeights::kKdLower);
    CHECK(s.lambda_align == AdaptiveWeights::kAlignLower);

    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> rr(0, 40);
    AdaptiveWeights q;
    for (int i = 0; i < 2000; ++i) {
        const int r = rr(rng);
        q = update_adaptive_weights(q, u(rng), u(rng), r);
        CHECK(q.lambda_kd >= 0.03);
        CHECK(q.lambda_kd <= std::min(0.35, 0.18 + 0.02 * r));
        CHECK(q.lambda_align >= 0.01);
        CHECK(q.lambda_align <= std::min(0.12, 0.06 + 0.01 * r));
    }
}

TEST_CASE("total loss composition") {
    std::mt19937_64 rng(41);
    const MatrixXr zt = randn(rng, 3, 2), zs = randn(rng, 3, 2);
    const std::vector<int> y{0, 1, 0};
    const auto task = task_loss<double>(zt, zs, y, ones(2));
    AdaptiveWeights w;
    w.lambda_kd = 0.03;
    w.lambda_align = 0.01;
    const auto only = total_loss<double>(task, nullptr, nullptr, w);
    CHECK(only.value == task.value);
    CHECK(only.grad_z_teacher == task.grad_teacher);

    auto kd = kd_loss<double>(zt, zs, y, ones(2), 2.0, 0.0, 0.5);
    const auto with = total_loss<double>(task, &kd, nullptr, w);
    kd.value *= 2.0;
    const auto doubled = total_loss<double>(task, &kd, nullptr, w);
    CHECK_NEAR(doubled.value - task.value, 2.0 * (with.value - task.value), 1e-12);

    const MatrixXr h = randn(rng, 3, 4), hs = randn(rng, 3, 4);
    const auto al = alignment_loss<double>(h, hs, MatrixXr(0, 4), AlignConfig{});
    const auto full = total_loss<double>(task, &kd, &al, w);
    CHECK_NEAR(full.value, task.value + 0.03 * kd.value + 0.01 * al.value, 1e-12);
}

TEST_CASE("memory bank keeps the newest rows in order") {
    MemoryBank<double> bank(3);
    CHECK(bank.empty());
    bank.push(mat({{1, 1}, {2, 2}}));
    CHECK(bank.rows() == mat({{1, 1}, {2, 2}}));
    bank.push(mat({{3, 3}, {4, 4}}));
    CHECK(bank.size() == 3);
    CHECK(bank.rows() == mat({{2, 2}, {3, 3}, {4, 4}}));
    bank.push(MatrixXr(0, 2));
    CHECK(bank.size() == 3);
    CHECK_THROWS_AS(bank.push(mat({{1, 2, 3}})), DimensionError);
    MemoryBank<double> none(0);
    none.push(mat({{1, 2}}));
    CHECK(none.empty());
}
