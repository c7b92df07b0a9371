#include "sentinel/gradcheck.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <random>

#include "sentinel/client.hpp"
#include "sentinel/kernel.hpp"
#include "sentinel/losses.hpp"
#include "sentinel/models.hpp"

namespace sentinel {

VectorXr numeric_gradient(const std::vector<MatrixXr*>& inputs, const std::function<ProbeValue()>& f, double step) {
    Eigen::Index total = 0;
    for (const auto* m : inputs) total += m->size();
    VectorXr g(total);
    const std::uint64_t base = f().signature;
    Eigen::Index k = 0;
    for (auto* m : inputs) {
        for (Eigen::Index i = 0; i < m->size(); ++i, ++k) {
            double& x = m->data()[i];
            const double orig = x;
            x = orig + step;
            const auto plus = f();
            x = orig - step;
            const auto minus = f();
            x = orig;
            g(k) = (plus.signature == base && minus.signature == base)
                       ? (plus.value - minus.value) / (2.0 * step)
                       : std::numeric_limits<double>::quiet_NaN();
        }
    }
    return g;
}

double relative_error(const VectorXr& analytic, const VectorXr& numeric) {
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (Eigen::Index i = 0; i < numeric.size(); ++i) {
        if (std::isnan(numeric(i))) continue;
        diff += (analytic(i) - numeric(i)) * (analytic(i) - numeric(i));
        na += analytic(i) * analytic(i);
        nn += numeric(i) * numeric(i);
    }
    return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), 1e-6});
}

namespace {

class Hasher {
public:
    void add(std::uint64_t v) {
        h_ ^= v + 0x9e3779b97f4a7c15ULL + (h_ << 6) + (h_ >> 2);
    }
    void add_sign_pattern(const MatrixXr& m) {
        for (Eigen::Index i = 0; i < m.size(); ++i) add(m.data()[i] > 0.0 ? 1 : 2);
    }
    void add_indices(const std::vector<int>& idx) {
        for (int v : idx) add(static_cast<std::uint64_t>(v) + 11);
    }
    std::uint64_t value() const { return h_; }

private:
    std::uint64_t h_ = 1469598103934665603ULL;
};

struct Gen {
    std::mt19937_64 rng;
    int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
    MatrixXr normal(Eigen::Index r, Eigen::Index c, double scale = 1.0) {
        std::normal_distribution<double> n(0.0, scale);
        MatrixXr m(r, c);
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
        return m;
    }
    // Entries bounded away from zero so ReLU probes stay on one piece.
    MatrixXr away_from_zero(Eigen::Index r, Eigen::Index c) {
        MatrixXr m = normal(r, c);
        for (Eigen::Index i = 0; i < m.size(); ++i) {
            if (std::abs(m.data()[i]) < 1e-2) m.data()[i] = m.data()[i] < 0 ? -0.5 : 0.5;
        }
        return m;
    }
    // Rows with norm >= 0.5: l2 normalisation is nearly a step near the origin,
    // and a single column normalises to a constant.
    MatrixXr rows_away_from_origin(Eigen::Index r, Eigen::Index c) {
        MatrixXr m = normal(r, c);
        for (Eigen::Index i = 0; i < r; ++i) {
            while (m.row(i).norm() < 0.5) m.row(i) = normal(1, c);
        }
        return m;
    }
    MatrixXr probabilities(Eigen::Index r, Eigen::Index c) {
        MatrixXr m(r, c);
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(0.05, 1.0);
        for (Eigen::Index i = 0; i < r; ++i) m.row(i) /= m.row(i).sum();
        return m;
    }
    std::vector<int> labels(Eigen::Index n, int c) {
        std::vector<int> y(static_cast<std::size_t>(n));
        for (auto& v : y) v = uniform_int(0, c - 1);
        return y;
    }
    std::vector<double> weights(int c) {
        std::vector<double> w(static_cast<std::size_t>(c));
        for (auto& v : w) v = uniform(0.2, 5.0);
        return w;
    }
};

VectorXr concat(std::initializer_list<const MatrixXr*> parts) {
    Eigen::Index n = 0;
    for (const auto* p : parts) n += p->size();
    VectorXr v(n);
    Eigen::Index off = 0;
    for (const auto* p : parts) {
        v.segment(off, p->size()) = Eigen::Map<const VectorXr>(p->data(), p->size());
        off += p->size();
    }
    return v;
}

double scalar_probe(const MatrixXr& y, const MatrixXr& c) { return y.cwiseProduct(c).sum(); }

class Suite {
public:
    explicit Suite(const GradcheckOptions& o) : opts_(o) { gen_.rng.seed(o.seed); }

    template <typename TrialFn>
    void run(const std::string& name, TrialFn&& trial) {
        GradcheckResult r;
        r.name = name;
        for (int t = 0; t < opts_.trials; ++t) {
            auto [analytic, numeric] = trial(gen_);
            if (opts_.tamper) opts_.tamper(name, analytic);
            for (Eigen::Index i = 0; i < numeric.size(); ++i) {
                if (std::isnan(numeric(i))) ++r.skipped_entries;
            }
            r.max_rel_error = std::max(r.max_rel_error, relative_error(analytic, numeric));
            ++r.trials;
        }
        r.passed = r.max_rel_error < opts_.tolerance && r.trials > 0;
        results_.push_back(std::move(r));
    }

    double h() const { return opts_.step; }
    std::vector<GradcheckResult> take() { return std::move(results_); }

private:
    GradcheckOptions opts_;
    Gen gen_;
    std::vector<GradcheckResult> results_;
};

using Pair = std::pair<VectorXr, VectorXr>;

// A small teacher/student/aligner client with its own data, used to check the
// gradient of the whole routed objective with respect to every parameter.
std::optional<Pair> client_step_trial(Gen& g, double h) {
    const int d = g.uniform_int(2, 5);
    const int c = g.uniform_int(2, 4);
    const Eigen::Index b = g.uniform_int(2, 4);
    VariantSpec arch;
    arch.teacher = MlpSpec{d, {6, 5}, {4}, c};
    arch.student = MlpSpec{d, {5, 4}, {3}, c};
    arch.aligner_in = 5;
    arch.aligner_out = 4;

    TabularDataset train;
    train.num_classes = c;
    train.features = g.normal(8, d);
    train.labels = g.labels(8, c);
    ClientConfig cfg;
    cfg.delta_mode = g.uniform(0, 1) < 0.5 ? DeltaMode::MeanProduct : DeltaMode::GeometricMean;
    ClientState st = make_client(0, arch, train, TabularDataset{}, cfg, g.rng());
    // larger biases keep ReLU pre-activations away from zero more often
    for (auto* m : {&st.teacher, &st.student}) {
        for (auto* p : m->parameters()) {
            if (p->value.rows() == 1) p->value = g.normal(1, p->value.cols(), 0.3);
        }
    }
    st.aligner.layer.bias.value = g.normal(1, 4, 0.3);
    bank_push(st.bank_student, g.normal(g.uniform_int(0, 5), 4).cwiseAbs());
    st.weights.lambda_kd = g.uniform(0.03, 0.35);
    st.weights.lambda_align = g.uniform(0.01, 0.12);
    const int round = g.uniform_int(0, 60);

    const MatrixXr x = g.normal(b, d);
    const std::vector<int> y = g.labels(b, c);

    const MatrixXr bank0 = st.bank_student.rows();
    const MatrixXr h_t0 = forward_features(st.teacher, x);
    const MatrixXr z_t0 = forward_head(st.teacher, h_t0);
    const MatrixXr h_s0 = forward_features(st.student, x);
    const MatrixXr z_s0 = forward_head(st.student, h_s0);

    // Active rows close to the origin make the normalised alignment terms
    // too curved for central differences; dead (all-zero) rows are fine.
    auto near_origin = [](const MatrixXr& m) {
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            const double n = m.row(i).norm();
            if (n > 0.0 && n < 0.05) return true;
        }
        return false;
    };
    if (near_origin(h_s0) || near_origin(aligner_forward(st.aligner, h_t0))) return std::nullopt;

    const BatchRecord rec = compute_batch_gradients(st, x, y, round, cfg);

    std::vector<MatrixXr*> inputs;
    std::vector<const MatrixXr*> grads;
    for (auto* p : st.teacher.parameters()) {
        inputs.push_back(&p->value);
        grads.push_back(&p->grad);
    }
    for (auto* p : st.student.parameters()) {
        inputs.push_back(&p->value);
        grads.push_back(&p->grad);
    }
    for (auto* p : st.aligner.parameters()) {
        inputs.push_back(&p->value);
        grads.push_back(&p->grad);
    }
    Eigen::Index n = 0;
    for (const auto* gr : grads) n += gr->size();
    VectorXr analytic(n);
    Eigen::Index off = 0;
    for (const auto* gr : grads) {
        analytic.segment(off, gr->size()) = Eigen::Map<const VectorXr>(gr->data(), gr->size());
        off += gr->size();
    }

    const ClassWeights& w = st.class_weights;
    const double temp = rec.temperature;
    const MatrixXr p_t0 = softmax_with_temperature<double>(z_t0, temp);
    const MatrixXr p_s0 = softmax_with_temperature<double>(z_s0, temp);

    auto objective = [&]() {
        Hasher hs;
        StackCache<double> tf, th, sf, sh, ac;
        const MatrixXr h_t = forward_features(st.teacher, x, &tf);
        const MatrixXr z_t = forward_head(st.teacher, h_t, &th);
        const MatrixXr h_s = forward_features(st.student, x, &sf);
        const MatrixXr z_s = forward_head(st.student, h_s, &sh);
        for (const auto* cache : {&tf, &th, &sf, &sh}) {
            for (const auto& pre : cache->pre_activations) hs.add_sign_pattern(pre);
        }
        double total = task_loss<double>(z_t, z_s, y, w).value;
        // student-bound term sees the frozen teacher and vice versa
        const MatrixXr p_t = softmax_with_temperature<double>(z_t, temp);
        const MatrixXr p_s = softmax_with_temperature<double>(z_s, temp);
        const double wbar = w.mean_of(y);
        const double kd = wbar * temp * temp *
                          ((1.0 - rec.gamma) * kl_divergence<double>(p_s, p_t0) +
                           rec.delta * kl_divergence<double>(p_t, p_s0));
        total += rec.lambda_kd * kd;
        const MatrixXr projected = aligner_forward(st.aligner, h_t0, &ac);
        hs.add_sign_pattern(ac.pre_activations[0]);
        const auto al = alignment_loss<double>(projected, h_s, bank0, cfg.align);
        hs.add_indices(al.match);
        total += rec.lambda_align * al.value;
        return ProbeValue{total, hs.value()};
    };
    return Pair{analytic, numeric_gradient(inputs, objective, h)};
}

}  // namespace

std::vector<std::string> gradcheck_names() {
    return {"affine",         "relu",           "softmax_temperature", "weighted_cross_entropy", "kl_divergence",
            "l2_normalize",   "task_loss",      "kd_student_route",    "kd_teacher_route",       "geometric_loss",
            "directional_loss", "contrastive_loss", "alignment_loss",  "client_step"};
}

std::vector<GradcheckResult> run_gradcheck_suite(const GradcheckOptions& opts) {
    Suite s(opts);
    const double h = opts.step;

    s.run("affine", [h](Gen& g) -> Pair {
        const Eigen::Index b = g.uniform_int(1, 4), din = g.uniform_int(1, 8), dout = g.uniform_int(1, 8);
        MatrixXr x = g.normal(b, din), w = g.normal(din, dout), bias = g.normal(1, dout);
        const MatrixXr c = g.normal(b, dout);
        const auto gr = affine_backward<double>(x, w, c);
        auto f = [&] { return ProbeValue{scalar_probe(affine_forward<double>(x, w, bias), c), 0}; };
        return {concat({&gr.dx, &gr.dweight, &gr.dbias}), numeric_gradient({&x, &w, &bias}, f, h)};
    });

    s.run("relu", [h](Gen& g) -> Pair {
        const Eigen::Index b = g.uniform_int(1, 4), d = g.uniform_int(1, 8);
        MatrixXr x = g.away_from_zero(b, d);
        const MatrixXr c = g.normal(b, d);
        const MatrixXr dx = relu_backward<double>(x, c);
        auto f = [&] { return ProbeValue{scalar_probe(relu<double>(x), c), 0}; };
        return {concat({&dx}), numeric_gradient({&x}, f, h)};
    });

    s.run("softmax_temperature", [h](Gen& g) -> Pair {
        const Eigen::Index b = g.uniform_int(1, 4), c = g.uniform_int(2, 8);
        const double t = g.uniform(0.5, 4.0);
        MatrixXr z = g.normal(b, c, 2.0);
        const MatrixXr probe = g.normal(b, c);
        const MatrixXr dz = softmax_backward<double>(softmax_with_temperature<double>(z, t), probe, t);
        auto f = [&] { return ProbeValue{scalar_probe(softmax_with_temperature<double>(z, t), probe), 0}; };
        return {concat({&dz}), numeric_gradient({&z}, f, h)};
    });

    s.run("weighted_cross_entropy", [h](Gen& g) -> Pair {
        const Eigen::Index b = g.uniform_int(1, 4);
        const int c = g.uniform_int(2, 4);
        MatrixXr z = g.normal(b, c, 2.0);
        const auto y = g.labels(b, c);
        const auto w = g.weights(c);
        const auto res = weighted_cross_entropy<double>(z, y, w);
        auto f = [&] { return ProbeValue{weighted_cross_entropy<double>(z, y, w).value, 0}; };
        return {concat({&res.grad}), numeric_gradient({&z}, f, h)};
    });

    s.run("kl_divergence", [h](Gen& g) -> Pair {
        const Eigen::Index b = g.uniform_int(1, 4), c = g.uniform_int(2, 6);
        MatrixXr p = g.probabilities(b, c);
        const MatrixXr q = g.probabilities(b, c);
        const MatrixXr gp = kl_divergence_grad_first<double>(p, q);
        auto f = [&] { return ProbeValue{kl_divergence<double>(p, q), 0}; };
        return {concat({&gp}), numeric_gradient({&p}, f, h)};
    });

    s.run("l2_normalize", [h](Gen& g) -> Pair {
        const Eigen::Index b = g.uniform_int(1, 4), d = g.uniform_int(2, 8);
        MatrixXr x = g.rows_away_from_origin(b, d);
        const MatrixXr c = g.normal(b, d);
        const MatrixXr dx = l2_normalize_rows_backward<double>(x, c);
        auto f = [&] { return ProbeValue{scalar_probe(l2_normalize_rows<double>(x), c), 0}; };
        return {concat({&dx}), numeric_gradient({&x}, f, h)};
    });

    s.run("task_loss", [h](Gen& g) -> Pair {
        const Eigen::Index b = g.uniform_int(1, 4);
        const int c = g.uniform_int(2, 4);
        MatrixXr zt = g.normal(b, c, 2.0), zs = g.normal(b, c, 2.0);
        const auto y = g.labels(b, c);
        ClassWeights w;
        w.weights = g.weights(c);
        const auto res = task_loss<double>(zt, zs, y, w);
        auto f = [&] { return ProbeValue{task_loss<double>(zt, zs, y, w).value, 0}; };
        return {concat({&res.grad_teacher, &res.grad_student}), numeric_gradient({&zt, &zs}, f, h)};
    });

    // delta = 0 isolates the (1 - gamma) term, which moves only z_S.
    s.run("kd_student_route", [h](Gen& g) -> Pair {
        const Eigen::Index b = g.uniform_int(1, 4);
        const int c = g.uniform_int(2, 4);
        MatrixXr zt = g.normal(b, c, 2.0), zs = g.normal(b, c, 2.0);
        const auto y = g.labels(b, c);
        ClassWeights w;
        w.weights = g.weights(c);
        const double t = g.uniform(1.0, 3.0), gamma = g.uniform(0.0, 1.0);
        const auto res = kd_loss<double>(zt, zs, y, w, t, gamma, 0.0);
        auto f = [&] { return ProbeValue{kd_loss<double>(zt, zs, y, w, t, gamma, 0.0).value, 0}; };
        return {concat({&res.grad_student}), numeric_gradient({&zs}, f, h)};
    });

    // gamma = 1 isolates the delta term, which moves only z_T.
    s.run("kd_teacher_route", [h](Gen& g) -> Pair {
        const Eigen::Index b = g.uniform_int(1, 4);
        const int c = g.uniform_int(2, 4);
        MatrixXr zt = g.normal(b, c, 2.0), zs = g.normal(b, c, 2.0);
        const auto y = g.labels(b, c);
        ClassWeights w;
        w.weights = g.weights(c);
        const double t = g.uniform(1.0, 3.0), delta = g.uniform(0.0, 1.0);
        const auto res = kd_loss<double>(zt, zs, y, w, t, 1.0, delta);
        auto f = [&] { return ProbeValue{kd_loss<double>(zt, zs, y, w, t, 1.0, delta).value, 0}; };
        return {concat({&res.grad_teacher}), numeric_gradient({&zt}, f, h)};
    });

    s.run("geometric_loss", [h](Gen& g) -> Pair {
        const Eigen::Index b = g.uniform_int(1, 4), d = g.uniform_int(1, 6);
        MatrixXr a = g.normal(b, d), m = g.normal(b, d);
        const auto res = geometric_loss<double>(a, m);
        auto f = [&] { return ProbeValue{geometric_loss<double>(a, m).value, 0}; };
        return {concat({&res.grad_a, &res.grad_b}), numeric_gradient({&a, &m}, f, h)};
    });

    s.run("directional_loss", [h](Gen& g) -> Pair {
        const Eigen::Index b = g.uniform_int(1, 4), d = g.uniform_int(2, 6);
        MatrixXr a = g.rows_away_from_origin(b, d), m = g.rows_away_from_origin(b, d);
        const auto res = directional_loss<double>(a, m);
        auto f = [&] { return ProbeValue{directional_loss<double>(a, m).value, 0}; };
        return {concat({&res.grad_a, &res.grad_b}), numeric_gradient({&a, &m}, f, h)};
    });

    s.run("contrastive_loss", [h](Gen& g) -> Pair {
        const Eigen::Index b = g.uniform_int(1, 4), d = g.uniform_int(2, 6);
        MatrixXr a = g.rows_away_from_origin(b, d), m = g.rows_away_from_origin(b, d);
        const MatrixXr bank = g.normal(g.uniform_int(0, 5), d);
        const double tau = g.uniform(0.1, 1.0);
        const auto res = contrastive_loss<double>(a, m, bank, tau);
        auto f = [&] { return ProbeValue{contrastive_loss<double>(a, m, bank, tau).value, 0}; };
        return {concat({&res.grad_a, &res.grad_b}), numeric_gradient({&a, &m}, f, h)};
    });

    s.run("alignment_loss", [h](Gen& g) -> Pair {
        const Eigen::Index b = g.uniform_int(1, 4), d = g.uniform_int(2, 6);
        MatrixXr a = g.rows_away_from_origin(b, d), m = g.rows_away_from_origin(b, d);
        const MatrixXr bank = g.normal(g.uniform_int(0, 5), d);
        const AlignConfig cfg;
        const auto res = alignment_loss<double>(a, m, bank, cfg);
        auto f = [&] {
            const auto r = alignment_loss<double>(a, m, bank, cfg);
            Hasher hs;
            hs.add_indices(r.match);
            return ProbeValue{r.value, hs.value()};
        };
        return {concat({&res.grad_projected, &res.grad_student}), numeric_gradient({&a, &m}, f, h)};
    });

    s.run("client_step", [h](Gen& g) -> Pair {
        for (;;) {
            if (auto p = client_step_trial(g, h)) return *std::move(p);
        }
    });

    return s.take();
}

}  // namespace sentinel
