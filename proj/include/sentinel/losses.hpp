#pragma once

// Client objective: class-balanced task loss, confidence-gated bidirectional
// distillation, three-part feature alignment, and the EMA weight controller
// that mixes them.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "sentinel/kernel.hpp"
#include "sentinel/memory_bank.hpp"
#include "sentinel/tensor.hpp"

namespace sentinel {

// ---------------------------------------------------------------- class weights

struct ClassWeights {
    std::vector<double> weights;
    double beta = 0.999;
    double clamp_lo = 0.2;
    double clamp_hi = 5.0;

    static ClassWeights uniform(int num_classes);
    int num_classes() const { return static_cast<int>(weights.size()); }
    // Mean weight of the given labels (the batch factor in the KD loss).
    double mean_of(std::span<const int> labels) const;
};

// Effective-number weights (1-beta)/(1-beta^n_c), clamped, then normalised to
// mean 1 over classes with n_c > 0. Absent classes get 1.
ClassWeights compute_class_weights(std::span<const long> counts, double beta = 0.999, double clamp_lo = 0.2,
                                   double clamp_hi = 5.0);

template <typename Scalar>
struct TaskLoss {
    Scalar value{};
    Scalar teacher_ce{};
    Scalar student_ce{};
    Matrix<Scalar> grad_teacher;  // dL/dz_T
    Matrix<Scalar> grad_student;  // dL/dz_S
};

template <typename Scalar>
TaskLoss<Scalar> task_loss(const Matrix<Scalar>& z_teacher, const Matrix<Scalar>& z_student,
                           std::span<const int> labels, const ClassWeights& w) {
    auto t = weighted_cross_entropy<Scalar>(z_teacher, labels, w.weights);
    auto s = weighted_cross_entropy<Scalar>(z_student, labels, w.weights);
    TaskLoss<Scalar> out;
    out.teacher_ce = t.value;
    out.student_ce = s.value;
    out.value = Scalar(0.5) * (t.value + s.value);
    out.grad_teacher = Scalar(0.5) * t.grad;
    out.grad_student = Scalar(0.5) * s.grad;
    return out;
}

// ---------------------------------------------------------------- distillation

struct KdSchedule {
    double t_base = 3.0;
    double t_min = 1.0;
    double t_decay = 0.95;
};

// max(T_min, T_base * T_decay^min(r/10, 5))
double temperature(double round, const KdSchedule& schedule = {});

enum class DeltaMode { MeanProduct, GeometricMean };

struct Agreement {
    double gamma = 0.0;  // fraction of rows with equal argmax
    double delta = 0.0;  // joint confidence of the soft predictions
};

template <typename Scalar>
Agreement agreement_confidence(const Matrix<Scalar>& z_teacher, const Matrix<Scalar>& z_student, Scalar temp,
                               DeltaMode mode = DeltaMode::MeanProduct) {
    if (z_teacher.rows() != z_student.rows() || z_teacher.cols() != z_student.cols()) {
        throw DimensionError("agreement_confidence: z_T " + shape_str(z_teacher) + " vs z_S " + shape_str(z_student));
    }
    Agreement a;
    const Eigen::Index b = z_teacher.rows();
    if (b == 0) return a;
    const auto arg_t = row_argmax<Scalar>(z_teacher);
    const auto arg_s = row_argmax<Scalar>(z_student);
    const Matrix<Scalar> p_t = softmax_with_temperature<Scalar>(z_teacher, temp);
    const Matrix<Scalar> p_s = softmax_with_temperature<Scalar>(z_student, temp);
    long agree = 0;
    double conf = 0.0;
    for (Eigen::Index i = 0; i < b; ++i) {
        if (arg_t[static_cast<std::size_t>(i)] == arg_s[static_cast<std::size_t>(i)]) ++agree;
        const double prod = static_cast<double>(p_t.row(i).maxCoeff() * p_s.row(i).maxCoeff());
        conf += mode == DeltaMode::MeanProduct ? prod : std::sqrt(prod);
    }
    a.gamma = static_cast<double>(agree) / static_cast<double>(b);
    a.delta = conf / static_cast<double>(b);
    return a;
}

template <typename Scalar>
struct KdLoss {
    Scalar value{};
    Scalar kl_student_teacher{};  // KL(p_S || p_T), weighted by 1 - gamma
    Scalar kl_teacher_student{};  // KL(p_T || p_S), weighted by delta
    Scalar mean_weight{};
    // The (1-gamma) term moves the student only, the delta term the teacher only.
    Matrix<Scalar> grad_teacher;
    Matrix<Scalar> grad_student;
};

template <typename Scalar>
KdLoss<Scalar> kd_loss(const Matrix<Scalar>& z_teacher, const Matrix<Scalar>& z_student, std::span<const int> labels,
                       const ClassWeights& w, Scalar temp, double gamma, double delta) {
    if (z_teacher.rows() != z_student.rows() || z_teacher.cols() != z_student.cols()) {
        throw DimensionError("kd_loss: z_T " + shape_str(z_teacher) + " vs z_S " + shape_str(z_student));
    }
    require_dim(static_cast<Eigen::Index>(labels.size()), z_teacher.rows(), "kd_loss", "axis 0 (labels)");
    check_labels(labels, z_teacher.cols(), "kd_loss");

    KdLoss<Scalar> out;
    const Matrix<Scalar> p_t = softmax_with_temperature<Scalar>(z_teacher, temp);
    const Matrix<Scalar> p_s = softmax_with_temperature<Scalar>(z_student, temp);
    out.kl_student_teacher = kl_divergence<Scalar>(p_s, p_t);
    out.kl_teacher_student = kl_divergence<Scalar>(p_t, p_s);
    out.mean_weight = static_cast<Scalar>(w.mean_of(labels));

    const Scalar t2 = temp * temp;
    const Scalar to_student = out.mean_weight * static_cast<Scalar>(1.0 - gamma) * t2;
    const Scalar to_teacher = out.mean_weight * static_cast<Scalar>(delta) * t2;
    out.value = to_student * out.kl_student_teacher + to_teacher * out.kl_teacher_student;

    out.grad_student = to_student * softmax_backward<Scalar>(p_s, kl_divergence_grad_first<Scalar>(p_s, p_t), temp);
    out.grad_teacher = to_teacher * softmax_backward<Scalar>(p_t, kl_divergence_grad_first<Scalar>(p_t, p_s), temp);
    return out;
}

// ---------------------------------------------------------------- alignment

template <typename Scalar>
struct Matching {
    std::vector<int> index;  // index[i] = student row nearest to projected teacher row i
    Matrix<Scalar> matched;  // student rows gathered by index
};

template <typename Scalar>
Matching<Scalar> match_nearest(const Matrix<Scalar>& projected_teacher, const Matrix<Scalar>& h_student) {
    require_dim(h_student.cols(), projected_teacher.cols(), "match_nearest", "axis 1 (feature width)");
    Matching<Scalar> m;
    const Eigen::Index b = projected_teacher.rows();
    m.index.assign(static_cast<std::size_t>(b), 0);
    m.matched.resize(b, projected_teacher.cols());
    if (b == 0) return m;
    if (h_student.rows() == 0) throw DimensionError("match_nearest: no student rows to match against");
    for (Eigen::Index i = 0; i < b; ++i) {
        Eigen::Index best = 0;
        Scalar best_d = (h_student.row(0) - projected_teacher.row(i)).squaredNorm();
        for (Eigen::Index j = 1; j < h_student.rows(); ++j) {
            const Scalar d = (h_student.row(j) - projected_teacher.row(i)).squaredNorm();
            if (d < best_d) {
                best_d = d;
                best = j;
            }
        }
        m.index[static_cast<std::size_t>(i)] = static_cast<int>(best);
        m.matched.row(i) = h_student.row(best);
    }
    return m;
}

template <typename Scalar>
struct PairLoss {
    Scalar value{};
    Matrix<Scalar> grad_a;
    Matrix<Scalar> grad_b;
};

// (1/B) sum_i |a_i - b_i|^2
template <typename Scalar>
PairLoss<Scalar> geometric_loss(const Matrix<Scalar>& a, const Matrix<Scalar>& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw DimensionError("geometric_loss: " + shape_str(a) + " vs " + shape_str(b));
    }
    PairLoss<Scalar> out;
    if (a.rows() == 0) {
        out.grad_a = Matrix<Scalar>::Zero(a.rows(), a.cols());
        out.grad_b = out.grad_a;
        return out;
    }
    const Scalar inv_b = Scalar(1) / static_cast<Scalar>(a.rows());
    const Matrix<Scalar> diff = a - b;
    out.value = diff.squaredNorm() * inv_b;
    out.grad_a = (Scalar(2) * inv_b) * diff;
    out.grad_b = -out.grad_a;
    return out;
}

template <typename Scalar>
struct DirectionalLoss : PairLoss<Scalar> {
    Scalar mean_cosine{};
};

// 1 - (1/B) sum_i cos(a_i, b_i), norms floored at 1e-8.
template <typename Scalar>
DirectionalLoss<Scalar> directional_loss(const Matrix<Scalar>& a, const Matrix<Scalar>& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw DimensionError("directional_loss: " + shape_str(a) + " vs " + shape_str(b));
    }
    DirectionalLoss<Scalar> out;
    out.grad_a = Matrix<Scalar>::Zero(a.rows(), a.cols());
    out.grad_b = Matrix<Scalar>::Zero(b.rows(), b.cols());
    const Eigen::Index n = a.rows();
    if (n == 0) return out;
    const Scalar eps = static_cast<Scalar>(kNormEps);
    const Scalar inv_b = Scalar(1) / static_cast<Scalar>(n);
    Scalar cos_sum = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const Scalar na = a.row(i).norm();
        const Scalar nb = b.row(i).norm();
        const Scalar fa = std::max(na, eps);
        const Scalar fb = std::max(nb, eps);
        const Scalar dot = a.row(i).dot(b.row(i));
        const Scalar cos = dot / (fa * fb);
        cos_sum += cos;
        // dcos/da = b/(fa fb) - [na > eps] dot a / (na^2 fa fb)
        RowVector<Scalar> da = b.row(i) / (fa * fb);
        if (na > eps) da -= a.row(i) * (dot / (na * na * fa * fb));
        RowVector<Scalar> db = a.row(i) / (fa * fb);
        if (nb > eps) db -= b.row(i) * (dot / (nb * nb * fa * fb));
        out.grad_a.row(i) = -inv_b * da;
        out.grad_b.row(i) = -inv_b * db;
    }
    out.mean_cosine = cos_sum * inv_b;
    out.value = Scalar(1) - out.mean_cosine;
    return out;
}

// InfoNCE on l2-normalised rows. Positive pair is (a_i, b_i); the denominator
// runs over all in-batch b_j plus every bank row. Bank rows are constants.
template <typename Scalar>
PairLoss<Scalar> contrastive_loss(const Matrix<Scalar>& projected_teacher, const Matrix<Scalar>& h_student,
                                  const Matrix<Scalar>& bank_rows, Scalar tau) {
    if (!(tau > Scalar(0))) throw std::invalid_argument("contrastive_loss: tau must be positive");
    if (projected_teacher.rows() != h_student.rows() || projected_teacher.cols() != h_student.cols()) {
        throw DimensionError("contrastive_loss: " + shape_str(projected_teacher) + " vs " + shape_str(h_student));
    }
    const bool use_bank = bank_rows.rows() > 0;
    if (use_bank) require_dim(bank_rows.cols(), h_student.cols(), "contrastive_loss", "axis 1 of bank");

    PairLoss<Scalar> out;
    const Eigen::Index b = projected_teacher.rows();
    if (b == 0) {
        out.grad_a = Matrix<Scalar>::Zero(0, projected_teacher.cols());
        out.grad_b = out.grad_a;
        return out;
    }
    const Matrix<Scalar> an = l2_normalize_rows<Scalar>(projected_teacher);
    const Matrix<Scalar> bn = l2_normalize_rows<Scalar>(h_student);
    const Eigen::Index m = use_bank ? bank_rows.rows() : 0;
    const Matrix<Scalar> mn = use_bank ? l2_normalize_rows<Scalar>(bank_rows) : Matrix<Scalar>(0, h_student.cols());

    Matrix<Scalar> logits(b, b + m);
    logits.leftCols(b) = an * bn.transpose() / tau;
    if (m > 0) logits.rightCols(m) = an * mn.transpose() / tau;

    const Scalar inv_b = Scalar(1) / static_cast<Scalar>(b);
    Matrix<Scalar> dlogits(b, b + m);
    Scalar total = 0;
    for (Eigen::Index i = 0; i < b; ++i) {
        const Scalar mx = logits.row(i).maxCoeff();
        const auto e = (logits.row(i).array() - mx).exp().eval();
        const Scalar s = e.sum();
        total += mx + std::log(s) - logits(i, i);
        dlogits.row(i) = (e / s).matrix() * inv_b;
        dlogits(i, i) -= inv_b;
    }
    out.value = total * inv_b;

    Matrix<Scalar> d_an = dlogits.leftCols(b) * bn / tau;
    if (m > 0) d_an += dlogits.rightCols(m) * mn / tau;
    const Matrix<Scalar> d_bn = dlogits.leftCols(b).transpose() * an / tau;
    out.grad_a = l2_normalize_rows_backward<Scalar>(projected_teacher, d_an);
    out.grad_b = l2_normalize_rows_backward<Scalar>(h_student, d_bn);
    return out;
}

template <typename Scalar>
PairLoss<Scalar> contrastive_loss(const Matrix<Scalar>& projected_teacher, const Matrix<Scalar>& h_student,
                                  const MemoryBank<Scalar>& bank, Scalar tau) {
    return contrastive_loss<Scalar>(projected_teacher, h_student, bank.rows(), tau);
}

struct AlignConfig {
    double lambda_cos = 0.5;
    double lambda_contrast = 0.2;
    double tau = 0.1;
};

template <typename Scalar>
struct AlignmentLoss {
    Scalar value{};
    Scalar geometric{};
    Scalar directional{};
    Scalar structural{};
    double score = 0.0;             // (1 + mean matched cosine) / 2, in [0, 1]
    Matrix<Scalar> grad_projected;  // dL/dh'_T (aligner output)
    Matrix<Scalar> grad_student;    // dL/dh_S  (student features)
    std::vector<int> match;
};

template <typename Scalar>
AlignmentLoss<Scalar> alignment_loss(const Matrix<Scalar>& projected_teacher, const Matrix<Scalar>& h_student,
                                     const Matrix<Scalar>& bank_rows, const AlignConfig& cfg) {
    const auto matching = match_nearest<Scalar>(projected_teacher, h_student);
    const auto geom = geometric_loss<Scalar>(projected_teacher, matching.matched);
    const auto dir = directional_loss<Scalar>(projected_teacher, matching.matched);
    const auto cst = contrastive_loss<Scalar>(projected_teacher, h_student, bank_rows, static_cast<Scalar>(cfg.tau));

    const Scalar lc = static_cast<Scalar>(cfg.lambda_cos);
    const Scalar lk = static_cast<Scalar>(cfg.lambda_contrast);

    AlignmentLoss<Scalar> out;
    out.geometric = geom.value;
    out.directional = dir.value;
    out.structural = cst.value;
    out.value = geom.value + lc * dir.value + lk * cst.value;
    out.score = std::clamp((1.0 + static_cast<double>(dir.mean_cosine)) / 2.0, 0.0, 1.0);
    out.match = matching.index;

    out.grad_projected = geom.grad_a + lc * dir.grad_a + lk * cst.grad_a;
    out.grad_student = lk * cst.grad_b;
    const Matrix<Scalar> d_matched = geom.grad_b + lc * dir.grad_b;
    for (std::size_t i = 0; i < matching.index.size(); ++i) {
        out.grad_student.row(matching.index[i]) += d_matched.row(static_cast<Eigen::Index>(i));
    }
    return out;
}

template <typename Scalar>
AlignmentLoss<Scalar> alignment_loss(const Matrix<Scalar>& projected_teacher, const Matrix<Scalar>& h_student,
                                     const MemoryBank<Scalar>& bank, const AlignConfig& cfg) {
    return alignment_loss<Scalar>(projected_teacher, h_student, bank.rows(), cfg);
}

// ---------------------------------------------------------------- adaptive weights

struct AdaptiveWeights {
    double lambda_kd = 0.2;
    double lambda_align = 0.08;
    int round = 0;

    static constexpr double kKdLower = 0.03;
    static constexpr double kAlignLower = 0.01;

    static double ema_alpha(int r) { return std::max(0.7, 0.9 - 0.03 * r); }
    static double kd_upper(int r) { return std::min(0.35, 0.18 + 0.02 * r); }
    static double align_upper(int r) { return std::min(0.12, 0.06 + 0.01 * r); }
};

AdaptiveWeights update_adaptive_weights(const AdaptiveWeights& st, double gamma, double score_align, int round);

template <typename Scalar>
struct TotalLoss {
    Scalar value{};
    Matrix<Scalar> grad_z_teacher;
    Matrix<Scalar> grad_z_student;
    Matrix<Scalar> grad_projected;  // empty when alignment is off
    Matrix<Scalar> grad_h_student;  // empty when alignment is off
};

// L_task + lambda_kd L_KD + lambda_align L_align. A null component is
// excluded entirely, so with both off the value is the task loss bit for bit.
template <typename Scalar>
TotalLoss<Scalar> total_loss(const TaskLoss<Scalar>& task, const KdLoss<Scalar>* kd, const AlignmentLoss<Scalar>* align,
                             const AdaptiveWeights& st) {
    TotalLoss<Scalar> out;
    out.value = task.value;
    out.grad_z_teacher = task.grad_teacher;
    out.grad_z_student = task.grad_student;
    if (kd) {
        const Scalar l = static_cast<Scalar>(st.lambda_kd);
        out.value += l * kd->value;
        out.grad_z_teacher += l * kd->grad_teacher;
        out.grad_z_student += l * kd->grad_student;
    }
    if (align) {
        const Scalar l = static_cast<Scalar>(st.lambda_align);
        out.value += l * align->value;
        out.grad_projected = l * align->grad_projected;
        out.grad_h_student = l * align->grad_student;
    }
    return out;
}

}  // namespace sentinel
