#include "sentinel/client.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <optional>

#include "sentinel/errors.hpp"
#include "sentinel/random.hpp"

namespace sentinel {

namespace {

template <typename Model>
AdamW<double> make_optimizer(Model& m, const AdamWConfig& cfg) {
    auto params = m.parameters();
    return AdamW<double>(params, cfg);
}

void gather_batch(const TabularDataset& ds, std::span<const std::size_t> idx, MatrixXr& x, std::vector<int>& y) {
    x.resize(static_cast<Eigen::Index>(idx.size()), ds.features.cols());
    y.resize(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) {
        x.row(static_cast<Eigen::Index>(k)) = ds.features.row(static_cast<Eigen::Index>(idx[k]));
        y[k] = ds.labels[idx[k]];
    }
}

void load_broadcast(ModelParams<double>& student, const StateDict& global, int client_id) {
    try {
        load_state_dict(student, global);
    } catch (const DimensionError& e) {
        throw ConfigError("client " + std::to_string(client_id) + ": broadcast student does not fit local model: " +
                          e.what());
    }
}

void set_lr_all(ClientState& st, double lr) {
    st.teacher_opt.set_lr(lr);
    st.student_opt.set_lr(lr);
    st.aligner_opt.set_lr(lr);
}

class WallTimer {
public:
    WallTimer() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        const auto d = std::chrono::steady_clock::now() - start_;
        return std::max(std::chrono::duration<double>(d).count(), 1e-9);
    }

private:
    std::chrono::steady_clock::time_point start_;
};

}  // namespace

ClientState make_client(int client_id, const VariantSpec& arch, TabularDataset train, TabularDataset test,
                        const ClientConfig& cfg, std::uint64_t seed) {
    ClientState st;
    st.client_id = client_id;
    auto init_rng = make_stream(seed, streams::kClientInit, static_cast<std::uint64_t>(client_id));
    st.teacher = init_params<double>(arch.teacher, init_rng);
    st.student = init_params<double>(arch.student, init_rng);
    st.aligner = init_aligner<double>(arch.aligner_in, arch.aligner_out, init_rng);
    st.teacher_opt = make_optimizer(st.teacher, cfg.optimizer);
    st.student_opt = make_optimizer(st.student, cfg.optimizer);
    st.aligner_opt = make_optimizer(st.aligner, cfg.optimizer);
    st.schedule = ExponentialLr{cfg.optimizer.lr, cfg.lr_decay, 0};
    st.bank_teacher = MemoryBank<double>(cfg.bank_capacity);
    st.bank_student = MemoryBank<double>(cfg.bank_capacity);
    const int num_classes = arch.student.num_classes;
    const auto counts = class_counts(train.labels, num_classes);
    const bool any = std::any_of(counts.begin(), counts.end(), [](long c) { return c > 0; });
    st.class_weights = any ? compute_class_weights(counts, cfg.class_weight_beta) : ClassWeights::uniform(num_classes);
    st.train = std::move(train);
    st.test = std::move(test);
    st.rng = make_stream(seed, streams::kClientTrain, static_cast<std::uint64_t>(client_id));
    return st;
}

void bank_push(MemoryBank<double>& bank, const MatrixXr& rows) { bank.push(rows); }

BatchRecord compute_batch_gradients(ClientState& st, const MatrixXr& x, std::span<const int> y, int round,
                                    const ClientConfig& cfg) {
    st.teacher.zero_grad();
    st.student.zero_grad();
    st.aligner.zero_grad();

    StackCache<double> t_feat, t_head, s_feat, s_head, a_cache;
    const MatrixXr h_t = forward_features(st.teacher, x, &t_feat);
    const MatrixXr z_t = forward_head(st.teacher, h_t, &t_head);
    const MatrixXr h_s = forward_features(st.student, x, &s_feat);
    const MatrixXr z_s = forward_head(st.student, h_s, &s_head);

    const ClassWeights plain = ClassWeights::uniform(st.class_weights.num_classes());
    const ClassWeights& w = cfg.use_balanced ? st.class_weights : plain;

    BatchRecord rec;
    rec.round = round;
    rec.batch_size = x.rows();

    const auto task = task_loss<double>(z_t, z_s, y, w);
    rec.task = task.value;

    rec.temperature = temperature(static_cast<double>(round), cfg.kd);
    const auto agr = agreement_confidence<double>(z_t, z_s, rec.temperature, cfg.delta_mode);
    rec.gamma = agr.gamma;
    rec.delta = agr.delta;

    std::optional<KdLoss<double>> kd;
    if (cfg.use_kd) {
        kd = kd_loss<double>(z_t, z_s, y, w, rec.temperature, agr.gamma, agr.delta);
        rec.kd = kd->value;
        rec.kd_used = true;
    }

    std::optional<AlignmentLoss<double>> align;
    MatrixXr projected;
    rec.score_align = 1.0;
    if (cfg.use_align) {
        // h_t is passed by value into the aligner: no path back to the teacher.
        const MatrixXr h_t_detached = h_t;
        projected = aligner_forward(st.aligner, h_t_detached, &a_cache);
        align = alignment_loss<double>(projected, h_s, st.bank_student, cfg.align);
        rec.align = align->value;
        rec.align_used = true;
        rec.score_align = align->score;
        bank_push(st.bank_teacher, h_t_detached);
        bank_push(st.bank_student, h_s);
    }

    st.weights = update_adaptive_weights(st.weights, agr.gamma, rec.score_align, round);
    rec.lambda_kd = st.weights.lambda_kd;
    rec.lambda_align = st.weights.lambda_align;

    const auto total = total_loss<double>(task, kd ? &*kd : nullptr, align ? &*align : nullptr, st.weights);
    rec.total = total.value;
    if (!std::isfinite(total.value)) {
        throw NumericError("client " + std::to_string(st.client_id) + ": non-finite loss in round " +
                           std::to_string(round));
    }

    const MatrixXr dh_t = backward_head(st.teacher, t_head, total.grad_z_teacher);
    backward_features(st.teacher, t_feat, dh_t);

    MatrixXr dh_s = backward_head(st.student, s_head, total.grad_z_student);
    if (align) dh_s += total.grad_h_student;
    backward_features(st.student, s_feat, dh_s);

    if (align) aligner_backward(st.aligner, a_cache, total.grad_projected);
    return rec;
}

void apply_batch_update(ClientState& st, const ClientConfig& cfg) {
    auto tp = st.teacher.parameters();
    auto sp = st.student.parameters();
    auto ap = st.aligner.parameters();
    clip_grad_norm<double>(tp, cfg.clip_norm);
    clip_grad_norm<double>(sp, cfg.clip_norm);
    clip_grad_norm<double>(ap, cfg.clip_norm);
    st.teacher_opt.step(tp, "teacher");
    st.student_opt.step(sp, "student");
    st.aligner_opt.step(ap, "aligner");
}

namespace {

template <typename StepFn>
void run_local_epochs(ClientState& st, int round, const ClientConfig& cfg, StepFn&& step) {
    const std::size_t n = st.train.size();
    const std::size_t bs = static_cast<std::size_t>(std::max(1, cfg.batch_size));
    std::vector<std::size_t> order(n);
    MatrixXr x;
    std::vector<int> y;
    for (int epoch = 0; epoch < cfg.local_epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), st.rng);
        int batch = 0;
        for (std::size_t start = 0; start < n; start += bs, ++batch) {
            const std::size_t stop = std::min(n, start + bs);
            gather_batch(st.train, std::span<const std::size_t>(order).subspan(start, stop - start), x, y);
            BatchRecord rec;
            try {
                rec = step(x, y);
            } catch (const NumericError& e) {
                throw NumericError(std::string(e.what()) + " (client " + std::to_string(st.client_id) + ", round " +
                                   std::to_string(round) + ", epoch " + std::to_string(epoch) + ", batch " +
                                   std::to_string(batch) + ")");
            }
            rec.epoch = epoch;
            rec.batch = batch;
            st.trace.push_back(rec);
        }
        set_lr_all(st, st.schedule.step());
    }
}

}  // namespace

StateDict client_update(ClientState& st, const StateDict& global_student, int round, const ClientConfig& cfg) {
    load_broadcast(st.student, global_student, st.client_id);
    if (cfg.reset_student_optimizer) {
        st.student_opt = make_optimizer(st.student, cfg.optimizer);
        st.student_opt.set_lr(st.schedule.current());
    }
    st.weights = AdaptiveWeights{};
    st.weights.round = round;
    st.trace.clear();

    const WallTimer timer;
    if (cfg.local_epochs > 0) {
        run_local_epochs(st, round, cfg, [&](const MatrixXr& x, std::span<const int> y) {
            BatchRecord rec = compute_batch_gradients(st, x, y, round, cfg);
            apply_batch_update(st, cfg);
            return rec;
        });
        st.last_round_wall_time = timer.seconds();
        st.total_wall_time += st.last_round_wall_time;
        st.rounds_trained += 1;
    } else {
        st.last_round_wall_time = 0.0;
    }
    return state_dict(st.student);
}

StateDict fedavg_client_update(ClientState& st, const StateDict& global_student, int round, const ClientConfig& cfg) {
    load_broadcast(st.student, global_student, st.client_id);
    if (cfg.reset_student_optimizer) {
        st.student_opt = make_optimizer(st.student, cfg.optimizer);
        st.student_opt.set_lr(st.schedule.current());
    }
    st.trace.clear();
    const ClassWeights plain = ClassWeights::uniform(st.class_weights.num_classes());

    const WallTimer timer;
    if (cfg.local_epochs > 0) {
        run_local_epochs(st, round, cfg, [&](const MatrixXr& x, std::span<const int> y) {
            st.student.zero_grad();
            StackCache<double> feat, head;
            const MatrixXr h = forward_features(st.student, x, &feat);
            const MatrixXr z = forward_head(st.student, h, &head);
            const auto ce = weighted_cross_entropy<double>(z, y, plain.weights);
            if (!std::isfinite(ce.value)) throw NumericError("non-finite FedAvg loss");
            backward_features(st.student, feat, backward_head(st.student, head, ce.grad));
            auto sp = st.student.parameters();
            clip_grad_norm<double>(sp, cfg.clip_norm);
            st.student_opt.step(sp, "student");
            BatchRecord rec;
            rec.round = round;
            rec.batch_size = x.rows();
            rec.task = ce.value;
            rec.total = ce.value;
            return rec;
        });
        st.last_round_wall_time = timer.seconds();
        st.total_wall_time += st.last_round_wall_time;
        st.rounds_trained += 1;
    } else {
        st.last_round_wall_time = 0.0;
    }
    return state_dict(st.student);
}

std::vector<int> predict(const ModelParams<double>& m, const MatrixXr& x) {
    return row_argmax<double>(forward_head(m, forward_features(m, x)));
}

ClassificationReport evaluate_model(const ModelParams<double>& m, const TabularDataset& ds, MacroMode mode) {
    if (ds.empty()) throw DataError("evaluate: test split is empty");
    const auto pred = predict(m, ds.features);
    return report(confusion(ds.labels, pred, m.spec.num_classes), mode);
}

ClassificationReport evaluate_client(const ClientState& st, ModelRole which, MacroMode mode) {
    if (st.test.empty()) {
        throw DataError("evaluate_client: client " + std::to_string(st.client_id) + " has an empty test split");
    }
    return evaluate_model(which == ModelRole::Teacher ? st.teacher : st.student, st.test, mode);
}

}  // namespace sentinel
