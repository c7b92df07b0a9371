#pragma once

// Per-client local training: teacher, student and aligner updated jointly
// on every mini-batch, with memory banks and adaptive loss weights.

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "sentinel/data.hpp"
#include "sentinel/losses.hpp"
#include "sentinel/memory_bank.hpp"
#include "sentinel/metrics.hpp"
#include "sentinel/models.hpp"
#include "sentinel/optim.hpp"

namespace sentinel {

struct ClientConfig {
    int local_epochs = 5;
    int batch_size = 64;
    AdamWConfig optimizer;
    double clip_norm = 1.0;
    double lr_decay = 1.0;  // per-epoch factor
    bool use_balanced = true;
    bool use_kd = true;
    bool use_align = true;
    double class_weight_beta = 0.999;
    KdSchedule kd;
    AlignConfig align;
    DeltaMode delta_mode = DeltaMode::MeanProduct;
    long bank_capacity = 1024;
    bool reset_student_optimizer = false;
};

// One entry per optimisation step.
struct BatchRecord {
    int round = 0;
    int epoch = 0;
    int batch = 0;
    long batch_size = 0;
    double task = 0.0;
    double kd = 0.0;
    double align = 0.0;
    double total = 0.0;
    bool kd_used = false;
    bool align_used = false;
    double temperature = 0.0;
    double gamma = 0.0;
    double delta = 0.0;
    double score_align = 0.0;
    double lambda_kd = 0.0;  // value in effect for this batch (after adaptation)
    double lambda_align = 0.0;
};

struct ClientState {
    int client_id = 0;
    ModelParams<double> teacher;
    ModelParams<double> student;
    AlignerParams<double> aligner;
    AdamW<double> teacher_opt;
    AdamW<double> student_opt;
    AdamW<double> aligner_opt;
    ExponentialLr schedule;
    MemoryBank<double> bank_teacher;
    MemoryBank<double> bank_student;
    ClassWeights class_weights;
    TabularDataset train;
    TabularDataset test;
    std::mt19937_64 rng;
    AdaptiveWeights weights;
    std::vector<BatchRecord> trace;  // records of the most recent round
    double last_round_wall_time = 0.0;
    double total_wall_time = 0.0;
    int rounds_trained = 0;
};

ClientState make_client(int client_id, const VariantSpec& arch, TabularDataset train, TabularDataset test,
                        const ClientConfig& cfg, std::uint64_t seed);

void bank_push(MemoryBank<double>& bank, const MatrixXr& rows);

// Forward, losses, weight adaptation and backward for one batch. Leaves the
// gradients in every parameter's .grad; does not step.
BatchRecord compute_batch_gradients(ClientState& st, const MatrixXr& x, std::span<const int> y, int round,
                                    const ClientConfig& cfg);

// Clips each model's gradients and applies one AdamW step to teacher,
// student and aligner.
void apply_batch_update(ClientState& st, const ClientConfig& cfg);

// Loads the broadcast student, trains for cfg.local_epochs and returns the
// student's state dictionary. Teacher, aligner, optimisers and banks stay.
StateDict client_update(ClientState& st, const StateDict& global_student, int round, const ClientConfig& cfg);

// FedAvg baseline: a single student-architecture model trained with plain
// cross-entropy.
StateDict fedavg_client_update(ClientState& st, const StateDict& global_student, int round, const ClientConfig& cfg);

enum class ModelRole { Teacher, Student };

std::vector<int> predict(const ModelParams<double>& m, const MatrixXr& x);
ClassificationReport evaluate_model(const ModelParams<double>& m, const TabularDataset& ds,
                                    MacroMode mode = MacroMode::AllClasses);
ClassificationReport evaluate_client(const ClientState& st, ModelRole which, MacroMode mode = MacroMode::AllClasses);

}  // namespace sentinel
