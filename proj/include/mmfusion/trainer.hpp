#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mmfusion/diagnostics.hpp"
#include "mmfusion/model.hpp"
#include "mmfusion/rollingq.hpp"
#include "mmfusion/synthdata.hpp"

namespace mmfusion {

struct TrainConfig {
    std::size_t epochs = 30;
    std::size_t batch_size = 64;
    double lr = 1e-3;
    double momentum = 0.0;  // 0 is plain SGD
    std::size_t eval_every = 1;
    bool rollingq_enabled = true;
    RollingQConfig rollingq;
    // Ablation switches: run the controller on every batch instead of the
    // epoch's final batch, or feed it whole-epoch averaged statistics.
    bool controller_every_batch = false;
    bool controller_epoch_average = false;
    std::uint64_t seed = 12345;
};

struct ModelSpec {
    std::size_t dim = 16;
    std::size_t hidden = 32;
    double init_std = 0.02;
};

void validate(const TrainConfig& cfg);

// Cosine-annealed learning rate at epoch t of T (epoch granularity):
// lr0 * (1 + cos(pi * t / T)) / 2.
double lr_at(std::size_t epoch, const TrainConfig& cfg);

// Mean loss and mean gradients over one batch; pure.
struct BatchGradients {
    ModelGrad grad;
    double loss = 0.0;
    double grad_norm_a = 0.0;  // L2 norm over encoder a's gradient arrays
    double grad_norm_v = 0.0;
};

BatchGradients compute_batch_gradients(const ModelParams& model, std::span<const Sample> data,
                                       std::span<const std::size_t> batch);

// SGD step p -= lr * g on everything except the fusion rotation. velocity
// may be null when momentum is 0.
void apply_sgd(ModelParams& model, const ModelGrad& grad, double lr, double momentum,
               ModelGrad* velocity);

struct StepResult {
    double loss = 0.0;
    double grad_norm_a = 0.0;
    double grad_norm_v = 0.0;
};

// One optimization step on a batch. Throws DivergenceError (naming epoch
// and batch) if the loss is not finite.
StepResult train_step(ModelParams& model, std::span<const Sample> data,
                      std::span<const std::size_t> batch, double lr, double momentum = 0.0,
                      ModelGrad* velocity = nullptr, std::size_t epoch = 0,
                      std::size_t batch_index = 0);

// Gradient-free forward pass over a batch; feeds the controller.
BatchKeyStats frozen_batch_stats(const ModelParams& model, std::span<const Sample> data,
                                 std::span<const std::size_t> batch);

struct TrainReport {
    std::vector<DiagnosticsRecord> records;
    std::vector<ControllerEvent> controller_events;
    ControllerState controller;
    ModelParams model;
    double final_test_accuracy = 0.0;
    std::vector<ScatterRow> final_scatter;
};

// Full training run: T epochs of batches, controller hook on each epoch's
// final batch, per-epoch diagnostics, final evaluation on the test split.
// Bit-deterministic in (cfg, spec, dataset) on one machine.
TrainReport run(const TrainConfig& cfg, const ModelSpec& spec, const Dataset& dataset);

}  // namespace mmfusion
