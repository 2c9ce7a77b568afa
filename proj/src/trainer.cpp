#include "mmfusion/trainer.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "mmfusion/errors.hpp"
#include "mmfusion/kernels.hpp"

namespace mmfusion {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Sub-stream tags for deriving independent Rngs from the run seed.
constexpr std::uint64_t kInitStream = 101;
constexpr std::uint64_t kShuffleStream = 102;

double norm_of(const EncoderGrad& g) {
    double sq = 0.0;
    sq += kernels::dot(g.w1.size(), g.w1.data(), g.w1.data());
    sq += kernels::dot(g.b1.dim(), g.b1.data(), g.b1.data());
    sq += kernels::dot(g.w2.size(), g.w2.data(), g.w2.data());
    sq += kernels::dot(g.b2.dim(), g.b2.data(), g.b2.data());
    return std::sqrt(sq);
}

void accumulate(EncoderGrad& acc, const EncoderGrad& g) {
    add_scaled(acc.w1, g.w1, 1.0);
    add_scaled(acc.b1, g.b1, 1.0);
    add_scaled(acc.w2, g.w2, 1.0);
    add_scaled(acc.b2, g.b2, 1.0);
}

}  // namespace

void validate(const TrainConfig& cfg) {
    if (cfg.epochs == 0) {
        throw ContractError("train: epochs must be at least 1");
    }
    if (!(cfg.lr > 0.0)) {
        throw ContractError("train: learning rate must be positive");
    }
    if (cfg.batch_size == 0) {
        throw ContractError("train: batch size must be positive");
    }
    if (cfg.momentum < 0.0 || cfg.momentum >= 1.0) {
        throw ContractError("train: momentum must lie in [0, 1)");
    }
    if (cfg.eval_every == 0) {
        throw ContractError("train: eval_every must be positive");
    }
    validate(cfg.rollingq);
}

double lr_at(std::size_t epoch, const TrainConfig& cfg) {
    if (epoch > cfg.epochs) {
        throw ContractError("lr_at: epoch beyond schedule");
    }
    const double t = static_cast<double>(epoch) / static_cast<double>(cfg.epochs);
    return cfg.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

BatchGradients compute_batch_gradients(const ModelParams& model, std::span<const Sample> data,
                                       std::span<const std::size_t> batch) {
    if (batch.empty()) {
        throw ContractError("compute_batch_gradients: empty batch");
    }
    BatchGradients out;
    out.grad = zeros_like(model);
    for (std::size_t idx : batch) {
        const Sample& sample = data[idx];
        const SampleForward f = model_forward(model, sample.raw_a, sample.raw_v);
        const CrossEntropyResult ce = cross_entropy(f.logits, sample.label);
        out.loss += ce.loss;

        // classifier
        add_scaled(out.grad.classifier.weight, outer(f.fusion.output, ce.grad_logits), 1.0);
        add_scaled(out.grad.classifier.bias, ce.grad_logits, 1.0);
        const Vector fusion_out_grad = vec_mat_t(ce.grad_logits, model.classifier.weight);

        // fusion
        const FusionGradients fg = fusion_backward(model.fusion, f.fusion, fusion_out_grad);
        add_scaled(out.grad.fusion.w_q, fg.w_q, 1.0);
        add_scaled(out.grad.fusion.w_k, fg.w_k, 1.0);
        add_scaled(out.grad.fusion.w_v, fg.w_v, 1.0);
        add_scaled(out.grad.fusion.z_cls, fg.z_cls, 1.0);

        // encoders
        const EncoderBackward ea = encoder_backward(model.encoder_a, f.enc_a, fg.tokens_a());
        const EncoderBackward ev = encoder_backward(model.encoder_v, f.enc_v, fg.tokens_v());
        accumulate(out.grad.encoder_a, ea.grad);
        accumulate(out.grad.encoder_v, ev.grad);
    }
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    out.loss *= inv_b;
    for (ParamView& view : grad_views(out.grad)) {
        kernels::scale(view.size, inv_b, view.data);
    }
    out.grad_norm_a = norm_of(out.grad.encoder_a);
    out.grad_norm_v = norm_of(out.grad.encoder_v);
    return out;
}

void apply_sgd(ModelParams& model, const ModelGrad& grad, double lr, double momentum,
               ModelGrad* velocity) {
    auto& mutable_grad = const_cast<ModelGrad&>(grad);
    auto params = param_views(model, false);
    auto grads = grad_views(mutable_grad);
    if (momentum > 0.0) {
        if (velocity == nullptr) {
            throw ContractError("apply_sgd: momentum requires a velocity buffer");
        }
        auto vel = grad_views(*velocity);
        for (std::size_t i = 0; i < params.size(); ++i) {
            kernels::scale(vel[i].size, momentum, vel[i].data);
            kernels::axpy(vel[i].size, 1.0, grads[i].data, vel[i].data);
            kernels::axpy(params[i].size, -lr, vel[i].data, params[i].data);
        }
    } else {
        for (std::size_t i = 0; i < params.size(); ++i) {
            kernels::axpy(params[i].size, -lr, grads[i].data, params[i].data);
        }
    }
}

StepResult train_step(ModelParams& model, std::span<const Sample> data,
                      std::span<const std::size_t> batch, double lr, double momentum,
                      ModelGrad* velocity, std::size_t epoch, std::size_t batch_index) {
    BatchGradients bg;
    try {
        bg = compute_batch_gradients(model, data, batch);
    } catch (const NumericError& e) {
        // a non-finite parameter from an earlier blow-up surfaces here
        throw DivergenceError("divergence at epoch " + std::to_string(epoch) + ", batch " +
                              std::to_string(batch_index) + ": " + e.what());
    }
    if (!std::isfinite(bg.loss)) {
        throw DivergenceError("divergence: non-finite loss at epoch " + std::to_string(epoch) +
                              ", batch " + std::to_string(batch_index));
    }
    apply_sgd(model, bg.grad, lr, momentum, velocity);
    return {bg.loss, bg.grad_norm_a, bg.grad_norm_v};
}

BatchKeyStats frozen_batch_stats(const ModelParams& model, std::span<const Sample> data,
                                 std::span<const std::size_t> batch) {
    std::vector<FusionForwardTrace> traces;
    traces.reserve(batch.size());
    for (std::size_t idx : batch) {
        const Sample& sample = data[idx];
        traces.push_back(model_forward(model, sample.raw_a, sample.raw_v).fusion);
    }
    return compute_batch_stats(traces);
}

namespace {

BatchKeyStats merge_stats(const std::vector<BatchKeyStats>& parts,
                          const std::vector<std::size_t>& weights) {
    BatchKeyStats merged;
    const std::size_t d = parts.front().mean_query.dim();
    merged.mean_avg_key_a = Vector(d);
    merged.mean_avg_key_v = Vector(d);
    merged.mean_query = Vector(d);
    double total = 0.0;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        const double w = static_cast<double>(weights[i]);
        total += w;
        merged.mean_cos_a += w * parts[i].mean_cos_a;
        merged.mean_cos_v += w * parts[i].mean_cos_v;
        add_scaled(merged.mean_avg_key_a, parts[i].mean_avg_key_a, w);
        add_scaled(merged.mean_avg_key_v, parts[i].mean_avg_key_v, w);
        add_scaled(merged.mean_query, parts[i].mean_query, w);
    }
    merged.mean_cos_a /= total;
    merged.mean_cos_v /= total;
    scale_in_place(merged.mean_avg_key_a, 1.0 / total);
    scale_in_place(merged.mean_avg_key_v, 1.0 / total);
    scale_in_place(merged.mean_query, 1.0 / total);
    merged.air = merged.mean_cos_a - merged.mean_cos_v;
    return merged;
}

}  // namespace

TrainReport run(const TrainConfig& cfg, const ModelSpec& spec, const Dataset& dataset) {
    validate(cfg);
    const SyntheticSpec& data_spec = dataset.spec;
    ModelDims dims;
    dims.dim_in_a = data_spec.dim_in_a;
    dims.dim_in_v = data_spec.dim_in_v;
    dims.hidden = spec.hidden;
    dims.dim = spec.dim;
    dims.classes = data_spec.classes;

    Rng init_rng(mix_seed(cfg.seed, kInitStream));
    Rng shuffle_rng(mix_seed(cfg.seed, kShuffleStream));

    TrainReport report;
    report.model = init_model(dims, spec.init_std, init_rng);
    ModelGrad velocity = zeros_like(report.model);

    const std::span<const Sample> train(dataset.train);
    const std::span<const Sample> test(dataset.test);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = lr_at(epoch, cfg);
        const auto batches = epoch_batches(train.size(), cfg.batch_size, shuffle_rng);

        double loss_sum = 0.0;
        double grad_norm_a_sum = 0.0;
        double grad_norm_v_sum = 0.0;
        std::size_t samples_seen = 0;

        std::vector<BatchKeyStats> epoch_stats;
        std::vector<std::size_t> epoch_weights;
        ControllerEvent event;

        for (std::size_t j = 0; j < batches.size(); ++j) {
            const auto& batch = batches[j];
            const StepResult step = train_step(report.model, train, batch, lr, cfg.momentum,
                                               &velocity, epoch, j);
            loss_sum += step.loss * static_cast<double>(batch.size());
            samples_seen += batch.size();
            grad_norm_a_sum += step.grad_norm_a;
            grad_norm_v_sum += step.grad_norm_v;

            const bool last = j + 1 == batches.size();
            if (cfg.controller_epoch_average) {
                epoch_stats.push_back(frozen_batch_stats(report.model, train, batch));
                epoch_weights.push_back(batch.size());
            }
            const bool fire = last || (cfg.rollingq_enabled && cfg.controller_every_batch);
            if (!fire) {
                continue;
            }
            const BatchKeyStats stats =
                cfg.controller_epoch_average
                    ? merge_stats(epoch_stats, epoch_weights)
                    : frozen_batch_stats(report.model, train, batch);
            if (cfg.rollingq_enabled) {
                event = controller_step(report.controller, cfg.rollingq, stats,
                                        report.model.fusion, epoch);
                report.controller_events.push_back(event);
            } else {
                event = ControllerEvent{epoch, stats.air, kNaN, false};
            }
        }

        DiagnosticsRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(samples_seen);
        rec.grad_norm_a = grad_norm_a_sum / static_cast<double>(batches.size());
        rec.grad_norm_v = grad_norm_v_sum / static_cast<double>(batches.size());
        rec.air = event.air;
        rec.alpha = event.alpha;
        rec.rotation_applied = event.applied;

        const bool eval_now = (epoch % cfg.eval_every == 0) || (epoch + 1 == cfg.epochs);
        if (eval_now) {
            const SnapshotStats snap = snapshot(report.model, test);
            rec.test_accuracy = snap.accuracy;
            rec.score_sum_a = snap.mean_score_a;
            rec.score_sum_v = snap.mean_score_v;
            rec.mean_cos_a = snap.mean_cos_a;
            rec.mean_cos_v = snap.mean_cos_v;
            rec.mean_key_norm_a = snap.mean_key_norm_a;
            rec.mean_key_norm_v = snap.mean_key_norm_v;
            rec.log_key_norm_ratio = std::log(snap.mean_key_norm_a / snap.mean_key_norm_v);
            if (epoch + 1 == cfg.epochs) {
                report.final_scatter = snap.scatter;
            }
        } else {
            rec.test_accuracy = kNaN;
            rec.score_sum_a = kNaN;
            rec.score_sum_v = kNaN;
            rec.mean_cos_a = kNaN;
            rec.mean_cos_v = kNaN;
            rec.mean_key_norm_a = kNaN;
            rec.mean_key_norm_v = kNaN;
            rec.log_key_norm_ratio = kNaN;
        }
        validate_record(rec);
        report.records.push_back(rec);
    }
    report.final_test_accuracy = report.records.back().test_accuracy;
    return report;
}

}  // namespace mmfusion
