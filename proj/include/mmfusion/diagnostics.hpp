#pragma once

#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "mmfusion/model.hpp"
#include "mmfusion/rollingq.hpp"
#include "mmfusion/synthdata.hpp"

namespace mmfusion {

// One row of the exported per-epoch trace. Optional fields (alpha, and the
// eval-side fields on epochs without an evaluation pass) hold NaN.
struct DiagnosticsRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double test_accuracy = 0.0;
    double score_sum_a = 0.0;
    double score_sum_v = 0.0;
    double air = 0.0;
    double alpha = 0.0;
    bool rotation_applied = false;
    double mean_cos_a = 0.0;
    double mean_cos_v = 0.0;
    double mean_key_norm_a = 0.0;
    double mean_key_norm_v = 0.0;
    double log_key_norm_ratio = 0.0;
    double grad_norm_a = 0.0;
    double grad_norm_v = 0.0;
};

// Throws on an invariant violation; NaN-valued optional fields are skipped.
void validate_record(const DiagnosticsRecord& rec);

// One row per (sample, modality) of key geometry, the data behind the
// key-distribution scatter plots.
struct ScatterRow {
    std::size_t sample_id = 0;
    Modality modality = Modality::a;
    double cosine = 0.0;
    double key_norm = 0.0;
    bool is_noise = false;
};

// Forward-only evaluation aggregates; never mutates the model.
struct SnapshotStats {
    double accuracy = 0.0;
    double mean_score_a = 0.0;
    double mean_score_v = 0.0;
    double mean_cos_a = 0.0;
    double mean_cos_v = 0.0;
    double mean_key_norm_a = 0.0;
    double mean_key_norm_v = 0.0;
    double air = 0.0;  // eval-set mean of (cos_a - cos_v)
    std::vector<ScatterRow> scatter;
};

SnapshotStats snapshot(const ModelParams& model, std::span<const Sample> eval_set);

double evaluate_accuracy(const ModelParams& model, std::span<const Sample> eval_set,
                         AblationMode mode = AblationMode::none);

struct NoiseResponseRow {
    double level = 0.0;
    double accuracy = 0.0;
    double mean_score_perturbed = 0.0;  // attention mass of the perturbed modality
};

// Accuracy and perturbed-modality attention mass at each noise level.
// Deterministic in (model, eval_set, seed).
std::vector<NoiseResponseRow> noise_response(const ModelParams& model,
                                             std::span<const Sample> eval_set, Modality modality,
                                             std::span<const double> levels, PerturbMode mode,
                                             std::uint64_t seed);

// Pearson correlation between a binary clean indicator (1 = clean sample,
// 0 = the given modality replaced by matched-variance noise) and that
// modality's attention mass, over |eval| clean + |eval| noise rows.
// Implemented on top of correlate_rows below.
double noise_attention_correlation(const ModelParams& model, std::span<const Sample> eval_set,
                                   Modality modality, Rng& rng,
                                   std::vector<ScatterRow>* scatter = nullptr);

struct IndicatorMassRow {
    double indicator = 0.0;
    double mass = 0.0;
};

double correlate_rows(std::span<const IndicatorMassRow> rows);

struct QuagRow {
    AblationMode mode = AblationMode::none;
    double accuracy = 0.0;
};

// Accuracy under {none, mask_a, mask_v, block_average}; re-checks that
// block averaging preserves each modality's score mass while it runs.
std::vector<QuagRow> quag_ablation(const ModelParams& model, std::span<const Sample> eval_set);

// --- export -------------------------------------------------------------

extern const char* const kDiagnosticsCsvHeader;

void write_diagnostics_csv(std::span<const DiagnosticsRecord> records,
                           const std::filesystem::path& path);
std::vector<DiagnosticsRecord> read_diagnostics_csv(const std::filesystem::path& path);

void write_scatter_csv(std::span<const ScatterRow> rows, const std::filesystem::path& path);

struct FinalMetrics {
    std::size_t epochs = 0;
    double train_loss = 0.0;
    double test_accuracy = 0.0;
    double air = 0.0;
    double score_sum_a = 0.0;
    double score_sum_v = 0.0;
    std::size_t rotations_used = 0;
};

void write_summary(std::string_view config_echo, std::span<const ControllerEvent> events,
                   const FinalMetrics& final_metrics, const std::filesystem::path& path);

const char* ablation_mode_name(AblationMode mode);

}  // namespace mmfusion
