#include "mmfusion/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <string>

#include "mmfusion/errors.hpp"
#include "mmfusion/text.hpp"

namespace mmfusion {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::size_t argmax(const Vector& v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.dim(); ++i) {
        if (v[i] > v[best]) {
            best = i;
        }
    }
    return best;
}

void check_range(const char* name, double value, double lo, double hi, double slack) {
    if (std::isnan(value)) {
        return;  // optional field
    }
    if (value < lo - slack || value > hi + slack) {
        throw NumericError("diagnostics: field '" + std::string(name) + "' = " +
                           text::format_double(value) + " outside [" + text::format_double(lo) +
                           ", " + text::format_double(hi) + "]");
    }
}

}  // namespace

void validate_record(const DiagnosticsRecord& rec) {
    check_range("score_sum_a", rec.score_sum_a, 0.0, 1.0, 1e-9);
    check_range("score_sum_v", rec.score_sum_v, 0.0, 1.0, 1e-9);
    if (!std::isnan(rec.score_sum_a) && !std::isnan(rec.score_sum_v)) {
        if (std::abs(rec.score_sum_a + rec.score_sum_v - 1.0) > 1e-9) {
            throw NumericError("diagnostics: score sums do not add to 1");
        }
    }
    check_range("air", rec.air, -2.0, 2.0, 1e-9);
    check_range("alpha", rec.alpha, 0.0, 1.0, 0.0);
    check_range("test_accuracy", rec.test_accuracy, 0.0, 1.0, 0.0);
    check_range("mean_cos_a", rec.mean_cos_a, -1.0, 1.0, 1e-9);
    check_range("mean_cos_v", rec.mean_cos_v, -1.0, 1.0, 1e-9);
    if (!std::isnan(rec.train_loss) && !std::isfinite(rec.train_loss)) {
        throw NumericError("diagnostics: non-finite train loss");
    }
}

SnapshotStats snapshot(const ModelParams& model, std::span<const Sample> eval_set) {
    if (eval_set.empty()) {
        throw ContractError("snapshot: empty evaluation set");
    }
    SnapshotStats s;
    s.scatter.reserve(2 * eval_set.size());
    std::size_t correct = 0;
    for (std::size_t i = 0; i < eval_set.size(); ++i) {
        const Sample& sample = eval_set[i];
        const SampleForward f = model_forward(model, sample.raw_a, sample.raw_v);
        if (argmax(f.logits) == sample.label) {
            ++correct;
        }
        s.mean_score_a += f.fusion.score_sum_a;
        s.mean_score_v += f.fusion.score_sum_v;
        const CosineDecompositionPair decomp = cosine_decomposition(f.fusion);
        s.mean_cos_a += decomp.a.cosine;
        s.mean_cos_v += decomp.v.cosine;
        s.mean_key_norm_a += decomp.a.mean_key_norm;
        s.mean_key_norm_v += decomp.v.mean_key_norm;
        s.scatter.push_back({i, Modality::a, decomp.a.cosine, decomp.a.mean_key_norm, false});
        s.scatter.push_back({i, Modality::v, decomp.v.cosine, decomp.v.mean_key_norm, false});
    }
    const double inv_n = 1.0 / static_cast<double>(eval_set.size());
    s.accuracy = static_cast<double>(correct) * inv_n;
    s.mean_score_a *= inv_n;
    s.mean_score_v *= inv_n;
    s.mean_cos_a *= inv_n;
    s.mean_cos_v *= inv_n;
    s.mean_key_norm_a *= inv_n;
    s.mean_key_norm_v *= inv_n;
    s.air = s.mean_cos_a - s.mean_cos_v;
    return s;
}

double evaluate_accuracy(const ModelParams& model, std::span<const Sample> eval_set,
                         AblationMode mode) {
    if (eval_set.empty()) {
        throw ContractError("evaluate_accuracy: empty evaluation set");
    }
    std::size_t correct = 0;
    for (const Sample& sample : eval_set) {
        const SampleForward f = model_forward(model, sample.raw_a, sample.raw_v, mode);
        if (argmax(f.logits) == sample.label) {
            ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(eval_set.size());
}

std::vector<NoiseResponseRow> noise_response(const ModelParams& model,
                                             std::span<const Sample> eval_set, Modality modality,
                                             std::span<const double> levels, PerturbMode mode,
                                             std::uint64_t seed) {
    if (eval_set.empty()) {
        throw ContractError("noise_response: empty evaluation set");
    }
    std::vector<NoiseResponseRow> rows;
    rows.reserve(levels.size());
    for (std::size_t li = 0; li < levels.size(); ++li) {
        const double level = levels[li];
        Rng rng(mix_seed(seed, li));
        NoiseResponseRow row;
        row.level = level;
        std::size_t correct = 0;
        double mass = 0.0;
        for (const Sample& sample : eval_set) {
            const Sample noisy = perturb(sample, modality, level, mode, rng);
            const SampleForward f = model_forward(model, noisy.raw_a, noisy.raw_v);
            if (argmax(f.logits) == sample.label) {
                ++correct;
            }
            mass += modality == Modality::a ? f.fusion.score_sum_a : f.fusion.score_sum_v;
        }
        row.accuracy = static_cast<double>(correct) / static_cast<double>(eval_set.size());
        row.mean_score_perturbed = mass / static_cast<double>(eval_set.size());
        rows.push_back(row);
    }
    return rows;
}

double correlate_rows(std::span<const IndicatorMassRow> rows) {
    std::vector<double> indicator;
    std::vector<double> mass;
    indicator.reserve(rows.size());
    mass.reserve(rows.size());
    for (const IndicatorMassRow& r : rows) {
        indicator.push_back(r.indicator);
        mass.push_back(r.mass);
    }
    return pearson(indicator, mass);
}

double noise_attention_correlation(const ModelParams& model, std::span<const Sample> eval_set,
                                   Modality modality, Rng& rng,
                                   std::vector<ScatterRow>* scatter) {
    if (eval_set.size() < 50) {
        throw ContractError("noise_attention_correlation: need at least 50 samples");
    }
    std::vector<IndicatorMassRow> rows;
    rows.reserve(2 * eval_set.size());
    for (std::size_t i = 0; i < eval_set.size(); ++i) {
        const Sample& sample = eval_set[i];
        const SampleForward f = model_forward(model, sample.raw_a, sample.raw_v);
        const double mass =
            modality == Modality::a ? f.fusion.score_sum_a : f.fusion.score_sum_v;
        rows.push_back({1.0, mass});
        if (scatter != nullptr) {
            const CosineDecompositionPair decomp = cosine_decomposition(f.fusion);
            scatter->push_back({i, Modality::a, decomp.a.cosine, decomp.a.mean_key_norm, false});
            scatter->push_back({i, Modality::v, decomp.v.cosine, decomp.v.mean_key_norm, false});
        }
    }
    for (std::size_t i = 0; i < eval_set.size(); ++i) {
        const Sample noisy = perturb(eval_set[i], modality, 1.0, PerturbMode::replace, rng);
        const SampleForward f = model_forward(model, noisy.raw_a, noisy.raw_v);
        const double mass =
            modality == Modality::a ? f.fusion.score_sum_a : f.fusion.score_sum_v;
        rows.push_back({0.0, mass});
        if (scatter != nullptr) {
            const CosineDecompositionPair decomp = cosine_decomposition(f.fusion);
            const CosineDecomposition& noisy_side =
                modality == Modality::a ? decomp.a : decomp.v;
            scatter->push_back({i, modality, noisy_side.cosine, noisy_side.mean_key_norm, true});
        }
    }
    return correlate_rows(rows);
}

std::vector<QuagRow> quag_ablation(const ModelParams& model, std::span<const Sample> eval_set) {
    if (eval_set.empty()) {
        throw ContractError("quag_ablation: empty evaluation set");
    }
    std::vector<QuagRow> rows;
    for (AblationMode mode : {AblationMode::none, AblationMode::mask_a, AblationMode::mask_v,
                              AblationMode::block_average}) {
        rows.push_back({mode, evaluate_accuracy(model, eval_set, mode)});
    }
    // Mass-preservation recheck for block averaging.
    for (const Sample& sample : eval_set) {
        const SampleForward plain = model_forward(model, sample.raw_a, sample.raw_v);
        const SampleForward averaged =
            model_forward(model, sample.raw_a, sample.raw_v, AblationMode::block_average);
        if (std::abs(plain.fusion.score_sum_a - averaged.fusion.score_sum_a) > 1e-12 ||
            std::abs(plain.fusion.score_sum_v - averaged.fusion.score_sum_v) > 1e-12) {
            throw NumericError("quag_ablation: block averaging failed to preserve score mass");
        }
    }
    return rows;
}

// --- export ---------------------------------------------------------------

const char* const kDiagnosticsCsvHeader =
    "epoch,train_loss,test_accuracy,score_sum_a,score_sum_v,air,alpha,rotation_applied,"
    "mean_cos_a,mean_cos_v,mean_key_norm_a,mean_key_norm_v,log_key_norm_ratio,"
    "grad_norm_a,grad_norm_v";

void write_diagnostics_csv(std::span<const DiagnosticsRecord> records,
                           const std::filesystem::path& path) {
    if (records.empty()) {
        throw ContractError("write_diagnostics_csv: no records");
    }
    std::ofstream out(path);
    if (!out) {
        throw IoError("write_diagnostics_csv: cannot open '" + path.string() + "' for writing");
    }
    out << kDiagnosticsCsvHeader << '\n';
    for (const DiagnosticsRecord& r : records) {
        out << r.epoch << ',' << text::format_double(r.train_loss) << ','
            << text::format_double(r.test_accuracy) << ',' << text::format_double(r.score_sum_a)
            << ',' << text::format_double(r.score_sum_v) << ',' << text::format_double(r.air)
            << ',' << text::format_double(r.alpha) << ',' << (r.rotation_applied ? 1 : 0) << ','
            << text::format_double(r.mean_cos_a) << ',' << text::format_double(r.mean_cos_v)
            << ',' << text::format_double(r.mean_key_norm_a) << ','
            << text::format_double(r.mean_key_norm_v) << ','
            << text::format_double(r.log_key_norm_ratio) << ','
            << text::format_double(r.grad_norm_a) << ',' << text::format_double(r.grad_norm_v)
            << '\n';
    }
    if (!out) {
        throw IoError("write_diagnostics_csv: write failed for '" + path.string() + "'");
    }
}

std::vector<DiagnosticsRecord> read_diagnostics_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("read_diagnostics_csv: cannot open '" + path.string() + "'");
    }
    std::string line;
    if (!std::getline(in, line) || line != kDiagnosticsCsvHeader) {
        throw IoError("read_diagnostics_csv: unexpected header in '" + path.string() + "'");
    }
    std::vector<DiagnosticsRecord> records;
    while (std::getline(in, line)) {
        if (text::trim(line).empty()) {
            continue;
        }
        const auto fields = text::split(line, ',');
        if (fields.size() != 15) {
            throw IoError("read_diagnostics_csv: expected 15 columns, got " +
                          std::to_string(fields.size()));
        }
        DiagnosticsRecord r;
        r.epoch = static_cast<std::size_t>(text::parse_uint(fields[0]));
        r.train_loss = text::parse_double(fields[1]);
        r.test_accuracy = text::parse_double(fields[2]);
        r.score_sum_a = text::parse_double(fields[3]);
        r.score_sum_v = text::parse_double(fields[4]);
        r.air = text::parse_double(fields[5]);
        r.alpha = text::parse_double(fields[6]);
        r.rotation_applied = text::parse_uint(fields[7]) != 0;
        r.mean_cos_a = text::parse_double(fields[8]);
        r.mean_cos_v = text::parse_double(fields[9]);
        r.mean_key_norm_a = text::parse_double(fields[10]);
        r.mean_key_norm_v = text::parse_double(fields[11]);
        r.log_key_norm_ratio = text::parse_double(fields[12]);
        r.grad_norm_a = text::parse_double(fields[13]);
        r.grad_norm_v = text::parse_double(fields[14]);
        records.push_back(r);
    }
    return records;
}

void write_scatter_csv(std::span<const ScatterRow> rows, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("write_scatter_csv: cannot open '" + path.string() + "' for writing");
    }
    out << "sample_id,modality,cosine,key_norm,is_noise\n";
    for (const ScatterRow& r : rows) {
        out << r.sample_id << ',' << modality_char(r.modality) << ','
            << text::format_double(r.cosine) << ',' << text::format_double(r.key_norm) << ','
            << (r.is_noise ? 1 : 0) << '\n';
    }
    if (!out) {
        throw IoError("write_scatter_csv: write failed for '" + path.string() + "'");
    }
}

void write_summary(std::string_view config_echo, std::span<const ControllerEvent> events,
                   const FinalMetrics& final_metrics, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("write_summary: cannot open '" + path.string() + "' for writing");
    }
    out << "# mmfusion run summary\n\n[config]\n" << config_echo << "\n[controller]\n";
    if (events.empty()) {
        out << "no controller events\n";
    } else {
        for (const ControllerEvent& ev : events) {
            out << "epoch=" << ev.epoch << " air=" << text::format_double(ev.air)
                << " alpha=" << text::format_double(ev.alpha)
                << " applied=" << (ev.applied ? 1 : 0) << '\n';
        }
    }
    out << "\n[final]\n";
    out << "epochs=" << final_metrics.epochs << '\n';
    out << "train_loss=" << text::format_double(final_metrics.train_loss) << '\n';
    out << "test_accuracy=" << text::format_double(final_metrics.test_accuracy) << '\n';
    out << "air=" << text::format_double(final_metrics.air) << '\n';
    out << "score_sum_a=" << text::format_double(final_metrics.score_sum_a) << '\n';
    out << "score_sum_v=" << text::format_double(final_metrics.score_sum_v) << '\n';
    out << "rotations_used=" << final_metrics.rotations_used << '\n';
    if (!out) {
        throw IoError("write_summary: write failed for '" + path.string() + "'");
    }
}

const char* ablation_mode_name(AblationMode mode) {
    switch (mode) {
        case AblationMode::none:
            return "none";
        case AblationMode::mask_a:
            return "mask-a";
        case AblationMode::mask_v:
            return "mask-v";
        case AblationMode::block_average:
            return "block-average";
    }
    return "unknown";
}

}  // namespace mmfusion
