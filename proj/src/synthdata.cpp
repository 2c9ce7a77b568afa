#include "mmfusion/synthdata.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <string>

#include "mmfusion/errors.hpp"
#include "mmfusion/kernels.hpp"
#include "mmfusion/text.hpp"

namespace mmfusion {

void validate(const SyntheticSpec& spec) {
    if (spec.classes < 2) {
        throw ContractError("synthdata: need at least 2 classes");
    }
    if (spec.len_a == 0 || spec.len_v == 0 || spec.dim_in_a == 0 || spec.dim_in_v == 0) {
        throw ContractError("synthdata: token counts and dims must be positive");
    }
    if (spec.s_a < 0.0 || spec.s_v < 0.0 || (spec.s_a == 0.0 && spec.s_v == 0.0)) {
        throw ContractError("synthdata: at least one informativeness multiplier must be > 0");
    }
    if (spec.flip_prob < 0.0 || spec.flip_prob > 1.0) {
        throw ContractError("synthdata: flip_prob must lie in [0, 1]");
    }
    if (spec.train_size == 0 || spec.test_size == 0) {
        throw ContractError("synthdata: split sizes must be positive");
    }
}

namespace {

Vector random_unit(Rng& rng, std::size_t dim) {
    for (;;) {
        Vector v(dim);
        for (std::size_t i = 0; i < dim; ++i) {
            v[i] = rng.normal();
        }
        const double norm = l2_norm(v);
        if (norm > 1e-6) {
            scale_in_place(v, 1.0 / norm);
            return v;
        }
    }
}

Matrix sample_tokens(Rng& rng, std::size_t len, const Vector& prototype, double signal) {
    Matrix tokens(len, prototype.dim());
    for (std::size_t t = 0; t < len; ++t) {
        double* row = tokens.row(t);
        for (std::size_t j = 0; j < prototype.dim(); ++j) {
            row[j] = signal * prototype[j] + rng.normal();
        }
    }
    return tokens;
}

std::vector<Sample> generate_split(const SyntheticSpec& spec, const Dataset& ds,
                                   std::size_t count, Rng& rng) {
    // Round-robin labels for exact class balance, then a seeded shuffle.
    std::vector<std::size_t> labels(count);
    for (std::size_t i = 0; i < count; ++i) {
        labels[i] = i % spec.classes;
    }
    shuffle(labels, rng);

    std::vector<Sample> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        Sample s;
        s.label = labels[i];
        const bool flip = rng.uniform() < spec.flip_prob;
        const double signal_a = flip ? spec.s_v : spec.s_a;
        const double signal_v = flip ? spec.s_a : spec.s_v;
        s.informative_modality = signal_a >= signal_v ? Modality::a : Modality::v;
        s.raw_a = sample_tokens(rng, spec.len_a, ds.prototypes_a[s.label], signal_a);
        s.raw_v = sample_tokens(rng, spec.len_v, ds.prototypes_v[s.label], signal_v);
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace

Dataset generate(const SyntheticSpec& spec) {
    validate(spec);
    Dataset ds;
    ds.spec = spec;
    Rng proto_rng(mix_seed(spec.seed, 0));
    for (std::size_t c = 0; c < spec.classes; ++c) {
        ds.prototypes_a.push_back(random_unit(proto_rng, spec.dim_in_a));
        ds.prototypes_v.push_back(random_unit(proto_rng, spec.dim_in_v));
    }
    Rng train_rng(mix_seed(spec.seed, 1));
    Rng test_rng(mix_seed(spec.seed, 2));
    ds.train = generate_split(spec, ds, spec.train_size, train_rng);
    ds.test = generate_split(spec, ds, spec.test_size, test_rng);
    return ds;
}

Sample perturb(const Sample& sample, Modality modality, double level, PerturbMode mode,
               Rng& rng) {
    if (level < 0.0 || level > 1.0) {
        throw ContractError("perturb: level must lie in [0, 1]");
    }
    Sample out = sample;
    if (level == 0.0) {
        return out;
    }
    Matrix& tokens = modality == Modality::a ? out.raw_a : out.raw_v;

    double mean = 0.0;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        mean += tokens.data()[i];
    }
    mean /= static_cast<double>(tokens.size());
    double var = 0.0;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const double dev = tokens.data()[i] - mean;
        var += dev * dev;
    }
    var /= static_cast<double>(tokens.size());
    const double sigma = std::sqrt(var);

    const double keep = mode == PerturbMode::replace ? 1.0 - level : 1.0;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        tokens.data()[i] = keep * tokens.data()[i] + level * sigma * rng.normal();
    }
    return out;
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size,
                                                    Rng& rng) {
    if (n == 0 || batch_size == 0) {
        throw ContractError("epoch_batches: empty dataset or zero batch size");
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle(order, rng);

    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t end = std::min(n, start + batch_size);
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return batches;
}

namespace {

void dump_tokens(std::ofstream& out, const char* split, std::size_t id, const Sample& s,
                 Modality m) {
    const Matrix& tokens = m == Modality::a ? s.raw_a : s.raw_v;
    for (std::size_t t = 0; t < tokens.rows(); ++t) {
        out << split << ' ' << id << ' ' << modality_char(m) << ' ' << t << ' ' << s.label << ' '
            << modality_char(s.informative_modality);
        for (std::size_t j = 0; j < tokens.cols(); ++j) {
            out << ' ' << text::format_double(tokens.at(t, j));
        }
        out << '\n';
    }
}

}  // namespace

void dump_dataset(const Dataset& dataset, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("dump_dataset: cannot open '" + path.string() + "' for writing");
    }
    const SyntheticSpec& sp = dataset.spec;
    out << "mmfusion-dataset v1\n";
    out << "spec " << sp.classes << ' ' << sp.len_a << ' ' << sp.len_v << ' ' << sp.dim_in_a
        << ' ' << sp.dim_in_v << ' ' << text::format_double(sp.s_a) << ' '
        << text::format_double(sp.s_v) << ' ' << text::format_double(sp.flip_prob) << ' '
        << sp.train_size << ' ' << sp.test_size << ' ' << sp.seed << '\n';
    out << "columns split sample_id modality token_index label informative values...\n";
    for (std::size_t i = 0; i < dataset.train.size(); ++i) {
        dump_tokens(out, "train", i, dataset.train[i], Modality::a);
        dump_tokens(out, "train", i, dataset.train[i], Modality::v);
    }
    for (std::size_t i = 0; i < dataset.test.size(); ++i) {
        dump_tokens(out, "test", i, dataset.test[i], Modality::a);
        dump_tokens(out, "test", i, dataset.test[i], Modality::v);
    }
    if (!out) {
        throw IoError("dump_dataset: write failed for '" + path.string() + "'");
    }
}

Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("load_dataset: cannot open '" + path.string() + "'");
    }
    std::string header;
    std::getline(in, header);
    if (header != "mmfusion-dataset v1") {
        throw IoError("load_dataset: '" + path.string() + "' is not a v1 dataset dump");
    }
    Dataset ds;
    std::string word;
    in >> word;
    if (word != "spec") {
        throw IoError("load_dataset: missing spec line");
    }
    SyntheticSpec& sp = ds.spec;
    in >> sp.classes >> sp.len_a >> sp.len_v >> sp.dim_in_a >> sp.dim_in_v >> sp.s_a >> sp.s_v >>
        sp.flip_prob >> sp.train_size >> sp.test_size >> sp.seed;
    std::string rest;
    std::getline(in, rest);
    std::getline(in, rest);  // columns comment line

    // prototypes are a pure function of the generator seed
    Rng proto_rng(mix_seed(sp.seed, 0));
    for (std::size_t c = 0; c < sp.classes; ++c) {
        ds.prototypes_a.push_back(random_unit(proto_rng, sp.dim_in_a));
        ds.prototypes_v.push_back(random_unit(proto_rng, sp.dim_in_v));
    }

    ds.train.assign(sp.train_size, Sample{});
    ds.test.assign(sp.test_size, Sample{});
    for (Sample& s : ds.train) {
        s.raw_a = Matrix(sp.len_a, sp.dim_in_a);
        s.raw_v = Matrix(sp.len_v, sp.dim_in_v);
    }
    for (Sample& s : ds.test) {
        s.raw_a = Matrix(sp.len_a, sp.dim_in_a);
        s.raw_v = Matrix(sp.len_v, sp.dim_in_v);
    }

    std::string line;
    while (std::getline(in, line)) {
        if (text::trim(line).empty()) {
            continue;
        }
        const auto fields = text::split(text::trim(line), ' ');
        if (fields.size() < 6) {
            throw IoError("load_dataset: malformed row '" + line + "'");
        }
        auto& split_vec = fields[0] == "train" ? ds.train : ds.test;
        if (fields[0] != "train" && fields[0] != "test") {
            throw IoError("load_dataset: unknown split '" + std::string(fields[0]) + "'");
        }
        const std::size_t id = static_cast<std::size_t>(text::parse_uint(fields[1]));
        if (id >= split_vec.size()) {
            throw IoError("load_dataset: sample id out of range");
        }
        Sample& s = split_vec[id];
        const Modality m = fields[2] == "a" ? Modality::a : Modality::v;
        const std::size_t t = static_cast<std::size_t>(text::parse_uint(fields[3]));
        s.label = static_cast<std::size_t>(text::parse_uint(fields[4]));
        s.informative_modality = fields[5] == "a" ? Modality::a : Modality::v;
        Matrix& tokens = m == Modality::a ? s.raw_a : s.raw_v;
        if (t >= tokens.rows() || fields.size() != 6 + tokens.cols()) {
            throw IoError("load_dataset: token row shape mismatch");
        }
        for (std::size_t j = 0; j < tokens.cols(); ++j) {
            tokens.at(t, j) = text::parse_double(fields[6 + j]);
        }
    }
    return ds;
}

}  // namespace mmfusion
