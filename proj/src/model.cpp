#include "mmfusion/model.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "mmfusion/errors.hpp"
#include "mmfusion/kernels.hpp"
#include "mmfusion/text.hpp"

namespace mmfusion {

double elu(double x) { return x >= 0.0 ? x : std::expm1(x); }

double elu_derivative(double x) { return x >= 0.0 ? 1.0 : std::exp(x); }

ModalityTokens encode(const EncoderParams& params, const Matrix& raw, Modality id,
                      EncoderTrace* trace) {
    if (raw.cols() != params.w1.rows()) {
        throw ContractError("encode: input dim " + std::to_string(raw.cols()) +
                            " does not match encoder input width " +
                            std::to_string(params.w1.rows()));
    }
    Matrix pre = matmul(raw, params.w1);
    add_row_in_place(pre, params.b1);
    Matrix act(pre.rows(), pre.cols());
    for (std::size_t i = 0; i < pre.size(); ++i) {
        act.data()[i] = elu(pre.data()[i]);
    }
    Matrix out = matmul(act, params.w2);
    add_row_in_place(out, params.b2);
    if (trace != nullptr) {
        trace->input = raw;
        trace->pre_act = pre;
        trace->act = act;
    }
    return ModalityTokens{id, std::move(out)};
}

EncoderBackward encoder_backward(const EncoderParams& params, const EncoderTrace& trace,
                                 const Matrix& grad_tokens) {
    if (grad_tokens.rows() != trace.act.rows() || grad_tokens.cols() != params.w2.cols()) {
        throw ContractError("encoder_backward: gradient shape mismatch");
    }
    EncoderBackward out;
    out.grad.w2 = matmul_tn(trace.act, grad_tokens);
    out.grad.b2 = Vector(params.b2.dim());
    for (std::size_t i = 0; i < grad_tokens.rows(); ++i) {
        kernels::axpy(grad_tokens.cols(), 1.0, grad_tokens.row(i), out.grad.b2.data());
    }

    Matrix act_grad = matmul_nt(grad_tokens, params.w2);
    for (std::size_t i = 0; i < act_grad.size(); ++i) {
        act_grad.data()[i] *= elu_derivative(trace.pre_act.data()[i]);
    }

    out.grad.w1 = matmul_tn(trace.input, act_grad);
    out.grad.b1 = Vector(params.b1.dim());
    for (std::size_t i = 0; i < act_grad.rows(); ++i) {
        kernels::axpy(act_grad.cols(), 1.0, act_grad.row(i), out.grad.b1.data());
    }
    out.input_grad = matmul_nt(act_grad, params.w1);
    return out;
}

Vector classify(const ClassifierParams& params, const Vector& h) {
    if (h.dim() != params.weight.rows()) {
        throw ContractError("classify: input dim " + std::to_string(h.dim()) +
                            " does not match classifier dim " +
                            std::to_string(params.weight.rows()));
    }
    Vector logits = vec_mat(h, params.weight);
    add_scaled(logits, params.bias, 1.0);
    return logits;
}

CrossEntropyResult cross_entropy(const Vector& logits, std::size_t label) {
    if (label >= logits.dim()) {
        throw ContractError("cross_entropy: label " + std::to_string(label) +
                            " out of range for " + std::to_string(logits.dim()) + " classes");
    }
    double max = logits[0];
    for (std::size_t i = 1; i < logits.dim(); ++i) {
        max = std::max(max, logits[i]);
    }
    double sum = 0.0;
    Vector soft(logits.dim());
    for (std::size_t i = 0; i < logits.dim(); ++i) {
        soft[i] = std::exp(logits[i] - max);
        sum += soft[i];
    }
    kernels::scale(soft.dim(), 1.0 / sum, soft.data());

    CrossEntropyResult res;
    res.loss = -(logits[label] - max - std::log(sum));
    res.grad_logits = soft;
    res.grad_logits[label] -= 1.0;
    return res;
}

namespace {

Matrix truncated_normal_matrix(Rng& rng, std::size_t rows, std::size_t cols, double stddev) {
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) {
        m.data()[i] = rng.truncated_normal(stddev);
    }
    return m;
}

double fan_in_std(std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

EncoderParams init_encoder(const ModelDims& dims, std::size_t dim_in, Rng& rng) {
    EncoderParams enc;
    enc.w1 = truncated_normal_matrix(rng, dim_in, dims.hidden, fan_in_std(dim_in));
    enc.b1 = Vector(dims.hidden);
    enc.w2 = truncated_normal_matrix(rng, dims.hidden, dims.dim, fan_in_std(dims.hidden));
    enc.b2 = Vector(dims.dim);
    return enc;
}

}  // namespace

ModelParams init_model(const ModelDims& dims, double init_std, Rng& rng) {
    if (dims.dim < 2 || dims.hidden == 0 || dims.classes < 2 || dims.dim_in_a == 0 ||
        dims.dim_in_v == 0) {
        throw ContractError("init_model: invalid dimensions");
    }
    if (!(init_std > 0.0)) {
        throw ContractError("init_model: init_std must be positive");
    }
    ModelParams m;
    m.dims = dims;
    m.encoder_a = init_encoder(dims, dims.dim_in_a, rng);
    m.encoder_v = init_encoder(dims, dims.dim_in_v, rng);
    // The query path (class token and its projection) uses the dedicated
    // init_std scale so attention can start near uniform; the key/value
    // projections are ordinary layers and use fan-in scaling.
    m.fusion.w_q = truncated_normal_matrix(rng, dims.dim, dims.dim, init_std);
    m.fusion.w_k = truncated_normal_matrix(rng, dims.dim, dims.dim, fan_in_std(dims.dim));
    m.fusion.w_v = truncated_normal_matrix(rng, dims.dim, dims.dim, fan_in_std(dims.dim));
    m.fusion.z_cls = truncated_normal_vector(rng, dims.dim, init_std);
    m.fusion.rotation = Matrix::identity(dims.dim);
    m.classifier.weight = truncated_normal_matrix(rng, dims.dim, dims.classes, fan_in_std(dims.dim));
    m.classifier.bias = Vector(dims.classes);
    return m;
}

ModelGrad zeros_like(const ModelParams& model) {
    ModelGrad g;
    auto enc = [](const EncoderParams& e) {
        return EncoderGrad{Matrix(e.w1.rows(), e.w1.cols()), Vector(e.b1.dim()),
                           Matrix(e.w2.rows(), e.w2.cols()), Vector(e.b2.dim())};
    };
    g.encoder_a = enc(model.encoder_a);
    g.encoder_v = enc(model.encoder_v);
    const std::size_t d = model.dims.dim;
    g.fusion = FusionGrad{Matrix(d, d), Matrix(d, d), Matrix(d, d), Vector(d)};
    g.classifier = ClassifierGrad{Matrix(d, model.dims.classes), Vector(model.dims.classes)};
    return g;
}

std::vector<ParamView> param_views(ModelParams& m, bool include_rotation) {
    std::vector<ParamView> v;
    auto mat = [&](const char* name, Matrix& x) { v.push_back({name, x.data(), x.size()}); };
    auto vec = [&](const char* name, Vector& x) { v.push_back({name, x.data(), x.dim()}); };
    mat("encoder_a.w1", m.encoder_a.w1);
    vec("encoder_a.b1", m.encoder_a.b1);
    mat("encoder_a.w2", m.encoder_a.w2);
    vec("encoder_a.b2", m.encoder_a.b2);
    mat("encoder_v.w1", m.encoder_v.w1);
    vec("encoder_v.b1", m.encoder_v.b1);
    mat("encoder_v.w2", m.encoder_v.w2);
    vec("encoder_v.b2", m.encoder_v.b2);
    mat("fusion.w_q", m.fusion.w_q);
    mat("fusion.w_k", m.fusion.w_k);
    mat("fusion.w_v", m.fusion.w_v);
    vec("fusion.z_cls", m.fusion.z_cls);
    if (include_rotation) {
        mat("fusion.rotation", m.fusion.rotation);
    }
    mat("classifier.weight", m.classifier.weight);
    vec("classifier.bias", m.classifier.bias);
    return v;
}

std::vector<ParamView> grad_views(ModelGrad& g) {
    std::vector<ParamView> v;
    auto mat = [&](const char* name, Matrix& x) { v.push_back({name, x.data(), x.size()}); };
    auto vec = [&](const char* name, Vector& x) { v.push_back({name, x.data(), x.dim()}); };
    mat("encoder_a.w1", g.encoder_a.w1);
    vec("encoder_a.b1", g.encoder_a.b1);
    mat("encoder_a.w2", g.encoder_a.w2);
    vec("encoder_a.b2", g.encoder_a.b2);
    mat("encoder_v.w1", g.encoder_v.w1);
    vec("encoder_v.b1", g.encoder_v.b1);
    mat("encoder_v.w2", g.encoder_v.w2);
    vec("encoder_v.b2", g.encoder_v.b2);
    mat("fusion.w_q", g.fusion.w_q);
    mat("fusion.w_k", g.fusion.w_k);
    mat("fusion.w_v", g.fusion.w_v);
    vec("fusion.z_cls", g.fusion.z_cls);
    mat("classifier.weight", g.classifier.weight);
    vec("classifier.bias", g.classifier.bias);
    return v;
}

std::size_t param_count(const ModelParams& model, bool include_rotation) {
    auto& mutable_model = const_cast<ModelParams&>(model);
    std::size_t total = 0;
    for (const auto& view : param_views(mutable_model, include_rotation)) {
        total += view.size;
    }
    return total;
}

SampleForward model_forward(const ModelParams& model, const Matrix& raw_a, const Matrix& raw_v,
                            AblationMode mode) {
    SampleForward f;
    ModalityTokens tok_a = encode(model.encoder_a, raw_a, Modality::a, &f.enc_a);
    ModalityTokens tok_v = encode(model.encoder_v, raw_v, Modality::v, &f.enc_v);
    f.fusion = fusion_forward(model.fusion, tok_a, tok_v, mode);
    f.logits = classify(model.classifier, f.fusion.output);
    return f;
}

void save_checkpoint(const ModelParams& model, std::uint64_t seed,
                     const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("save_checkpoint: cannot open '" + path.string() + "' for writing");
    }
    auto& mutable_model = const_cast<ModelParams&>(model);
    const ModelDims& d = model.dims;
    out << "mmfusion-checkpoint v1\n";
    out << "seed " << seed << "\n";
    out << "dims " << d.dim_in_a << " " << d.dim_in_v << " " << d.hidden << " " << d.dim << " "
        << d.classes << "\n";
    for (const auto& view : param_views(mutable_model, true)) {
        out << "tensor " << view.name << " " << view.size << "\n";
        for (std::size_t i = 0; i < view.size; ++i) {
            out << text::format_double_hex(view.data[i]);
            out << ((i % 8 == 7 || i + 1 == view.size) ? '\n' : ' ');
        }
    }
    out << "end\n";
    if (!out) {
        throw IoError("save_checkpoint: write failed for '" + path.string() + "'");
    }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("load_checkpoint: cannot open '" + path.string() + "'");
    }
    std::string word;
    std::string version;
    in >> word >> version;
    if (word != "mmfusion-checkpoint" || version != "v1") {
        throw IoError("load_checkpoint: '" + path.string() + "' is not a v1 checkpoint");
    }
    Checkpoint ck;
    ModelDims dims;
    in >> word >> ck.seed;
    if (word != "seed") {
        throw IoError("load_checkpoint: missing seed line");
    }
    in >> word >> dims.dim_in_a >> dims.dim_in_v >> dims.hidden >> dims.dim >> dims.classes;
    if (word != "dims" || !in) {
        throw IoError("load_checkpoint: missing dims line");
    }

    // Materialize a model with the right shapes, then overwrite every array.
    Rng scratch(0);
    ck.model = init_model(dims, 0.02, scratch);
    for (auto& view : param_views(ck.model, true)) {
        std::size_t size = 0;
        std::string name;
        in >> word >> name >> size;
        if (!in || word != "tensor" || name != view.name || size != view.size) {
            throw IoError("load_checkpoint: expected tensor '" + view.name + "' in '" +
                          path.string() + "'");
        }
        for (std::size_t i = 0; i < size; ++i) {
            std::string token;
            in >> token;
            if (!in) {
                throw IoError("load_checkpoint: truncated tensor '" + view.name + "'");
            }
            view.data[i] = text::parse_double(token);
        }
    }
    in >> word;
    if (word != "end") {
        throw IoError("load_checkpoint: missing end marker");
    }
    return ck;
}

}  // namespace mmfusion
