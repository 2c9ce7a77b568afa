#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mmfusion/attention.hpp"
#include "mmfusion/linalg.hpp"

namespace mmfusion {

// Two-layer per-token perceptron, ELU between the layers. ELU is smooth
// enough for central finite differences and passes nonnegative inputs
// through unchanged.
struct EncoderParams {
    Matrix w1;  // d_in x hidden
    Vector b1;
    Matrix w2;  // hidden x d
    Vector b2;
};

struct ClassifierParams {
    Matrix weight;  // d x C
    Vector bias;
};

struct ModelDims {
    std::size_t dim_in_a = 0;
    std::size_t dim_in_v = 0;
    std::size_t hidden = 0;
    std::size_t dim = 0;
    std::size_t classes = 0;
};

struct ModelParams {
    ModelDims dims;
    EncoderParams encoder_a;
    EncoderParams encoder_v;
    FusionParams fusion;
    ClassifierParams classifier;
};

double elu(double x);
double elu_derivative(double x);

struct EncoderTrace {
    Matrix input;
    Matrix pre_act;
    Matrix act;
};

ModalityTokens encode(const EncoderParams& params, const Matrix& raw, Modality id,
                      EncoderTrace* trace = nullptr);

struct EncoderGrad {
    Matrix w1;
    Vector b1;
    Matrix w2;
    Vector b2;
};

struct EncoderBackward {
    EncoderGrad grad;
    Matrix input_grad;
};

EncoderBackward encoder_backward(const EncoderParams& params, const EncoderTrace& trace,
                                 const Matrix& grad_tokens);

Vector classify(const ClassifierParams& params, const Vector& h);

struct CrossEntropyResult {
    double loss = 0.0;
    Vector grad_logits;
};

// loss = -log softmax(logits)[label], stable under large logits.
CrossEntropyResult cross_entropy(const Vector& logits, std::size_t label);

// Initialization, all from one Rng stream in a fixed draw order:
//   - fusion projections and the class token: truncated normal, std init_std
//   - encoder and classifier weights: truncated normal, std 1/sqrt(fan_in)
//   - biases zero, rotation identity
ModelParams init_model(const ModelDims& dims, double init_std, Rng& rng);

struct FusionGrad {
    Matrix w_q;
    Matrix w_k;
    Matrix w_v;
    Vector z_cls;
};

struct ClassifierGrad {
    Matrix weight;
    Vector bias;
};

struct ModelGrad {
    EncoderGrad encoder_a;
    EncoderGrad encoder_v;
    FusionGrad fusion;
    ClassifierGrad classifier;
};

ModelGrad zeros_like(const ModelParams& model);

// Flat views over every trainable array, in the declared checkpoint order.
// The rotation is listed only when include_rotation is set; it is never a
// gradient target.
struct ParamView {
    std::string name;
    double* data = nullptr;
    std::size_t size = 0;
};

std::vector<ParamView> param_views(ModelParams& model, bool include_rotation);
std::vector<ParamView> grad_views(ModelGrad& grad);

std::size_t param_count(const ModelParams& model, bool include_rotation);

// Whole-model forward pass on one sample's raw token matrices.
struct SampleForward {
    EncoderTrace enc_a;
    EncoderTrace enc_v;
    FusionForwardTrace fusion;
    Vector logits;
};

SampleForward model_forward(const ModelParams& model, const Matrix& raw_a, const Matrix& raw_v,
                            AblationMode mode = AblationMode::none);

// Plain-text checkpoint with hexfloat values; save/load round-trips are
// bit-exact.
void save_checkpoint(const ModelParams& model, std::uint64_t seed,
                     const std::filesystem::path& path);

struct Checkpoint {
    ModelParams model;
    std::uint64_t seed = 0;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mmfusion
