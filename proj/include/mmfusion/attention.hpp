#pragma once

#include <utility>

#include "mmfusion/linalg.hpp"

namespace mmfusion {

enum class Modality : char { a = 'a', v = 'v' };

Modality other(Modality m);
char modality_char(Modality m);

// Post-hoc attention surgery used as an evaluation probe only.
//   mask_a / mask_v   : set that modality's logits to -inf before softmax
//   block_average     : replace each score inside a modality block with the
//                       block mean (block mass preserved)
enum class AblationMode { none, mask_a, mask_v, block_average };

// Attention layer state. rotation starts as identity and is only ever
// multiplied by controller-produced rotations, so it stays orthogonal with
// det +1. The effective query is q = z_cls * w_q * rotation.
struct FusionParams {
    Matrix w_q;
    Matrix w_k;
    Matrix w_v;
    Vector z_cls;
    Matrix rotation;
};

struct ModalityTokens {
    Modality id;
    Matrix tokens;  // L x d
};

// Everything the forward pass computed, retained for the backward pass and
// for batch statistics. keys/values/logits/scores are ordered [block a,
// block v]; the class token contributes no key or value of its own.
struct FusionForwardTrace {
    Vector query;  // effective q
    Matrix tokens_a, tokens_v;
    Matrix keys_a, keys_v;
    Matrix values_a, values_v;
    Vector logits;
    Vector scores;
    Vector output;
    double score_sum_a = 0.0;
    double score_sum_v = 0.0;
    AblationMode mode = AblationMode::none;
};

// Token gradients are kept split into the two addends of the chain through
// the attention layer: the path through the keys (softmax logits) and the
// path through the values.
struct FusionGradients {
    Matrix w_q;
    Matrix w_k;
    Matrix w_v;
    Vector z_cls;
    Matrix tokens_a_key_path, tokens_a_value_path;
    Matrix tokens_v_key_path, tokens_v_value_path;

    Matrix tokens_a() const;
    Matrix tokens_v() const;
};

FusionForwardTrace fusion_forward(const FusionParams& params, const ModalityTokens& tokens_a,
                                  const ModalityTokens& tokens_v,
                                  AblationMode mode = AblationMode::none);

// Exact gradients of a scalar loss through the fusion layer, given
// d(loss)/d(output). The accumulated rotation is treated as a constant.
// Requires a trace produced with AblationMode::none.
FusionGradients fusion_backward(const FusionParams& params, const FusionForwardTrace& trace,
                                const Vector& grad_output);

// Row mean of a key matrix (the per-sample average key of one modality).
Vector average_keys(const Matrix& keys);

std::pair<double, double> modality_score_sums(const FusionForwardTrace& trace);

// Factors of the block logit sum: sum_j q.k_j / sqrt(d) =
// (len / sqrt(d)) * |q| * |avg key| * cos(theta).
struct CosineDecomposition {
    std::size_t len = 0;
    double query_norm = 0.0;
    double mean_key_norm = 0.0;
    double cosine = 0.0;

    double logit_sum(std::size_t dim) const;
};

struct CosineDecompositionPair {
    CosineDecomposition a;
    CosineDecomposition v;
};

CosineDecompositionPair cosine_decomposition(const FusionForwardTrace& trace);

}  // namespace mmfusion
