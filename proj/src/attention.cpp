#include "mmfusion/attention.hpp"

#include <cmath>
#include <string>

#include "mmfusion/errors.hpp"
#include "mmfusion/kernels.hpp"

namespace mmfusion {

Modality other(Modality m) { return m == Modality::a ? Modality::v : Modality::a; }

char modality_char(Modality m) { return static_cast<char>(m); }

Matrix FusionGradients::tokens_a() const {
    Matrix total = tokens_a_key_path;
    add_scaled(total, tokens_a_value_path, 1.0);
    return total;
}

Matrix FusionGradients::tokens_v() const {
    Matrix total = tokens_v_key_path;
    add_scaled(total, tokens_v_value_path, 1.0);
    return total;
}

namespace {

void check_params(const FusionParams& p) {
    const std::size_t d = p.z_cls.dim();
    auto square = [&](const Matrix& m, const char* name) {
        if (m.rows() != d || m.cols() != d) {
            throw ContractError(std::string("fusion: ") + name + " must be " +
                                std::to_string(d) + "x" + std::to_string(d) + ", got " +
                                std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
        }
    };
    square(p.w_q, "w_q");
    square(p.w_k, "w_k");
    square(p.w_v, "w_v");
    square(p.rotation, "rotation");
}

void check_tokens(const ModalityTokens& t, std::size_t d, Modality expect) {
    if (t.id != expect) {
        throw ContractError("fusion: modality tokens out of order");
    }
    if (t.tokens.rows() == 0) {
        throw ContractError("fusion: empty token sequence");
    }
    if (t.tokens.cols() != d) {
        throw ContractError("fusion: token dim " + std::to_string(t.tokens.cols()) +
                            " does not match model dim " + std::to_string(d));
    }
}

}  // namespace

FusionForwardTrace fusion_forward(const FusionParams& params, const ModalityTokens& tokens_a,
                                  const ModalityTokens& tokens_v, AblationMode mode) {
    check_params(params);
    const std::size_t d = params.z_cls.dim();
    check_tokens(tokens_a, d, Modality::a);
    check_tokens(tokens_v, d, Modality::v);

    FusionForwardTrace tr;
    tr.mode = mode;
    tr.tokens_a = tokens_a.tokens;
    tr.tokens_v = tokens_v.tokens;
    tr.query = vec_mat(vec_mat(params.z_cls, params.w_q), params.rotation);
    tr.keys_a = matmul(tokens_a.tokens, params.w_k);
    tr.keys_v = matmul(tokens_v.tokens, params.w_k);
    tr.values_a = matmul(tokens_a.tokens, params.w_v);
    tr.values_v = matmul(tokens_v.tokens, params.w_v);

    const std::size_t len_a = tr.keys_a.rows();
    const std::size_t len_v = tr.keys_v.rows();
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

    tr.logits = Vector(len_a + len_v);
    for (std::size_t j = 0; j < len_a; ++j) {
        tr.logits[j] = kernels::dot(d, tr.query.data(), tr.keys_a.row(j)) * inv_sqrt_d;
    }
    for (std::size_t j = 0; j < len_v; ++j) {
        tr.logits[len_a + j] = kernels::dot(d, tr.query.data(), tr.keys_v.row(j)) * inv_sqrt_d;
    }

    if (mode == AblationMode::mask_a) {
        for (std::size_t j = 0; j < len_a; ++j) {
            tr.logits[j] = kNegInf;
        }
    } else if (mode == AblationMode::mask_v) {
        for (std::size_t j = 0; j < len_v; ++j) {
            tr.logits[len_a + j] = kNegInf;
        }
    }

    tr.scores = softmax_row(tr.logits);

    if (mode == AblationMode::block_average) {
        double mean_a = 0.0;
        double mean_v = 0.0;
        for (std::size_t j = 0; j < len_a; ++j) {
            mean_a += tr.scores[j];
        }
        for (std::size_t j = 0; j < len_v; ++j) {
            mean_v += tr.scores[len_a + j];
        }
        mean_a /= static_cast<double>(len_a);
        mean_v /= static_cast<double>(len_v);
        for (std::size_t j = 0; j < len_a; ++j) {
            tr.scores[j] = mean_a;
        }
        for (std::size_t j = 0; j < len_v; ++j) {
            tr.scores[len_a + j] = mean_v;
        }
    }

    tr.output = Vector(d);
    for (std::size_t j = 0; j < len_a; ++j) {
        kernels::axpy(d, tr.scores[j], tr.values_a.row(j), tr.output.data());
    }
    for (std::size_t j = 0; j < len_v; ++j) {
        kernels::axpy(d, tr.scores[len_a + j], tr.values_v.row(j), tr.output.data());
    }

    tr.score_sum_a = 0.0;
    tr.score_sum_v = 0.0;
    for (std::size_t j = 0; j < len_a; ++j) {
        tr.score_sum_a += tr.scores[j];
    }
    for (std::size_t j = 0; j < len_v; ++j) {
        tr.score_sum_v += tr.scores[len_a + j];
    }
    return tr;
}

FusionGradients fusion_backward(const FusionParams& params, const FusionForwardTrace& trace,
                                const Vector& grad_output) {
    if (trace.mode != AblationMode::none) {
        throw ContractError("fusion_backward: ablation traces are evaluation-only");
    }
    check_params(params);
    const std::size_t d = params.z_cls.dim();
    if (grad_output.dim() != d || trace.query.dim() != d) {
        throw ContractError("fusion_backward: trace/param shape mismatch");
    }
    const std::size_t len_a = trace.keys_a.rows();
    const std::size_t len_v = trace.keys_v.rows();
    const std::size_t len = len_a + len_v;
    if (trace.scores.dim() != len) {
        throw ContractError("fusion_backward: trace/param shape mismatch");
    }
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

    auto key_row = [&](std::size_t j) {
        return j < len_a ? trace.keys_a.row(j) : trace.keys_v.row(j - len_a);
    };
    auto value_row = [&](std::size_t j) {
        return j < len_a ? trace.values_a.row(j) : trace.values_v.row(j - len_a);
    };

    // d(loss)/d(score_j) and softmax backward
    Vector score_grad(len);
    for (std::size_t j = 0; j < len; ++j) {
        score_grad[j] = kernels::dot(d, value_row(j), grad_output.data());
    }
    double weighted = 0.0;
    for (std::size_t j = 0; j < len; ++j) {
        weighted += trace.scores[j] * score_grad[j];
    }
    Vector logit_grad(len);
    for (std::size_t j = 0; j < len; ++j) {
        logit_grad[j] = trace.scores[j] * (score_grad[j] - weighted);
    }

    // query path: dq = (1/sqrt(d)) * sum_j dlogit_j * k_j
    Vector query_grad(d);
    for (std::size_t j = 0; j < len; ++j) {
        kernels::axpy(d, logit_grad[j] * inv_sqrt_d, key_row(j), query_grad.data());
    }

    // key and value grads per token
    Matrix keys_a_grad(len_a, d);
    Matrix keys_v_grad(len_v, d);
    Matrix values_a_grad(len_a, d);
    Matrix values_v_grad(len_v, d);
    for (std::size_t j = 0; j < len_a; ++j) {
        kernels::axpy(d, logit_grad[j] * inv_sqrt_d, trace.query.data(), keys_a_grad.row(j));
        kernels::axpy(d, trace.scores[j], grad_output.data(), values_a_grad.row(j));
    }
    for (std::size_t j = 0; j < len_v; ++j) {
        kernels::axpy(d, logit_grad[len_a + j] * inv_sqrt_d, trace.query.data(),
                      keys_v_grad.row(j));
        kernels::axpy(d, trace.scores[len_a + j], grad_output.data(), values_v_grad.row(j));
    }

    FusionGradients g;
    // projection weights: w_k and w_v see both modalities' tokens
    g.w_k = matmul_tn(trace.tokens_a, keys_a_grad);
    add_scaled(g.w_k, matmul_tn(trace.tokens_v, keys_v_grad), 1.0);
    g.w_v = matmul_tn(trace.tokens_a, values_a_grad);
    add_scaled(g.w_v, matmul_tn(trace.tokens_v, values_v_grad), 1.0);

    // q = (z_cls * w_q) * R with R constant
    const Vector pre_rotation_grad = vec_mat_t(query_grad, params.rotation);
    g.w_q = outer(params.z_cls, pre_rotation_grad);
    g.z_cls = vec_mat_t(pre_rotation_grad, params.w_q);

    // token gradients, split into the two addends
    g.tokens_a_key_path = matmul_nt(keys_a_grad, params.w_k);
    g.tokens_v_key_path = matmul_nt(keys_v_grad, params.w_k);
    g.tokens_a_value_path = matmul_nt(values_a_grad, params.w_v);
    g.tokens_v_value_path = matmul_nt(values_v_grad, params.w_v);
    return g;
}

Vector average_keys(const Matrix& keys) {
    if (keys.rows() == 0) {
        throw ContractError("average_keys: empty key matrix");
    }
    Vector mean(keys.cols());
    for (std::size_t i = 0; i < keys.rows(); ++i) {
        kernels::axpy(keys.cols(), 1.0, keys.row(i), mean.data());
    }
    kernels::scale(mean.dim(), 1.0 / static_cast<double>(keys.rows()), mean.data());
    return mean;
}

std::pair<double, double> modality_score_sums(const FusionForwardTrace& trace) {
    return {trace.score_sum_a, trace.score_sum_v};
}

double CosineDecomposition::logit_sum(std::size_t dim) const {
    return static_cast<double>(len) / std::sqrt(static_cast<double>(dim)) * query_norm *
           mean_key_norm * cosine;
}

CosineDecompositionPair cosine_decomposition(const FusionForwardTrace& trace) {
    auto one = [&](const Matrix& keys) {
        CosineDecomposition out;
        const Vector avg = average_keys(keys);
        out.len = keys.rows();
        out.query_norm = l2_norm(trace.query);
        out.mean_key_norm = l2_norm(avg);
        out.cosine = cosine_similarity(trace.query, avg);
        return out;
    };
    return {one(trace.keys_a), one(trace.keys_v)};
}

}  // namespace mmfusion
