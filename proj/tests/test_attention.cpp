#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mmfusion/attention.hpp"
#include "mmfusion/errors.hpp"

using namespace mmfusion;

namespace {

// Params with w_k = w_v = identity and q = (q0, q1): keys and values equal
// the tokens, so attention quantities can be computed by hand.
FusionParams passthrough_params(double q0, double q1) {
    FusionParams p;
    p.w_q = Matrix::identity(2);
    p.w_k = Matrix::identity(2);
    p.w_v = Matrix::identity(2);
    p.z_cls = Vector::from({q0, q1});
    p.rotation = Matrix::identity(2);
    return p;
}

ModalityTokens tokens_a(std::initializer_list<std::initializer_list<double>> rows) {
    return {Modality::a, Matrix::from_rows(rows)};
}

ModalityTokens tokens_v(std::initializer_list<std::initializer_list<double>> rows) {
    return {Modality::v, Matrix::from_rows(rows)};
}

Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) {
        m.data()[i] = scale * rng.normal();
    }
    return m;
}

FusionParams random_params(Rng& rng, std::size_t d) {
    FusionParams p;
    p.w_q = random_matrix(rng, d, d, 0.6);
    p.w_k = random_matrix(rng, d, d, 0.6);
    p.w_v = random_matrix(rng, d, d, 0.6);
    p.z_cls = Vector(d);
    for (std::size_t i = 0; i < d; ++i) {
        p.z_cls[i] = 0.6 * rng.normal();
    }
    Vector from(d);
    Vector to(d);
    for (std::size_t i = 0; i < d; ++i) {
        from[i] = rng.normal();
        to[i] = rng.normal();
    }
    p.rotation = plane_rotation_from_pair(from, to);
    return p;
}

}  // namespace

TEST_CASE("symmetric keys split the score mass evenly") {
    const FusionParams p = passthrough_params(1.0, 0.0);
    const auto tr = fusion_forward(p, tokens_a({{1, 0}}), tokens_v({{1, 0}}));
    CHECK(tr.score_sum_a == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(tr.score_sum_v == doctest::Approx(0.5).epsilon(1e-12));
    // output is the mean of the two identical value rows
    CHECK(tr.output[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(tr.output[1] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("asymmetric keys match a hand softmax") {
    const FusionParams p = passthrough_params(1.0, 0.0);
    const auto tr = fusion_forward(p, tokens_a({{1, 0}}), tokens_v({{0, 1}}));
    // logits are (1/sqrt(2), 0)
    CHECK(tr.score_sum_a == doctest::Approx(0.6698).epsilon(1e-4));
    CHECK(tr.score_sum_v == doctest::Approx(0.3302).epsilon(1e-4));
    const auto sums = modality_score_sums(tr);
    CHECK(sums.first == tr.score_sum_a);
    CHECK(sums.second == tr.score_sum_v);
}

TEST_CASE("masking a modality zeroes its mass exactly") {
    const FusionParams p = passthrough_params(1.0, 0.0);
    const auto tr =
        fusion_forward(p, tokens_a({{1, 0}}), tokens_v({{0, 1}}), AblationMode::mask_v);
    CHECK(tr.score_sum_v == 0.0);
    CHECK(tr.score_sum_a == 1.0);
    const auto tr2 =
        fusion_forward(p, tokens_a({{1, 0}}), tokens_v({{0, 1}}), AblationMode::mask_a);
    CHECK(tr2.score_sum_a == 0.0);
    CHECK(tr2.score_sum_v == 1.0);
}

TEST_CASE("block averaging equalizes scores inside a block and keeps its mass") {
    Rng rng(21);
    const FusionParams p = random_params(rng, 6);
    const ModalityTokens ta{Modality::a, random_matrix(rng, 3, 6)};
    const ModalityTokens tv{Modality::v, random_matrix(rng, 4, 6)};
    const auto plain = fusion_forward(p, ta, tv);
    const auto avg = fusion_forward(p, ta, tv, AblationMode::block_average);
    CHECK(std::abs(avg.score_sum_a - plain.score_sum_a) < 1e-12);
    CHECK(std::abs(avg.score_sum_v - plain.score_sum_v) < 1e-12);
    for (std::size_t j = 1; j < 3; ++j) {
        CHECK(avg.scores[j] == avg.scores[0]);
    }
    for (std::size_t j = 4; j < 7; ++j) {
        CHECK(avg.scores[j] == avg.scores[3]);
    }
}

TEST_CASE("score sums stay in (0,1) and add to one") {
    Rng rng(22);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t d = 2 + rng.below(7);
        const FusionParams p = random_params(rng, d);
        const ModalityTokens ta{Modality::a, random_matrix(rng, 1 + rng.below(4), d)};
        const ModalityTokens tv{Modality::v, random_matrix(rng, 1 + rng.below(4), d)};
        const auto tr = fusion_forward(p, ta, tv);
        CHECK(tr.score_sum_a > 0.0);
        CHECK(tr.score_sum_a < 1.0);
        CHECK(tr.score_sum_v > 0.0);
        CHECK(tr.score_sum_v < 1.0);
        CHECK(std::abs(tr.score_sum_a + tr.score_sum_v - 1.0) < 1e-12);
    }
}

TEST_CASE("block logit sums factor into length, norms, and cosine") {
    Rng rng(23);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t d = 2 + rng.below(7);
        const FusionParams p = random_params(rng, d);
        const std::size_t len_a = 1 + rng.below(4);
        const std::size_t len_v = 1 + rng.below(4);
        const ModalityTokens ta{Modality::a, random_matrix(rng, len_a, d)};
        const ModalityTokens tv{Modality::v, random_matrix(rng, len_v, d)};
        const auto tr = fusion_forward(p, ta, tv);
        const auto decomp = cosine_decomposition(tr);

        double sum_a = 0.0;
        for (std::size_t j = 0; j < len_a; ++j) {
            sum_a += tr.logits[j];
        }
        double sum_v = 0.0;
        for (std::size_t j = 0; j < len_v; ++j) {
            sum_v += tr.logits[len_a + j];
        }
        CHECK(decomp.a.logit_sum(d) == doctest::Approx(sum_a).epsilon(1e-8));
        CHECK(decomp.v.logit_sum(d) == doctest::Approx(sum_v).epsilon(1e-8));
        CHECK(decomp.a.len == len_a);
        CHECK(decomp.v.len == len_v);
    }
}

TEST_CASE("cosine decomposition endpoints") {
    const FusionParams p = passthrough_params(2.0, 0.0);
    // aligned average key for a, orthogonal for v
    const auto tr = fusion_forward(p, tokens_a({{3, 0}}), tokens_v({{0, 1}}));
    const auto decomp = cosine_decomposition(tr);
    CHECK(decomp.a.cosine == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(decomp.v.cosine == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(decomp.v.logit_sum(2) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("rotation is an exact reparameterization of w_q") {
    Rng rng(24);
    const std::size_t d = 5;
    FusionParams with_rotation = random_params(rng, d);
    const ModalityTokens ta{Modality::a, random_matrix(rng, 2, d)};
    const ModalityTokens tv{Modality::v, random_matrix(rng, 3, d)};

    FusionParams folded = with_rotation;
    folded.w_q = matmul(with_rotation.w_q, with_rotation.rotation);
    folded.rotation = Matrix::identity(d);

    const auto tr1 = fusion_forward(with_rotation, ta, tv);
    const auto tr2 = fusion_forward(folded, ta, tv);
    for (std::size_t i = 0; i < d; ++i) {
        CHECK(tr1.query[i] == doctest::Approx(tr2.query[i]).epsilon(1e-12));
        CHECK(tr1.output[i] == doctest::Approx(tr2.output[i]).epsilon(1e-12));
    }
    CHECK(tr1.score_sum_a == doctest::Approx(tr2.score_sum_a).epsilon(1e-12));
}

TEST_CASE("average keys") {
    CHECK(average_keys(Matrix::from_rows({{1, 0}})) == Vector::from({1, 0}));
    CHECK(average_keys(Matrix::from_rows({{1, 0}, {3, 0}})) == Vector::from({2, 0}));
    const Matrix repeated = Matrix::from_rows({{2, -1}, {2, -1}, {2, -1}});
    const Vector mean = average_keys(repeated);
    CHECK(mean[0] == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(mean[1] == doctest::Approx(-1.0).epsilon(1e-15));
}

// --- backward ---------------------------------------------------------

TEST_CASE("zero output gradient gives zero parameter gradients") {
    Rng rng(25);
    const FusionParams p = random_params(rng, 4);
    const ModalityTokens ta{Modality::a, random_matrix(rng, 2, 4)};
    const ModalityTokens tv{Modality::v, random_matrix(rng, 2, 4)};
    const auto tr = fusion_forward(p, ta, tv);
    const auto g = fusion_backward(p, tr, Vector(4));
    for (std::size_t i = 0; i < g.w_q.size(); ++i) {
        CHECK(g.w_q.data()[i] == 0.0);
        CHECK(g.w_k.data()[i] == 0.0);
        CHECK(g.w_v.data()[i] == 0.0);
    }
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(g.z_cls[i] == 0.0);
    }
    CHECK(g.tokens_a() == Matrix(2, 4));
    CHECK(g.tokens_v() == Matrix(2, 4));
}

TEST_CASE("analytic gradients match finite differences") {
    Rng rng(26);
    const std::size_t d = 4;
    FusionParams p = random_params(rng, d);
    Matrix raw_a = random_matrix(rng, 2, d);
    Matrix raw_v = random_matrix(rng, 2, d);
    Vector g_out(d);
    for (std::size_t i = 0; i < d; ++i) {
        g_out[i] = rng.normal();
    }

    // scalar loss = g_out . output
    auto loss = [&]() {
        const auto tr = fusion_forward(p, {Modality::a, raw_a}, {Modality::v, raw_v});
        double acc = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            acc += g_out[i] * tr.output[i];
        }
        return acc;
    };

    const auto tr = fusion_forward(p, {Modality::a, raw_a}, {Modality::v, raw_v});
    const auto grads = fusion_backward(p, tr, g_out);

    const double h = 1e-5;
    auto check_entry = [&](double* slot, double analytic) {
        const double saved = *slot;
        *slot = saved + h;
        const double plus = loss();
        *slot = saved - h;
        const double minus = loss();
        *slot = saved;
        const double fd = (plus - minus) / (2.0 * h);
        CHECK(std::abs(analytic - fd) / std::max(std::abs(fd), 1e-6) < 1e-4);
    };

    for (std::size_t i = 0; i < d * d; ++i) {
        check_entry(p.w_q.data() + i, grads.w_q.data()[i]);
        check_entry(p.w_k.data() + i, grads.w_k.data()[i]);
        check_entry(p.w_v.data() + i, grads.w_v.data()[i]);
    }
    for (std::size_t i = 0; i < d; ++i) {
        check_entry(p.z_cls.data() + i, grads.z_cls[i]);
    }
    const Matrix token_grad_a = grads.tokens_a();
    const Matrix token_grad_v = grads.tokens_v();
    for (std::size_t i = 0; i < raw_a.size(); ++i) {
        check_entry(raw_a.data() + i, token_grad_a.data()[i]);
    }
    for (std::size_t i = 0; i < raw_v.size(); ++i) {
        check_entry(raw_v.data() + i, token_grad_v.data()[i]);
    }
}

TEST_CASE("value-path token gradient scales with the modality score sum") {
    // One token per modality, fixed values and output gradient; construct
    // two key settings whose modality-a score is p and 2p and compare the
    // value-path gradients directly.
    const Vector g_out = Vector::from({1.0, -2.0});
    auto value_grad_norm = [&](double target_score) {
        // logit gap g gives score_a = 1/(1+exp(-g)); invert for g
        const double gap = std::log(target_score / (1.0 - target_score));
        FusionParams p = passthrough_params(1.0, 0.0);
        // key_a = (gap*sqrt(2), 0) gives logits (gap, 0)
        const auto tr = fusion_forward(p, tokens_a({{gap * std::sqrt(2.0), 0.0}}),
                                       tokens_v({{0.0, 1.0}}));
        CHECK(tr.score_sum_a == doctest::Approx(target_score).epsilon(1e-9));
        const auto g = fusion_backward(p, tr, g_out);
        double sq = 0.0;
        for (std::size_t i = 0; i < g.tokens_a_value_path.size(); ++i) {
            sq += g.tokens_a_value_path.data()[i] * g.tokens_a_value_path.data()[i];
        }
        return std::sqrt(sq);
    };
    const double at_02 = value_grad_norm(0.2);
    const double at_04 = value_grad_norm(0.4);
    CHECK(at_04 / at_02 == doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("backward rejects ablation traces and shape mismatches") {
    Rng rng(27);
    const FusionParams p = random_params(rng, 3);
    const ModalityTokens ta{Modality::a, random_matrix(rng, 2, 3)};
    const ModalityTokens tv{Modality::v, random_matrix(rng, 2, 3)};
    const auto masked = fusion_forward(p, ta, tv, AblationMode::mask_v);
    CHECK_THROWS_AS(fusion_backward(p, masked, Vector(3)), ContractError);
    const auto tr = fusion_forward(p, ta, tv);
    CHECK_THROWS_AS(fusion_backward(p, tr, Vector(5)), ContractError);
}

TEST_CASE("forward validates token dimensions") {
    const FusionParams p = passthrough_params(1.0, 0.0);
    CHECK_THROWS_AS(fusion_forward(p, tokens_a({{1, 0, 0}}), tokens_v({{0, 1}})),
                    ContractError);
    CHECK_THROWS_AS(fusion_forward(p, {Modality::v, Matrix::from_rows({{1, 0}})},
                                   tokens_v({{0, 1}})),
                    ContractError);
}
