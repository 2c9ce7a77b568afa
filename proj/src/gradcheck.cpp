#include "mmfusion/gradcheck.hpp"

#include <cmath>

#include "mmfusion/model.hpp"
#include "mmfusion/trainer.hpp"

namespace mmfusion {

namespace {

// Loss evaluated through the forward path only; this is the oracle side.
double loss_of(const ModelParams& model, const Sample& sample) {
    const SampleForward f = model_forward(model, sample.raw_a, sample.raw_v);
    return cross_entropy(f.logits, sample.label).loss;
}

Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale) {
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) {
        m.data()[i] = scale * rng.normal();
    }
    return m;
}

}  // namespace

GradCheckReport run_gradcheck(std::uint64_t seed, std::size_t instances, double tolerance) {
    GradCheckReport report;
    report.instances = instances;
    report.tolerance = tolerance;

    Rng rng(seed);
    const double step = 1e-5;

    for (std::size_t inst = 0; inst < instances; ++inst) {
        ModelDims dims;
        dims.dim = 2 + rng.below(7);       // <= 8
        dims.hidden = 2 + rng.below(5);    // <= 6
        dims.dim_in_a = 2 + rng.below(4);  // <= 5
        dims.dim_in_v = 2 + rng.below(4);
        dims.classes = 2 + rng.below(3);
        const std::size_t len_a = 1 + rng.below(4);  // <= 4
        const std::size_t len_v = 1 + rng.below(4);

        Rng init_rng = rng.fork(1000 + inst);
        ModelParams model = init_model(dims, 0.02, init_rng);
        // Rescale parameters to O(0.5) so finite differences are well
        // conditioned, and use a non-identity rotation to exercise the
        // constant-rotation query path.
        for (ParamView& view : param_views(model, false)) {
            for (std::size_t i = 0; i < view.size; ++i) {
                view.data[i] = 0.5 * init_rng.normal();
            }
        }
        Vector from(dims.dim);
        Vector to(dims.dim);
        for (std::size_t i = 0; i < dims.dim; ++i) {
            from[i] = init_rng.normal();
            to[i] = init_rng.normal();
        }
        model.fusion.rotation = plane_rotation_from_pair(from, to);

        Sample sample;
        sample.raw_a = random_matrix(init_rng, len_a, dims.dim_in_a, 1.0);
        sample.raw_v = random_matrix(init_rng, len_v, dims.dim_in_v, 1.0);
        sample.label = init_rng.below(dims.classes);

        const std::size_t batch_index[] = {0};
        const Sample data[] = {sample};
        const BatchGradients analytic = compute_batch_gradients(model, data, batch_index);

        auto analytic_grad = grad_views(const_cast<ModelGrad&>(analytic.grad));
        auto params = param_views(model, false);
        for (std::size_t p = 0; p < params.size(); ++p) {
            for (std::size_t i = 0; i < params[p].size; ++i) {
                const double saved = params[p].data[i];
                params[p].data[i] = saved + step;
                const double plus = loss_of(model, sample);
                params[p].data[i] = saved - step;
                const double minus = loss_of(model, sample);
                params[p].data[i] = saved;

                const double fd = (plus - minus) / (2.0 * step);
                const double an = analytic_grad[p].data[i];
                const double rel = std::abs(an - fd) / std::max(std::abs(fd), 1e-6);
                if (rel > report.max_rel_error) {
                    report.max_rel_error = rel;
                    report.worst_param = params[p].name + "[" + std::to_string(i) + "]";
                }
            }
        }
    }
    report.passed = report.max_rel_error < tolerance;
    return report;
}

}  // namespace mmfusion
