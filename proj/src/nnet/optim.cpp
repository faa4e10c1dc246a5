#include "reviewguard/nnet/optim.hpp"

#include "reviewguard/errors.hpp"
#include "reviewguard/nnet/kernels.hpp"
#include "reviewguard/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace reviewguard::nnet {

void Sgd::step(std::span<Param* const> params) {
    for (Param* p : params) {
        if (!p->grad.same_shape(p->value)) throw DataError("gradient shape differs from parameter shape");
        for (std::size_t i = 0; i < p->value.size(); ++i) p->value[i] -= lr_ * p->grad[i];
    }
}

void Adam::step(std::span<Param* const> params) {
    if (m_.empty()) {
        for (const Param* p : params) {
            m_.emplace_back(p->value.shape());
            v_.emplace_back(p->value.shape());
        }
    }
    if (m_.size() != params.size()) throw DataError("Adam was constructed for a different parameter list");
    ++t_;
    const double bias1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bias2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
        Param* p = params[k];
        if (!p->grad.same_shape(p->value) || !m_[k].same_shape(p->value))
            throw DataError("gradient or moment shape differs from parameter shape");
        kernels::adam_update(p->value.data(), p->grad.data(), m_[k].data(), v_[k].data(), p->value.size(), lr_, beta1_,
                             beta2_, eps_, bias1, bias2);
    }
}

void zero_grads(std::span<Param* const> params) {
    for (Param* p : params) p->grad.zero();
}

GradCheckResult grad_check(const std::function<double()>& loss, std::span<Tensor* const> inputs,
                           std::span<const Tensor* const> analytic, const GradCheckOptions& opts) {
    if (inputs.size() != analytic.size()) throw DataError("grad_check needs one analytic gradient per input");
    Rng rng(opts.seed);
    GradCheckResult r;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        Tensor& x = *inputs[k];
        const Tensor& g = *analytic[k];
        if (!g.same_shape(x)) throw DataError("analytic gradient shape differs from input shape");
        std::vector<std::size_t> coords(x.size());
        std::iota(coords.begin(), coords.end(), 0);
        if (opts.max_coords_per_tensor > 0 && coords.size() > opts.max_coords_per_tensor) {
            rng.shuffle(std::span<std::size_t>(coords));
            coords.resize(opts.max_coords_per_tensor);
        }
        for (std::size_t i : coords) {
            const double saved = x[i];
            x[i] = saved + opts.h;
            const double up = loss();
            x[i] = saved - opts.h;
            const double down = loss();
            x[i] = saved;
            const double numeric = (up - down) / (2.0 * opts.h);
            const double err = std::abs(g[i] - numeric) / std::max(1.0, std::abs(numeric));
            r.max_rel_error = std::max(r.max_rel_error, err);
            ++r.coords_checked;
        }
    }
    return r;
}

} // namespace reviewguard::nnet
