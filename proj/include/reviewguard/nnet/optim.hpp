#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "reviewguard/nnet/tensor.hpp"

namespace reviewguard::nnet {

enum class OptimizerKind { Sgd, Adam };

class Optimizer {
public:
    virtual ~Optimizer() = default;
    // Applies one update from each param's grad. Does not clear the grads.
    virtual void step(std::span<Param* const> params) = 0;
};

class Sgd final : public Optimizer {
public:
    explicit Sgd(double lr) : lr_(lr) {}
    void step(std::span<Param* const> params) override;

private:
    double lr_;
};

class Adam final : public Optimizer {
public:
    explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(std::span<Param* const> params) override;
    std::uint64_t steps() const { return t_; }

private:
    double lr_, beta1_, beta2_, eps_;
    std::uint64_t t_ = 0;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
};

void zero_grads(std::span<Param* const> params);

struct GradCheckOptions {
    double h = 1e-5;
    // 0 checks every coordinate; otherwise a seeded sample per tensor.
    std::size_t max_coords_per_tensor = 0;
    std::uint64_t seed = 1;
};

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t coords_checked = 0;
};

// Compares analytic gradients against central differences of `loss`.
// `loss` must recompute the scalar from the current contents of `inputs`.
// Error per coordinate: |analytic - numeric| / max(1, |numeric|).
GradCheckResult grad_check(const std::function<double()>& loss, std::span<Tensor* const> inputs,
                           std::span<const Tensor* const> analytic, const GradCheckOptions& opts = {});

} // namespace reviewguard::nnet
