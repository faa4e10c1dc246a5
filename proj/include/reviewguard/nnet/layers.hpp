#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "reviewguard/nnet/tensor.hpp"
#include "reviewguard/rng.hpp"

namespace reviewguard::nnet {

// Uniform in +-sqrt(6 / (fan_in + fan_out)).
void glorot_uniform(Tensor& t, std::size_t fan_in, std::size_t fan_out, Rng& rng);

// y = x W + b for a batch x [B x in]; W is [in x out].
class Dense {
public:
    Dense() = default;
    Dense(std::size_t in, std::size_t out);

    void init(Rng& rng);
    std::size_t in_dim() const { return W.value.rows(); }
    std::size_t out_dim() const { return W.value.cols(); }

    Tensor forward(const Tensor& x) const;
    // Accumulates into dW and db; returns dx.
    Tensor backward(const Tensor& x, const Tensor& dy, Tensor& dW, Tensor& db) const;

    Param W;
    Param b;
};

Tensor relu_forward(const Tensor& x);
// Gradient is zero where x <= 0.
Tensor relu_backward(const Tensor& x, const Tensor& dy);

// Inverted dropout. In eval mode, or with p == 0, the output is x and the
// mask is all ones.
struct DropoutResult {
    Tensor y;
    std::vector<double> mask; // 0 or 1/(1-p) per element
};
DropoutResult dropout_forward(const Tensor& x, double p, bool train, Rng& rng);
Tensor dropout_backward(const Tensor& dy, std::span<const double> mask);

// Valid 1-D convolution over a [len x d] sequence with `filters` kernels of
// `width` rows each. W is [(width*d) x filters].
class Conv1d {
public:
    Conv1d() = default;
    Conv1d(std::size_t width, std::size_t in_dim, std::size_t filters);

    void init(Rng& rng);
    std::size_t width() const { return width_; }
    std::size_t in_dim() const { return in_dim_; }
    std::size_t filters() const { return filters_; }

    // Throws if seq has fewer rows than width. Output [(len - width + 1) x filters].
    Tensor forward(const Tensor& seq) const;
    // Dense upstream gradient; accumulates dW, db; returns dseq.
    Tensor backward(const Tensor& seq, const Tensor& dout, Tensor& dW, Tensor& db) const;
    // Upstream gradient nonzero only at one position per filter (after
    // max-over-time pooling). Accumulates into dW, db and dseq.
    void backward_sparse(const Tensor& seq, std::span<const std::size_t> position, std::span<const double> grad,
                         Tensor& dW, Tensor& db, Tensor& dseq) const;

    Param W;
    Param b;

private:
    std::size_t width_ = 0;
    std::size_t in_dim_ = 0;
    std::size_t filters_ = 0;
};

struct PoolResult {
    std::vector<double> values;
    std::vector<std::size_t> argmax; // first maximal position per filter
};
// Column-wise maximum of a [T x F] feature map.
PoolResult maxpool_over_time(const Tensor& featmap);
Tensor maxpool_backward(const PoolResult& pooled, std::span<const double> dpooled, std::size_t positions);

struct SoftmaxLoss {
    double loss = 0.0;
    std::vector<double> probs;
    std::vector<double> dlogits; // probs - onehot(target)
};
std::vector<double> softmax(std::span<const double> logits);
SoftmaxLoss softmax_cross_entropy(std::span<const double> logits, std::size_t target);

// Gate layout along the 4h axis: input, forget, candidate, output.
struct LstmStep {
    std::vector<double> h;
    std::vector<double> c;
};

struct LstmCache {
    Tensor gates; // [T x 4h] post-activation
    Tensor c;     // [T x h]
    Tensor h;     // [T x h]
};

class Lstm {
public:
    Lstm() = default;
    Lstm(std::size_t in_dim, std::size_t hidden);

    void init(Rng& rng);
    std::size_t in_dim() const { return Wx.value.rows(); }
    std::size_t hidden() const { return Wh.value.rows(); }

    LstmStep cell(std::span<const double> x, std::span<const double> h_prev, std::span<const double> c_prev) const;

    // Runs over every row of x (caller passes only the true-length prefix).
    // Returns the last hidden state, or zeros for an empty sequence.
    std::vector<double> forward(const Tensor& x, LstmCache& cache) const;
    // Backpropagation through time from a gradient on the last hidden state.
    // Accumulates parameter gradients; returns dx [T x in].
    Tensor backward(const Tensor& x, const LstmCache& cache, std::span<const double> dh_last, Tensor& dWx, Tensor& dWh,
                    Tensor& db) const;

    Param Wx; // [in x 4h]
    Param Wh; // [h x 4h]
    Param b;  // [4h]
};

} // namespace reviewguard::nnet
