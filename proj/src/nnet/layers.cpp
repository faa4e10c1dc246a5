#include "reviewguard/nnet/layers.hpp"

#include "reviewguard/errors.hpp"
#include "reviewguard/nnet/kernels.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/core.h>

namespace reviewguard::nnet {

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (count(shape_) != data_.size())
        throw DataError(fmt::format("tensor shape {} does not match {} values", shape_string(shape_), data_.size()));
}

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::check_finite(std::string_view what) const {
    if (!all_finite()) throw NumericError(fmt::format("non-finite values in {}", what));
}

std::string shape_string(const std::vector<std::size_t>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "x" : "") + std::to_string(shape[i]);
    return s + "]";
}

namespace {

void require(bool ok, std::string_view what) {
    if (!ok) throw DataError(fmt::format("shape mismatch: {}", what));
}

double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

} // namespace

void glorot_uniform(Tensor& t, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (auto& v : t.values()) v = rng.uniform(-bound, bound);
}

Dense::Dense(std::size_t in, std::size_t out) : W("W", Tensor::matrix(in, out)), b("b", Tensor::vector(out)) {}

void Dense::init(Rng& rng) {
    glorot_uniform(W.value, in_dim(), out_dim(), rng);
    b.value.zero();
}

Tensor Dense::forward(const Tensor& x) const {
    require(x.cols() == in_dim(), "dense input width");
    const std::size_t batch = x.rows();
    Tensor y = Tensor::matrix(batch, out_dim());
    for (std::size_t r = 0; r < batch; ++r) std::copy(b.value.data(), b.value.data() + out_dim(), y.row(r).begin());
    kernels::matmul(x.data(), W.value.data(), y.data(), batch, in_dim(), out_dim(), true);
    y.check_finite("dense output");
    return y;
}

Tensor Dense::backward(const Tensor& x, const Tensor& dy, Tensor& dW, Tensor& db) const {
    require(dy.rows() == x.rows() && dy.cols() == out_dim(), "dense upstream gradient");
    require(dW.same_shape(W.value) && db.same_shape(b.value), "dense gradient buffers");
    const std::size_t batch = x.rows();
    kernels::matmul_tn(x.data(), dy.data(), dW.data(), batch, in_dim(), out_dim(), true);
    for (std::size_t r = 0; r < batch; ++r)
        for (std::size_t j = 0; j < out_dim(); ++j) db[j] += dy(r, j);
    Tensor dx = Tensor::matrix(batch, in_dim());
    kernels::matmul_nt(dy.data(), W.value.data(), dx.data(), batch, out_dim(), in_dim(), false);
    return dx;
}

Tensor relu_forward(const Tensor& x) {
    Tensor y = x;
    for (auto& v : y.values()) v = v > 0.0 ? v : 0.0;
    return y;
}

Tensor relu_backward(const Tensor& x, const Tensor& dy) {
    require(x.same_shape(dy), "relu gradient");
    Tensor dx = dy;
    for (std::size_t i = 0; i < dx.size(); ++i)
        if (!(x[i] > 0.0)) dx[i] = 0.0;
    return dx;
}

DropoutResult dropout_forward(const Tensor& x, double p, bool train, Rng& rng) {
    if (p < 0.0 || p >= 1.0) throw UsageError("dropout probability must be in [0, 1)");
    DropoutResult r{x, std::vector<double>(x.size(), 1.0)};
    if (!train || p == 0.0) return r;
    const double keep_scale = 1.0 / (1.0 - p);
    for (std::size_t i = 0; i < x.size(); ++i) {
        r.mask[i] = rng.bernoulli(p) ? 0.0 : keep_scale;
        r.y[i] = x[i] * r.mask[i];
    }
    return r;
}

Tensor dropout_backward(const Tensor& dy, std::span<const double> mask) {
    require(dy.size() == mask.size(), "dropout mask");
    Tensor dx = dy;
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= mask[i];
    return dx;
}

Conv1d::Conv1d(std::size_t width, std::size_t in_dim, std::size_t filters)
    : W("W", Tensor::matrix(width * in_dim, filters)), b("b", Tensor::vector(filters)), width_(width), in_dim_(in_dim),
      filters_(filters) {
    if (width == 0 || in_dim == 0 || filters == 0) throw UsageError("conv1d sizes must be >= 1");
}

void Conv1d::init(Rng& rng) {
    glorot_uniform(W.value, width_ * in_dim_, filters_, rng);
    b.value.zero();
}

Tensor Conv1d::forward(const Tensor& seq) const {
    require(seq.cols() == in_dim_, "conv1d input width");
    if (seq.rows() < width_)
        throw DataError(fmt::format("sequence of length {} is shorter than filter width {}", seq.rows(), width_));
    const std::size_t positions = seq.rows() - width_ + 1;
    Tensor out = Tensor::matrix(positions, filters_);
    kernels::conv1d_forward(seq.data(), seq.rows(), in_dim_, W.value.data(), b.value.data(), width_, filters_,
                            out.data());
    out.check_finite("conv1d output");
    return out;
}

Tensor Conv1d::backward(const Tensor& seq, const Tensor& dout, Tensor& dW, Tensor& db) const {
    const std::size_t positions = seq.rows() - width_ + 1;
    require(dout.rows() == positions && dout.cols() == filters_, "conv1d upstream gradient");
    Tensor dseq = Tensor::matrix(seq.rows(), in_dim_);
    const std::size_t span = width_ * in_dim_;
    for (std::size_t t = 0; t < positions; ++t) {
        const double* window = seq.data() + t * in_dim_;
        const double* g = dout.data() + t * filters_;
        double* dwin = dseq.data() + t * in_dim_;
        for (std::size_t f = 0; f < filters_; ++f) db[f] += g[f];
        for (std::size_t q = 0; q < span; ++q) {
            const double* wq = W.value.data() + q * filters_;
            double* dwq = dW.data() + q * filters_;
            double acc = 0.0;
            for (std::size_t f = 0; f < filters_; ++f) {
                dwq[f] += window[q] * g[f];
                acc += wq[f] * g[f];
            }
            dwin[q] += acc;
        }
    }
    return dseq;
}

void Conv1d::backward_sparse(const Tensor& seq, std::span<const std::size_t> position, std::span<const double> grad,
                             Tensor& dW, Tensor& db, Tensor& dseq) const {
    require(position.size() == filters_ && grad.size() == filters_, "conv1d sparse gradient");
    const std::size_t span = width_ * in_dim_;
    for (std::size_t f = 0; f < filters_; ++f) {
        const double g = grad[f];
        if (g == 0.0) continue;
        db[f] += g;
        const double* window = seq.data() + position[f] * in_dim_;
        double* dwin = dseq.data() + position[f] * in_dim_;
        for (std::size_t q = 0; q < span; ++q) {
            dW[q * filters_ + f] += window[q] * g;
            dwin[q] += W.value[q * filters_ + f] * g;
        }
    }
}

PoolResult maxpool_over_time(const Tensor& featmap) {
    const std::size_t positions = featmap.rows();
    const std::size_t filters = featmap.cols();
    require(positions > 0, "max pooling over an empty feature map");
    PoolResult r{std::vector<double>(featmap.row(0).begin(), featmap.row(0).end()), std::vector<std::size_t>(filters, 0)};
    for (std::size_t t = 1; t < positions; ++t) {
        const auto row = featmap.row(t);
        for (std::size_t f = 0; f < filters; ++f) {
            if (row[f] > r.values[f]) {
                r.values[f] = row[f];
                r.argmax[f] = t;
            }
        }
    }
    return r;
}

Tensor maxpool_backward(const PoolResult& pooled, std::span<const double> dpooled, std::size_t positions) {
    const std::size_t filters = pooled.argmax.size();
    require(dpooled.size() == filters, "max pooling gradient");
    Tensor d = Tensor::matrix(positions, filters);
    for (std::size_t f = 0; f < filters; ++f) d(pooled.argmax[f], f) = dpooled[f];
    return d;
}

std::vector<double> softmax(std::span<const double> logits) {
    for (double z : logits)
        if (!std::isfinite(z)) throw NumericError("non-finite logits");
    const double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - mx);
        sum += p[i];
    }
    for (auto& v : p) v /= sum;
    return p;
}

SoftmaxLoss softmax_cross_entropy(std::span<const double> logits, std::size_t target) {
    if (target >= logits.size()) throw DataError("softmax target out of range");
    SoftmaxLoss r;
    r.probs = softmax(logits);
    const double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double z : logits) sum += std::exp(z - mx);
    // -log p(target) = logsumexp - z_target
    r.loss = mx + std::log(sum) - logits[target];
    r.dlogits = r.probs;
    r.dlogits[target] -= 1.0;
    return r;
}

Lstm::Lstm(std::size_t in_dim, std::size_t hidden)
    : Wx("Wx", Tensor::matrix(in_dim, 4 * hidden)), Wh("Wh", Tensor::matrix(hidden, 4 * hidden)),
      b("b", Tensor::vector(4 * hidden)) {
    if (in_dim == 0 || hidden == 0) throw UsageError("lstm sizes must be >= 1");
}

void Lstm::init(Rng& rng) {
    const std::size_t h = hidden();
    glorot_uniform(Wx.value, in_dim(), 4 * h, rng);
    glorot_uniform(Wh.value, h, 4 * h, rng);
    b.value.zero();
}

LstmStep Lstm::cell(std::span<const double> x, std::span<const double> h_prev, std::span<const double> c_prev) const {
    const std::size_t h = hidden();
    require(x.size() == in_dim() && h_prev.size() == h && c_prev.size() == h, "lstm cell inputs");
    std::vector<double> a(b.value.values().begin(), b.value.values().end());
    kernels::matmul(x.data(), Wx.value.data(), a.data(), 1, in_dim(), 4 * h, true);
    kernels::matmul(h_prev.data(), Wh.value.data(), a.data(), 1, h, 4 * h, true);
    LstmStep s{std::vector<double>(h), std::vector<double>(h)};
    for (std::size_t j = 0; j < h; ++j) {
        const double i = sigmoid(a[j]);
        const double f = sigmoid(a[h + j]);
        const double g = std::tanh(a[2 * h + j]);
        const double o = sigmoid(a[3 * h + j]);
        s.c[j] = f * c_prev[j] + i * g;
        s.h[j] = o * std::tanh(s.c[j]);
    }
    return s;
}

std::vector<double> Lstm::forward(const Tensor& x, LstmCache& cache) const {
    const std::size_t h = hidden();
    const std::size_t steps = x.rows();
    require(steps == 0 || x.cols() == in_dim(), "lstm input width");
    cache.gates = Tensor::matrix(steps, 4 * h);
    cache.c = Tensor::matrix(steps, h);
    cache.h = Tensor::matrix(steps, h);
    if (steps == 0) return std::vector<double>(h, 0.0);

    // Input projections for all steps at once.
    for (std::size_t t = 0; t < steps; ++t)
        std::copy(b.value.data(), b.value.data() + 4 * h, cache.gates.row(t).begin());
    kernels::matmul(x.data(), Wx.value.data(), cache.gates.data(), steps, in_dim(), 4 * h, true);

    for (std::size_t t = 0; t < steps; ++t) {
        double* a = cache.gates.data() + t * 4 * h;
        if (t > 0) kernels::serial::matmul(cache.h.data() + (t - 1) * h, Wh.value.data(), a, 1, h, 4 * h, true);
        double* c = cache.c.data() + t * h;
        double* hh = cache.h.data() + t * h;
        const double* c_prev = t > 0 ? cache.c.data() + (t - 1) * h : nullptr;
        for (std::size_t j = 0; j < h; ++j) {
            a[j] = sigmoid(a[j]);
            a[h + j] = sigmoid(a[h + j]);
            a[2 * h + j] = std::tanh(a[2 * h + j]);
            a[3 * h + j] = sigmoid(a[3 * h + j]);
            c[j] = (c_prev ? a[h + j] * c_prev[j] : 0.0) + a[j] * a[2 * h + j];
            hh[j] = a[3 * h + j] * std::tanh(c[j]);
        }
    }
    cache.h.check_finite("lstm hidden state");
    return {cache.h.row(steps - 1).begin(), cache.h.row(steps - 1).end()};
}

Tensor Lstm::backward(const Tensor& x, const LstmCache& cache, std::span<const double> dh_last, Tensor& dWx,
                      Tensor& dWh, Tensor& db) const {
    const std::size_t h = hidden();
    const std::size_t steps = x.rows();
    require(dh_last.size() == h, "lstm upstream gradient");
    Tensor dx = Tensor::matrix(steps, in_dim());
    if (steps == 0) return dx;

    Tensor da = Tensor::matrix(steps, 4 * h); // pre-activation gradients
    std::vector<double> dh(dh_last.begin(), dh_last.end());
    std::vector<double> dc(h, 0.0);
    std::vector<double> dh_prev(h);
    for (std::size_t s = steps; s-- > 0;) {
        const double* gates = cache.gates.data() + s * 4 * h;
        const double* c = cache.c.data() + s * h;
        const double* c_prev = s > 0 ? cache.c.data() + (s - 1) * h : nullptr;
        double* d = da.data() + s * 4 * h;
        for (std::size_t j = 0; j < h; ++j) {
            const double i = gates[j], f = gates[h + j], g = gates[2 * h + j], o = gates[3 * h + j];
            const double tc = std::tanh(c[j]);
            const double d_o = dh[j] * tc;
            dc[j] += dh[j] * o * (1.0 - tc * tc);
            const double d_i = dc[j] * g;
            const double d_g = dc[j] * i;
            const double d_f = c_prev ? dc[j] * c_prev[j] : 0.0;
            d[j] = d_i * i * (1.0 - i);
            d[h + j] = d_f * f * (1.0 - f);
            d[2 * h + j] = d_g * (1.0 - g * g);
            d[3 * h + j] = d_o * o * (1.0 - o);
            dc[j] *= f;
        }
        if (s > 0) {
            kernels::serial::matmul_nt(d, Wh.value.data(), dh_prev.data(), 1, 4 * h, h, false);
            // dWh += h_{s-1}^T da_s
            kernels::serial::matmul_tn(cache.h.data() + (s - 1) * h, d, dWh.data(), 1, h, 4 * h, true);
            dh.swap(dh_prev);
        }
    }
    kernels::matmul_tn(x.data(), da.data(), dWx.data(), steps, in_dim(), 4 * h, true);
    for (std::size_t s = 0; s < steps; ++s)
        for (std::size_t j = 0; j < 4 * h; ++j) db[j] += da(s, j);
    kernels::matmul_nt(da.data(), Wx.value.data(), dx.data(), steps, 4 * h, in_dim(), false);
    return dx;
}

} // namespace reviewguard::nnet
