#include <doctest.h>

#include <cmath>
#include <cstring>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "grad_cases.hpp"
#include "reviewguard/errors.hpp"
#include "reviewguard/nnet/kernels.hpp"
#include "reviewguard/nnet/layers.hpp"
#include "reviewguard/nnet/optim.hpp"

using namespace reviewguard;
using namespace reviewguard::nnet;

TEST_CASE("dense with identity weights is the identity") {
    Dense d(3, 3);
    for (std::size_t i = 0; i < 3; ++i) d.W.value(i, i) = 1.0;
    const Tensor x({2, 3}, {1, -2, 3, 0.5, 0, -1});
    CHECK(d.forward(x) == x);
    CHECK_THROWS_AS(d.forward(Tensor::matrix(1, 2)), DataError);
}

TEST_CASE("relu examples") {
    const Tensor x({3}, {-1, 0, 2});
    CHECK(relu_forward(x).values()[0] == 0.0);
    CHECK(relu_forward(x) == Tensor({3}, {0, 0, 2}));
    CHECK(relu_backward(x, Tensor({3}, 1.0)) == Tensor({3}, {0, 0, 1}));
}

TEST_CASE("dropout: p = 0 and eval mode are the identity; train mode is unbiased") {
    Rng rng(1);
    const Tensor x({4}, {1, 2, 3, 4});
    CHECK(dropout_forward(x, 0.0, true, rng).y == x);
    CHECK(dropout_forward(x, 0.5, false, rng).y == x);
    CHECK_THROWS_AS(dropout_forward(x, 1.0, true, rng), UsageError);

    const Tensor ones = Tensor::vector(20000, 1.0);
    const auto r = dropout_forward(ones, 0.3, true, rng);
    double mean = 0.0;
    for (double v : r.y.values()) mean += v;
    mean /= static_cast<double>(ones.size());
    CHECK(mean == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("conv1d matches a brute-force sliding window") {
    Rng rng(9);
    Conv1d conv(3, 4, 2);
    conv.init(rng);
    for (auto& v : conv.b.value.values()) v = rng.uniform(-1, 1);
    const Tensor seq = rgtest::random_tensor({7, 4}, rng);
    const Tensor out = conv.forward(seq);
    REQUIRE(out.shape() == std::vector<std::size_t>{5, 2});
    for (std::size_t t = 0; t < 5; ++t) {
        for (std::size_t f = 0; f < 2; ++f) {
            double s = conv.b.value[f];
            for (std::size_t r = 0; r < 3; ++r)
                for (std::size_t c = 0; c < 4; ++c) s += seq(t + r, c) * conv.W.value((r * 4 + c), f);
            CHECK(std::abs(out(t, f) - s) <= 1e-12);
        }
    }
    CHECK_THROWS_AS(conv.forward(Tensor::matrix(2, 4)), DataError);

    Conv1d zero(3, 4, 2);
    const Tensor zout = zero.forward(Tensor::matrix(7, 4));
    for (double v : zout.values()) CHECK(v == 0.0);
}

TEST_CASE("max-over-time pooling routes the gradient to the first maximum") {
    const Tensor fm({3, 1}, {-1, 3, 2});
    const auto p = maxpool_over_time(fm);
    CHECK(p.values[0] == 3.0);
    CHECK(p.argmax[0] == 1);
    const std::vector<double> up = {1.0};
    CHECK(maxpool_backward(p, up, 3) == Tensor({3, 1}, {0, 1, 0}));
    CHECK(maxpool_over_time(Tensor({3, 1}, {5, 5, 1})).argmax[0] == 0);
}

TEST_CASE("sparse conv backward equals dense backward through max pooling") {
    Rng rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t w = 1 + rng.below(4), d = 1 + rng.below(3), f = 1 + rng.below(4);
        Conv1d conv(w, d, f);
        conv.init(rng);
        const Tensor seq = rgtest::random_tensor({w + rng.below(5), d}, rng);
        const auto pooled = maxpool_over_time(conv.forward(seq));
        const Tensor up = rgtest::random_tensor({f}, rng);
        Tensor dW1(conv.W.value.shape()), db1(conv.b.value.shape());
        const Tensor dseq1 = conv.backward(seq, maxpool_backward(pooled, up.values(), seq.rows() - w + 1), dW1, db1);
        Tensor dW2(conv.W.value.shape()), db2(conv.b.value.shape()), dseq2(seq.shape());
        conv.backward_sparse(seq, pooled.argmax, up.values(), dW2, db2, dseq2);
        for (std::size_t i = 0; i < dW1.size(); ++i) CHECK(dW1[i] == doctest::Approx(dW2[i]).epsilon(1e-12));
        for (std::size_t i = 0; i < dseq1.size(); ++i) CHECK(dseq1[i] == doctest::Approx(dseq2[i]).epsilon(1e-12));
        CHECK(db1 == db2);
    }
}

TEST_CASE("softmax cross-entropy examples") {
    const std::vector<double> zero = {0.0, 0.0};
    auto r = softmax_cross_entropy(zero, 0);
    CHECK(r.probs[0] == 0.5);
    CHECK(r.loss == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    const std::vector<double> big = {1000.0, 0.0};
    r = softmax_cross_entropy(big, 0);
    CHECK(std::isfinite(r.loss));
    CHECK(r.loss < 1e-12);
    const std::vector<double> bad = {NAN, 0.0};
    CHECK_THROWS_AS(softmax(bad), NumericError);

    Rng rng(4);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> z(2 + rng.below(4));
        for (auto& v : z) v = rng.uniform(-30, 30);
        const auto p = softmax(z);
        double s = 0.0;
        for (double v : p) {
            CHECK(v > 0.0);
            s += v;
        }
        CHECK(std::abs(s - 1.0) <= 1e-12);
        CHECK(rgtest::grad_case_softmax_ce(rng.next()) < 1e-6);
    }
}

TEST_CASE("lstm cell examples") {
    Lstm zero(3, 2);
    const std::vector<double> x = {1.0, -2.0, 0.5}, h0(2, 0.3), c0(2, 0.7);
    const auto s = zero.cell(x, h0, c0);
    // Gates are 0.5 and the candidate 0, so c = 0.5 c_prev.
    CHECK(s.c[0] == doctest::Approx(0.35));
    CHECK(s.h[0] == doctest::Approx(0.5 * std::tanh(0.35)));

    const auto from_zero = zero.cell(x, std::vector<double>(2, 0.0), std::vector<double>(2, 0.0));
    CHECK(from_zero.h == std::vector<double>{0.0, 0.0});
    CHECK(from_zero.c == std::vector<double>{0.0, 0.0});

    Lstm forget(3, 2);
    Rng rng(2);
    forget.init(rng);
    for (std::size_t j = 0; j < 2; ++j) forget.b.value[j] = -50.0; // input gate closed
    const auto f = forget.cell(x, h0, c0);
    std::vector<double> a(8);
    for (std::size_t k = 0; k < 8; ++k) {
        a[k] = forget.b.value[k];
        for (std::size_t i = 0; i < 3; ++i) a[k] += x[i] * forget.Wx.value(i, k);
        for (std::size_t i = 0; i < 2; ++i) a[k] += h0[i] * forget.Wh.value(i, k);
    }
    for (std::size_t j = 0; j < 2; ++j) {
        const double fg = 1.0 / (1.0 + std::exp(-a[2 + j]));
        CHECK(f.c[j] == doctest::Approx(fg * c0[j]).epsilon(1e-12));
    }
}

TEST_CASE("lstm forward agrees with repeated cell calls") {
    Rng rng(6);
    Lstm lstm(3, 4);
    lstm.init(rng);
    const Tensor x = rgtest::random_tensor({5, 3}, rng);
    LstmCache cache;
    const auto h = lstm.forward(x, cache);
    std::vector<double> hh(4, 0.0), cc(4, 0.0);
    for (std::size_t t = 0; t < 5; ++t) {
        const auto s = lstm.cell(x.row(t), hh, cc);
        hh = s.h;
        cc = s.c;
    }
    for (std::size_t j = 0; j < 4; ++j) CHECK(h[j] == doctest::Approx(hh[j]).epsilon(1e-12));
    CHECK(lstm.forward(Tensor::matrix(0, 3), cache) == std::vector<double>(4, 0.0));
}

TEST_CASE("layer gradients match central differences") {
    for (std::uint64_t s = 1; s <= 10; ++s) {
        CHECK(rgtest::grad_case_dense(s) < 1e-9);
        CHECK(rgtest::grad_case_relu(s) < 1e-9);
        CHECK(rgtest::grad_case_dropout(s, false) < 1e-9);
        CHECK(rgtest::grad_case_dropout(s, true) < 1e-9);
        CHECK(rgtest::grad_case_conv1d(s) < 1e-9);
        CHECK(rgtest::grad_case_maxpool(s) < 1e-9);
        CHECK(rgtest::grad_case_lstm(s, 1) < 1e-4);
        CHECK(rgtest::grad_case_lstm(s, 3) < 1e-4);
    }
}

TEST_CASE("grad_check flags a wrong gradient") {
    Tensor x({2}, {1.0, 2.0});
    Tensor wrong({2}, {0.0, 0.0});
    auto loss = [&] { return x[0] * x[0] + x[1]; };
    Tensor* inputs[] = {&x};
    const Tensor* grads[] = {&wrong};
    CHECK(grad_check(loss, inputs, grads).max_rel_error > 0.5);
}

TEST_CASE("optimizer examples") {
    Param p("theta", Tensor({1}, {1.0}));
    p.grad[0] = 2.0;
    Param* ps[] = {&p};
    Adam adam(0.001);
    adam.step(ps);
    CHECK(p.value[0] == doctest::Approx(0.999).epsilon(1e-9));

    Param q("theta", Tensor({3}, {1.0, -2.0, 0.5}));
    Param* qs[] = {&q};
    const Tensor before = q.value;
    Adam still;
    for (int i = 0; i < 5; ++i) still.step(qs);
    CHECK(q.value == before);

    Param s("theta", Tensor({1}, {1.0}));
    s.grad[0] = 0.5;
    Param* ss[] = {&s};
    Sgd(0.1).step(ss);
    CHECK(s.value[0] == doctest::Approx(0.95).epsilon(1e-15));
    zero_grads(ss);
    CHECK(s.grad[0] == 0.0);
}

TEST_CASE("tensor invariants") {
    CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0}), DataError);
    Tensor t({2}, {1.0, INFINITY});
    CHECK_FALSE(t.all_finite());
    CHECK_THROWS_AS(t.check_finite("t"), NumericError);
}

namespace {

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

std::vector<double> random_vec(std::size_t n, Rng& rng, double zero_rate = 0.2) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.bernoulli(zero_rate) ? 0.0 : rng.uniform(-1, 1);
    return v;
}

} // namespace

TEST_CASE("parallel kernels are bitwise identical to the serial reference") {
#ifdef _OPENMP
    const int saved = omp_get_max_threads();
    omp_set_num_threads(4);
#endif
    Rng rng(123);
    for (int trial = 0; trial < 12; ++trial) {
        // Alternate small shapes with shapes large enough to go parallel.
        const bool big = trial % 2 == 1;
        const std::size_t m = big ? 64 + rng.below(64) : 1 + rng.below(8);
        const std::size_t k = big ? 32 + rng.below(64) : 1 + rng.below(8);
        const std::size_t n = big ? 32 + rng.below(64) : 1 + rng.below(8);
        const bool acc = rng.bernoulli(0.5);
        const auto a = random_vec(m * k, rng), b = random_vec(k * n, rng), c0 = random_vec(m * n, rng);

        auto c1 = c0, c2 = c0;
        kernels::serial::matmul(a.data(), b.data(), c1.data(), m, k, n, acc);
        kernels::parallel::matmul(a.data(), b.data(), c2.data(), m, k, n, acc);
        CHECK(bitwise_equal(c1, c2));

        const auto bt = random_vec(m * n, rng);
        auto t1 = random_vec(k * n, rng);
        auto t2 = t1;
        kernels::serial::matmul_tn(a.data(), bt.data(), t1.data(), m, k, n, acc);
        kernels::parallel::matmul_tn(a.data(), bt.data(), t2.data(), m, k, n, acc);
        CHECK(bitwise_equal(t1, t2));

        const auto bn = random_vec(k * n, rng);
        const auto an = random_vec(m * n, rng);
        auto n1 = random_vec(m * k, rng);
        auto n2 = n1;
        kernels::serial::matmul_nt(an.data(), bn.data(), n1.data(), m, n, k, acc);
        kernels::parallel::matmul_nt(an.data(), bn.data(), n2.data(), m, n, k, acc);
        CHECK(bitwise_equal(n1, n2));

        const std::size_t width = 1 + rng.below(5), d = big ? 50 : 3, filters = big ? 100 : 4;
        const std::size_t len = width + (big ? 80 : rng.below(5));
        const auto seq = random_vec(len * d, rng), w = random_vec(width * d * filters, rng),
                   bias = random_vec(filters, rng);
        std::vector<double> o1((len - width + 1) * filters), o2(o1.size());
        kernels::serial::conv1d_forward(seq.data(), len, d, w.data(), bias.data(), width, filters, o1.data());
        kernels::parallel::conv1d_forward(seq.data(), len, d, w.data(), bias.data(), width, filters, o2.data());
        CHECK(bitwise_equal(o1, o2));

        const std::size_t rows = big ? 1000 : 5, dim = 300;
        std::vector<SparseVector> sv(rows, SparseVector{dim, {}});
        for (auto& r : sv)
            for (std::uint32_t j = 0; j < dim; ++j)
                if (rng.bernoulli(0.05)) r.entries.push_back({j, rng.uniform(-1, 1)});
        const auto dense = random_vec(dim, rng);
        std::vector<double> s1(rows), s2(rows);
        kernels::serial::sparse_dots(sv, dense, s1);
        kernels::parallel::sparse_dots(sv, dense, s2);
        CHECK(bitwise_equal(s1, s2));

        const std::size_t np = big ? 100000 : 7;
        auto th1 = random_vec(np, rng), g = random_vec(np, rng), m1 = random_vec(np, rng, 0), v1 = random_vec(np, rng, 0);
        for (auto& x : v1) x = std::abs(x);
        auto th2 = th1, m2 = m1, v2 = v1;
        kernels::serial::adam_update(th1.data(), g.data(), m1.data(), v1.data(), np, 1e-3, 0.9, 0.999, 1e-8, 0.1, 0.001);
        kernels::parallel::adam_update(th2.data(), g.data(), m2.data(), v2.data(), np, 1e-3, 0.9, 0.999, 1e-8, 0.1,
                                       0.001);
        CHECK(bitwise_equal(th1, th2));
        CHECK(bitwise_equal(m1, m2));
        CHECK(bitwise_equal(v1, v2));
    }
#ifdef _OPENMP
    omp_set_num_threads(saved);
#endif
}
