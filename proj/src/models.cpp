#include "reviewguard/models.hpp"

#include "reviewguard/errors.hpp"
#include "reviewguard/nnet/kernels.hpp"
#include "reviewguard/rng.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>

#include <fmt/core.h>

namespace reviewguard {

std::string_view to_string(ModelKind k) {
    switch (k) {
    case ModelKind::Mlp: return "mlp";
    case ModelKind::Cnn: return "cnn";
    case ModelKind::Lstm: return "lstm";
    }
    return "?";
}

ModelKind parse_model_kind(std::string_view s) {
    if (s == "mlp") return ModelKind::Mlp;
    if (s == "cnn") return ModelKind::Cnn;
    if (s == "lstm") return ModelKind::Lstm;
    throw UsageError(fmt::format("unknown model kind '{}' (expected mlp, cnn or lstm)", s));
}

void ModelSpec::validate() const {
    auto positive = [](std::size_t v, std::string_view what) {
        if (v < 1) throw UsageError(fmt::format("{} must be >= 1", what));
    };
    positive(epochs, "epochs");
    positive(batch_size, "batch size");
    positive(embed_dim, "embedding dimension");
    positive(hidden_dim, "hidden dimension");
    positive(filters_per_width, "filters per width");
    if (mlp_hidden.empty()) throw UsageError("the MLP needs at least one hidden layer");
    for (auto h : mlp_hidden) positive(h, "MLP layer width");
    if (filter_widths.empty()) throw UsageError("the CNN needs at least one filter width");
    for (auto w : filter_widths) positive(w, "filter width");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw UsageError("dropout must be in [0, 1)");
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw UsageError("learning rate must be finite and >= 0");
}

nlohmann::json ModelSpec::to_json() const {
    return {{"kind", to_string(kind)},
            {"mlp_hidden", mlp_hidden},
            {"filter_widths", filter_widths},
            {"filters_per_width", filters_per_width},
            {"dropout", dropout},
            {"embed_dim", embed_dim},
            {"hidden_dim", hidden_dim},
            {"lr", lr},
            {"epochs", epochs},
            {"batch_size", batch_size},
            {"seed", seed}};
}

ModelSpec ModelSpec::from_json(const nlohmann::json& j) {
    ModelSpec s;
    s.kind = parse_model_kind(j.at("kind").get<std::string>());
    s.mlp_hidden = j.value("mlp_hidden", s.mlp_hidden);
    s.filter_widths = j.value("filter_widths", s.filter_widths);
    s.filters_per_width = j.value("filters_per_width", s.filters_per_width);
    s.dropout = j.value("dropout", s.dropout);
    s.embed_dim = j.value("embed_dim", s.embed_dim);
    s.hidden_dim = j.value("hidden_dim", s.hidden_dim);
    s.lr = j.value("lr", s.lr);
    s.epochs = j.value("epochs", s.epochs);
    s.batch_size = j.value("batch_size", s.batch_size);
    s.seed = j.value("seed", s.seed);
    s.validate();
    return s;
}

nlohmann::json TrainReport::to_json() const {
    nlohmann::json e = nlohmann::json::array();
    for (const auto& r : epochs)
        e.push_back({{"train_loss", r.train_loss}, {"train_accuracy", r.train_accuracy}, {"test_accuracy", r.test_accuracy}});
    return {{"epochs", e},
            {"best_train_accuracy", best_train_accuracy},
            {"best_test_accuracy", best_test_accuracy},
            {"final_test_accuracy", final_test_accuracy()}};
}

double accuracy_percent(std::span<const ClassProbs> probs, std::span<const Label> labels) {
    if (probs.size() != labels.size()) throw DataError("prediction and label counts differ");
    if (labels.empty()) return 0.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) correct += argmax_label(probs[i]) == labels[i];
    return 100.0 * static_cast<double>(correct) / static_cast<double>(labels.size());
}

namespace nets {

namespace {

ClassProbs to_probs(std::span<const double> logits) {
    const auto p = nnet::softmax(logits);
    return {p[0], p[1]};
}

void add_into(Tensor& dst, const Tensor& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

// Runs body(i) for i in [0, n) across threads, rethrowing the first error.
template <class F>
void parallel_each(std::size_t n, F&& body) {
    std::exception_ptr err;
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
        try {
            body(static_cast<std::size_t>(i));
        } catch (...) {
#pragma omp critical
            if (!err) err = std::current_exception();
        }
    }
    if (err) std::rethrow_exception(err);
}

void check_indices(const EncodedSeq& x, std::size_t rows) {
    for (auto i : x.indices)
        if (i >= rows) throw DataError(fmt::format("token index {} outside the embedding table ({} rows)", i, rows));
}

// Adds per-position input gradients into the embedding gradient. The pad
// row never receives gradient.
void scatter_rows(Tensor& dE, const EncodedSeq& x, const Tensor& dseq) {
    const std::size_t d = dE.cols();
    for (std::size_t t = 0; t < dseq.rows(); ++t) {
        const auto row = x.indices[t];
        if (row == EmbeddingTable::kPad) continue;
        double* dst = dE.data() + row * d;
        const double* src = dseq.data() + t * d;
        for (std::size_t k = 0; k < d; ++k) dst[k] += src[k];
    }
}

void init_embeddings(Param& embed, Rng& rng, const EmbeddingTable* pretrained) {
    const std::size_t d = embed.value.cols();
    if (pretrained) {
        if (pretrained->rows() != embed.value.rows() || pretrained->dim() != d)
            throw DataError("pretrained embedding table does not match the network's vocabulary");
        std::copy(pretrained->data().begin(), pretrained->data().end(), embed.value.data());
    } else {
        for (std::size_t r = 0; r < embed.value.rows(); ++r)
            for (std::size_t k = 0; k < d; ++k) embed.value(r, k) = rng.uniform(-0.5, 0.5) / static_cast<double>(d);
    }
    for (std::size_t k = 0; k < d; ++k) embed.value(EmbeddingTable::kPad, k) = 0.0;
}

} // namespace

// ------------------------------------------------------------------------ MLP

MlpNet::MlpNet(std::size_t in_dim, std::vector<std::size_t> hidden, std::vector<double> mean,
               std::vector<double> scale)
    : mean_(std::move(mean)) {
    if (hidden.empty()) throw UsageError("the MLP needs at least one hidden layer");
    if (mean_.size() != in_dim || scale.size() != in_dim) throw DataError("standardizer does not match the input width");
    inv_scale_.resize(in_dim);
    for (std::size_t j = 0; j < in_dim; ++j) inv_scale_[j] = 1.0 / scale[j];
    w1_ = Param("l1.W", Tensor::matrix(in_dim, hidden[0]));
    b1_ = Param("l1.b", Tensor::vector(hidden[0]));
    for (std::size_t l = 1; l <= hidden.size(); ++l) {
        const std::size_t out = l < hidden.size() ? hidden[l] : kNumClasses;
        layers_.emplace_back(hidden[l - 1], out);
        const std::string prefix = l < hidden.size() ? fmt::format("l{}.", l + 1) : "head.";
        layers_.back().W.name = prefix + "W";
        layers_.back().b.name = prefix + "b";
    }
}

void MlpNet::init(Rng& rng) {
    nnet::glorot_uniform(w1_.value, w1_.value.rows(), w1_.value.cols(), rng);
    b1_.value.zero();
    for (auto& l : layers_) l.init(rng);
}

std::vector<Param*> MlpNet::params() {
    std::vector<Param*> p = {&w1_, &b1_};
    for (auto& l : layers_) {
        p.push_back(&l.W);
        p.push_back(&l.b);
    }
    return p;
}

Tensor MlpNet::first_layer(std::span<const Input* const> xs) const {
    const std::size_t in = in_dim(), h = w1_.value.cols();
    // Shared offset b - (mean/scale)^T W, then the sparse part per row.
    std::vector<double> offset(b1_.value.values().begin(), b1_.value.values().end());
    for (std::size_t j = 0; j < in; ++j) {
        const double u = mean_[j] * inv_scale_[j];
        if (u == 0.0) continue;
        const double* wj = w1_.value.data() + j * h;
        for (std::size_t k = 0; k < h; ++k) offset[k] -= u * wj[k];
    }
    Tensor a = Tensor::matrix(xs.size(), h);
    parallel_each(xs.size(), [&](std::size_t b) {
        const SparseVector& x = *xs[b];
        if (x.dim != in) throw DataError(fmt::format("MLP expects dimension {}, got {}", in, x.dim));
        double* row = a.data() + b * h;
        std::copy(offset.begin(), offset.end(), row);
        for (const auto& e : x.entries) {
            const double v = e.value * inv_scale_[e.index];
            const double* wj = w1_.value.data() + static_cast<std::size_t>(e.index) * h;
            for (std::size_t k = 0; k < h; ++k) row[k] += v * wj[k];
        }
    });
    a.check_finite("MLP first layer");
    return a;
}

double MlpNet::accumulate_batch(std::span<const Input* const> xs, std::span<const Label> ys, Rng&) {
    const std::size_t batch = xs.size();
    std::vector<Tensor> pre, post; // pre-activations and their ReLU outputs
    pre.push_back(first_layer(xs));
    post.push_back(nnet::relu_forward(pre.back()));
    for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
        pre.push_back(layers_[l].forward(post.back()));
        post.push_back(nnet::relu_forward(pre.back()));
    }
    const Tensor logits = layers_.back().forward(post.back());

    double loss = 0.0;
    Tensor dlogits = Tensor::matrix(batch, kNumClasses);
    for (std::size_t b = 0; b < batch; ++b) {
        const auto r = nnet::softmax_cross_entropy(logits.row(b), static_cast<std::size_t>(class_index(ys[b])));
        loss += r.loss;
        for (int c = 0; c < kNumClasses; ++c) dlogits(b, c) = r.dlogits[c] / static_cast<double>(batch);
    }

    Tensor dh = layers_.back().backward(post.back(), dlogits, layers_.back().W.grad, layers_.back().b.grad);
    for (std::size_t l = layers_.size() - 1; l-- > 0;) {
        const Tensor da = nnet::relu_backward(pre[l + 1], dh);
        dh = layers_[l].backward(post[l], da, layers_[l].W.grad, layers_[l].b.grad);
    }
    const Tensor da1 = nnet::relu_backward(pre[0], dh);

    const std::size_t h = w1_.value.cols();
    std::vector<double> colsum(h, 0.0);
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t k = 0; k < h; ++k) colsum[k] += da1(b, k);
    for (std::size_t k = 0; k < h; ++k) b1_.grad[k] += colsum[k];
    // Dense part from the mean offset, then the sparse part, row by row.
    for (std::size_t j = 0; j < in_dim(); ++j) {
        const double u = mean_[j] * inv_scale_[j];
        if (u == 0.0) continue;
        double* g = w1_.grad.data() + j * h;
        for (std::size_t k = 0; k < h; ++k) g[k] -= u * colsum[k];
    }
    for (std::size_t b = 0; b < batch; ++b) {
        const double* d = da1.data() + b * h;
        for (const auto& e : xs[b]->entries) {
            const double v = e.value * inv_scale_[e.index];
            double* g = w1_.grad.data() + static_cast<std::size_t>(e.index) * h;
            for (std::size_t k = 0; k < h; ++k) g[k] += v * d[k];
        }
    }
    return loss / static_cast<double>(batch);
}

std::vector<ClassProbs> MlpNet::predict_batch(std::span<const Input* const> xs) const {
    if (xs.empty()) return {};
    Tensor h = nnet::relu_forward(first_layer(xs));
    for (std::size_t l = 0; l + 1 < layers_.size(); ++l) h = nnet::relu_forward(layers_[l].forward(h));
    const Tensor logits = layers_.back().forward(h);
    std::vector<ClassProbs> out(xs.size());
    for (std::size_t b = 0; b < xs.size(); ++b) out[b] = to_probs(logits.row(b));
    return out;
}

double MlpNet::kink_margin(std::span<const Input* const> xs) const {
    double margin = std::numeric_limits<double>::infinity();
    Tensor a = first_layer(xs);
    for (std::size_t l = 0;; ++l) {
        for (auto v : a.values()) margin = std::min(margin, std::abs(v));
        if (l + 1 >= layers_.size()) break;
        a = layers_[l].forward(nnet::relu_forward(a));
    }
    return margin;
}

// ------------------------------------------------------------------------ CNN

struct CnnNet::Grads {
    std::vector<Tensor> conv_dW, conv_db;
    Tensor head_dW, head_db;
    Tensor dseq;
};

CnnNet::CnnNet(std::size_t vocab_rows, std::size_t embed_dim, std::vector<std::size_t> widths, std::size_t filters,
               double dropout)
    : embed_("embed", Tensor::matrix(vocab_rows, embed_dim)), head_(widths.size() * filters, kNumClasses),
      dropout_(dropout) {
    if (vocab_rows < 2) throw DataError("embedding table needs the reserved rows");
    for (auto w : widths) {
        convs_.emplace_back(w, embed_dim, filters);
        convs_.back().W.name = fmt::format("conv{}.W", w);
        convs_.back().b.name = fmt::format("conv{}.b", w);
    }
    head_.W.name = "head.W";
    head_.b.name = "head.b";
}

void CnnNet::init(Rng& rng, const EmbeddingTable* pretrained) {
    init_embeddings(embed_, rng, pretrained);
    for (auto& c : convs_) c.init(rng);
    head_.init(rng);
}

std::vector<Param*> CnnNet::params() {
    std::vector<Param*> p = {&embed_};
    for (auto& c : convs_) {
        p.push_back(&c.W);
        p.push_back(&c.b);
    }
    p.push_back(&head_.W);
    p.push_back(&head_.b);
    return p;
}

Tensor CnnNet::gather(const Input& x) const {
    check_indices(x, embed_.value.rows());
    const std::size_t d = embed_dim();
    Tensor seq = Tensor::matrix(x.indices.size(), d);
    for (std::size_t t = 0; t < x.indices.size(); ++t) {
        const auto src = embed_.value.row(x.indices[t]);
        std::copy(src.begin(), src.end(), seq.row(t).begin());
    }
    return seq;
}

double CnnNet::example(const Input& x, Label y, Rng* dropout_rng, Grads& g) const {
    const Tensor seq = gather(x);
    const std::size_t filters = convs_.front().filters();
    Tensor z = Tensor::matrix(1, convs_.size() * filters);
    std::vector<nnet::PoolResult> pools;
    for (std::size_t c = 0; c < convs_.size(); ++c) {
        pools.push_back(nnet::maxpool_over_time(convs_[c].forward(seq)));
        std::copy(pools.back().values.begin(), pools.back().values.end(), z.data() + c * filters);
    }
    const Tensor r = nnet::relu_forward(z);
    Rng unused(0);
    const auto drop = nnet::dropout_forward(r, dropout_, dropout_rng != nullptr, dropout_rng ? *dropout_rng : unused);
    const Tensor logits = head_.forward(drop.y);
    const auto sce = nnet::softmax_cross_entropy(logits.row(0), static_cast<std::size_t>(class_index(y)));

    g.head_dW = Tensor(head_.W.value.shape());
    g.head_db = Tensor(head_.b.value.shape());
    const Tensor dlogits({1, static_cast<std::size_t>(kNumClasses)}, sce.dlogits);
    const Tensor du = head_.backward(drop.y, dlogits, g.head_dW, g.head_db);
    const Tensor dz = nnet::relu_backward(z, nnet::dropout_backward(du, drop.mask));

    g.dseq = Tensor(seq.shape());
    g.conv_dW.clear();
    g.conv_db.clear();
    for (std::size_t c = 0; c < convs_.size(); ++c) {
        g.conv_dW.emplace_back(convs_[c].W.value.shape());
        g.conv_db.emplace_back(convs_[c].b.value.shape());
        convs_[c].backward_sparse(seq, pools[c].argmax, dz.values().subspan(c * filters, filters), g.conv_dW[c],
                                  g.conv_db[c], g.dseq);
    }
    return sce.loss;
}

double CnnNet::loss_and_grad(const Input& x, Label y, Rng* dropout_rng) {
    Grads g;
    const double loss = example(x, y, dropout_rng, g);
    for (std::size_t c = 0; c < convs_.size(); ++c) {
        add_into(convs_[c].W.grad, g.conv_dW[c]);
        add_into(convs_[c].b.grad, g.conv_db[c]);
    }
    add_into(head_.W.grad, g.head_dW);
    add_into(head_.b.grad, g.head_db);
    scatter_rows(embed_.grad, x, g.dseq);
    return loss;
}

double CnnNet::accumulate_batch(std::span<const Input* const> xs, std::span<const Label> ys, Rng& rng) {
    const std::size_t batch = xs.size();
    std::vector<std::uint64_t> seeds(batch);
    for (auto& s : seeds) s = rng.next();
    std::vector<Grads> grads(batch);
    std::vector<double> losses(batch);
    parallel_each(batch, [&](std::size_t i) {
        Rng r(seeds[i]);
        losses[i] = example(*xs[i], ys[i], dropout_ > 0.0 ? &r : nullptr, grads[i]);
    });
    // Fixed-order reduction keeps the result independent of thread count.
    const double scale = 1.0 / static_cast<double>(batch);
    double loss = 0.0;
    for (std::size_t i = 0; i < batch; ++i) {
        Grads& g = grads[i];
        for (auto* t : {&g.head_dW, &g.head_db, &g.dseq})
            for (auto& v : t->values()) v *= scale;
        for (std::size_t c = 0; c < convs_.size(); ++c) {
            for (auto& v : g.conv_dW[c].values()) v *= scale;
            for (auto& v : g.conv_db[c].values()) v *= scale;
            add_into(convs_[c].W.grad, g.conv_dW[c]);
            add_into(convs_[c].b.grad, g.conv_db[c]);
        }
        add_into(head_.W.grad, g.head_dW);
        add_into(head_.b.grad, g.head_db);
        scatter_rows(embed_.grad, *xs[i], g.dseq);
        loss += losses[i];
    }
    return loss * scale;
}

ClassProbs CnnNet::forward_eval(const Input& x) const {
    const Tensor seq = gather(x);
    const std::size_t filters = convs_.front().filters();
    Tensor z = Tensor::matrix(1, convs_.size() * filters);
    for (std::size_t c = 0; c < convs_.size(); ++c) {
        const auto pooled = nnet::maxpool_over_time(convs_[c].forward(seq));
        std::copy(pooled.values.begin(), pooled.values.end(), z.data() + c * filters);
    }
    return to_probs(head_.forward(nnet::relu_forward(z)).row(0));
}

ClassProbs CnnNet::predict(const Input& x) const { return forward_eval(x); }

std::vector<ClassProbs> CnnNet::predict_batch(std::span<const Input* const> xs) const {
    std::vector<ClassProbs> out(xs.size());
    parallel_each(xs.size(), [&](std::size_t i) { out[i] = forward_eval(*xs[i]); });
    return out;
}

double CnnNet::kink_margin(const Input& x) const {
    const Tensor seq = gather(x);
    double margin = std::numeric_limits<double>::infinity();
    for (const auto& conv : convs_) {
        const Tensor fm = conv.forward(seq);
        const auto pooled = nnet::maxpool_over_time(fm);
        for (std::size_t f = 0; f < conv.filters(); ++f) {
            margin = std::min(margin, std::abs(pooled.values[f]));
            for (std::size_t t = 0; t < fm.rows(); ++t)
                if (t != pooled.argmax[f]) margin = std::min(margin, pooled.values[f] - fm(t, f));
        }
    }
    return margin;
}

// ----------------------------------------------------------------------- LSTM

struct LstmNet::Grads {
    Tensor dWx, dWh, db;
    Tensor head_dW, head_db;
    Tensor dseq;
};

LstmNet::LstmNet(std::size_t vocab_rows, std::size_t embed_dim, std::size_t hidden)
    : embed_("embed", Tensor::matrix(vocab_rows, embed_dim)), lstm_(embed_dim, hidden), head_(hidden, kNumClasses) {
    if (vocab_rows < 2) throw DataError("embedding table needs the reserved rows");
    lstm_.Wx.name = "lstm.Wx";
    lstm_.Wh.name = "lstm.Wh";
    lstm_.b.name = "lstm.b";
    head_.W.name = "head.W";
    head_.b.name = "head.b";
}

void LstmNet::init(Rng& rng, const EmbeddingTable* pretrained) {
    init_embeddings(embed_, rng, pretrained);
    lstm_.init(rng);
    head_.init(rng);
}

std::vector<Param*> LstmNet::params() {
    return {&embed_, &lstm_.Wx, &lstm_.Wh, &lstm_.b, &head_.W, &head_.b};
}

Tensor LstmNet::gather(const Input& x) const {
    check_indices(x, embed_.value.rows());
    if (x.true_len > x.indices.size()) throw DataError("sequence true length exceeds its padded length");
    const std::size_t d = embed_dim();
    Tensor seq = Tensor::matrix(x.true_len, d);
    for (std::size_t t = 0; t < x.true_len; ++t) {
        const auto src = embed_.value.row(x.indices[t]);
        std::copy(src.begin(), src.end(), seq.row(t).begin());
    }
    return seq;
}

double LstmNet::example(const Input& x, Label y, Grads& g) const {
    const Tensor seq = gather(x);
    nnet::LstmCache cache;
    const auto h = lstm_.forward(seq, cache);
    const Tensor hm({1, h.size()}, h);
    const Tensor logits = head_.forward(hm);
    const auto sce = nnet::softmax_cross_entropy(logits.row(0), static_cast<std::size_t>(class_index(y)));

    g.head_dW = Tensor(head_.W.value.shape());
    g.head_db = Tensor(head_.b.value.shape());
    const Tensor dlogits({1, static_cast<std::size_t>(kNumClasses)}, sce.dlogits);
    const Tensor dh = head_.backward(hm, dlogits, g.head_dW, g.head_db);
    g.dWx = Tensor(lstm_.Wx.value.shape());
    g.dWh = Tensor(lstm_.Wh.value.shape());
    g.db = Tensor(lstm_.b.value.shape());
    g.dseq = lstm_.backward(seq, cache, dh.row(0), g.dWx, g.dWh, g.db);
    return sce.loss;
}

double LstmNet::loss_and_grad(const Input& x, Label y) {
    Grads g;
    const double loss = example(x, y, g);
    add_into(lstm_.Wx.grad, g.dWx);
    add_into(lstm_.Wh.grad, g.dWh);
    add_into(lstm_.b.grad, g.db);
    add_into(head_.W.grad, g.head_dW);
    add_into(head_.b.grad, g.head_db);
    scatter_rows(embed_.grad, x, g.dseq);
    return loss;
}

double LstmNet::accumulate_batch(std::span<const Input* const> xs, std::span<const Label> ys, Rng&) {
    const std::size_t batch = xs.size();
    std::vector<Grads> grads(batch);
    std::vector<double> losses(batch);
    parallel_each(batch, [&](std::size_t i) { losses[i] = example(*xs[i], ys[i], grads[i]); });
    const double scale = 1.0 / static_cast<double>(batch);
    double loss = 0.0;
    for (std::size_t i = 0; i < batch; ++i) {
        Grads& g = grads[i];
        for (auto* t : {&g.dWx, &g.dWh, &g.db, &g.head_dW, &g.head_db, &g.dseq})
            for (auto& v : t->values()) v *= scale;
        add_into(lstm_.Wx.grad, g.dWx);
        add_into(lstm_.Wh.grad, g.dWh);
        add_into(lstm_.b.grad, g.db);
        add_into(head_.W.grad, g.head_dW);
        add_into(head_.b.grad, g.head_db);
        scatter_rows(embed_.grad, *xs[i], g.dseq);
        loss += losses[i];
    }
    return loss * scale;
}

ClassProbs LstmNet::predict(const Input& x) const {
    const Tensor seq = gather(x);
    nnet::LstmCache cache;
    const auto h = lstm_.forward(seq, cache);
    return to_probs(head_.forward(Tensor({1, h.size()}, h)).row(0));
}

std::vector<ClassProbs> LstmNet::predict_batch(std::span<const Input* const> xs) const {
    std::vector<ClassProbs> out(xs.size());
    parallel_each(xs.size(), [&](std::size_t i) { out[i] = predict(*xs[i]); });
    return out;
}

} // namespace nets

// ------------------------------------------------------------- training loop

namespace {

template <class Net>
double evaluate_accuracy(const Net& net, std::span<const typename Net::Input> xs, std::span<const Label> ys) {
    if (xs.empty()) return 0.0;
    std::vector<const typename Net::Input*> ptrs(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) ptrs[i] = &xs[i];
    const auto probs = net.predict_batch(ptrs);
    return accuracy_percent(probs, ys);
}

} // namespace

template <class Net>
TrainReport train_net(Net& net, const ModelSpec& spec, std::span<const typename Net::Input> train_x,
                      std::span<const Label> train_y, std::span<const typename Net::Input> test_x,
                      std::span<const Label> test_y, const EpochCallback& on_epoch) {
    spec.validate();
    if (train_x.empty()) throw DataError("empty training set");
    if (train_x.size() != train_y.size() || test_x.size() != test_y.size())
        throw DataError("feature and label counts differ");

    auto params = net.params();
    nnet::Adam adam(spec.lr);
    TrainReport report;
    const std::size_t n = train_x.size();
    std::vector<std::size_t> order(n);
    std::vector<const typename Net::Input*> batch_x;
    std::vector<Label> batch_y;

    for (std::size_t epoch = 0; epoch < spec.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle_rng(derive_seed(spec.seed, 0x5eed0000 + epoch));
        shuffle_rng.shuffle(std::span<std::size_t>(order));
        Rng dropout_rng(derive_seed(spec.seed, 0xd409000 + epoch));

        double loss_sum = 0.0;
        for (std::size_t start = 0; start < n; start += spec.batch_size) {
            const std::size_t end = std::min(n, start + spec.batch_size);
            batch_x.clear();
            batch_y.clear();
            for (std::size_t k = start; k < end; ++k) {
                batch_x.push_back(&train_x[order[k]]);
                batch_y.push_back(train_y[order[k]]);
            }
            nnet::zero_grads(params);
            const double loss = net.accumulate_batch(batch_x, batch_y, dropout_rng);
            if (!std::isfinite(loss))
                throw NumericError(fmt::format("training diverged: non-finite loss in epoch {} at row {}", epoch + 1, start));
            adam.step(params);
            loss_sum += loss * static_cast<double>(end - start);
        }

        EpochRecord rec;
        rec.train_loss = loss_sum / static_cast<double>(n);
        rec.train_accuracy = evaluate_accuracy(net, train_x, train_y);
        rec.test_accuracy = evaluate_accuracy(net, test_x, test_y);
        report.best_train_accuracy = std::max(report.best_train_accuracy, rec.train_accuracy);
        report.best_test_accuracy = std::max(report.best_test_accuracy, rec.test_accuracy);
        report.epochs.push_back(rec);
        if (on_epoch) on_epoch(epoch, rec);
    }
    return report;
}

template TrainReport train_net<nets::MlpNet>(nets::MlpNet&, const ModelSpec&, std::span<const SparseVector>,
                                             std::span<const Label>, std::span<const SparseVector>,
                                             std::span<const Label>, const EpochCallback&);
template TrainReport train_net<nets::CnnNet>(nets::CnnNet&, const ModelSpec&, std::span<const EncodedSeq>,
                                             std::span<const Label>, std::span<const EncodedSeq>,
                                             std::span<const Label>, const EpochCallback&);
template TrainReport train_net<nets::LstmNet>(nets::LstmNet&, const ModelSpec&, std::span<const EncodedSeq>,
                                              std::span<const Label>, std::span<const EncodedSeq>,
                                              std::span<const Label>, const EpochCallback&);

namespace {

constexpr std::string_view kB64 = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string encode_f64(std::span<const double> values) {
    static_assert(std::endian::native == std::endian::little, "model files store little-endian doubles");
    const auto* bytes = reinterpret_cast<const unsigned char*>(values.data());
    const std::size_t n = values.size() * sizeof(double);
    std::string out;
    out.reserve((n + 2) / 3 * 4);
    for (std::size_t i = 0; i < n; i += 3) {
        const std::uint32_t b0 = bytes[i], b1 = i + 1 < n ? bytes[i + 1] : 0, b2 = i + 2 < n ? bytes[i + 2] : 0;
        const std::uint32_t v = (b0 << 16) | (b1 << 8) | b2;
        out += kB64[(v >> 18) & 63];
        out += kB64[(v >> 12) & 63];
        out += i + 1 < n ? kB64[(v >> 6) & 63] : '=';
        out += i + 2 < n ? kB64[v & 63] : '=';
    }
    return out;
}

std::vector<double> decode_f64(std::string_view text, std::size_t count, std::string_view what) {
    auto fail = [&] { throw DataError(fmt::format("parameter '{}' has malformed data", what)); };
    if (text.size() % 4 != 0) fail();
    std::vector<unsigned char> bytes;
    bytes.reserve(text.size() / 4 * 3);
    for (std::size_t i = 0; i < text.size(); i += 4) {
        std::uint32_t v = 0;
        int pad = 0;
        for (std::size_t k = 0; k < 4; ++k) {
            const char c = text[i + k];
            std::uint32_t d = 0;
            if (c == '=') {
                if (i + 4 != text.size() || k < 2) fail();
                ++pad;
            } else {
                const auto pos = kB64.find(c);
                if (pos == std::string_view::npos || pad) fail();
                d = static_cast<std::uint32_t>(pos);
            }
            v = (v << 6) | d;
        }
        bytes.push_back(static_cast<unsigned char>(v >> 16));
        if (pad < 2) bytes.push_back(static_cast<unsigned char>(v >> 8));
        if (pad < 1) bytes.push_back(static_cast<unsigned char>(v));
    }
    if (bytes.size() != count * sizeof(double)) fail();
    std::vector<double> out(count);
    std::memcpy(out.data(), bytes.data(), bytes.size());
    return out;
}

} // namespace

nlohmann::json params_to_json(std::span<nnet::Param* const> params) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto* p : params)
        out.push_back({{"name", p->name}, {"shape", p->value.shape()}, {"f64le_base64", encode_f64(p->value.values())}});
    return out;
}

void params_from_json(const nlohmann::json& j, std::span<nnet::Param* const> params) {
    if (!j.is_array() || j.size() != params.size())
        throw DataError(fmt::format("model file lists {} parameter tensors, expected {}", j.size(), params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        nnet::Param& p = *params[i];
        const auto& e = j[i];
        if (e.at("name").get<std::string>() != p.name)
            throw DataError(fmt::format("parameter {} is named '{}', expected '{}'", i, e.at("name").get<std::string>(), p.name));
        if (e.at("shape").get<std::vector<std::size_t>>() != p.value.shape())
            throw DataError(fmt::format("parameter '{}' has shape {}, expected {}", p.name,
                                        nnet::shape_string(e.at("shape").get<std::vector<std::size_t>>()),
                                        nnet::shape_string(p.value.shape())));
        p.value = nnet::Tensor(p.value.shape(), decode_f64(e.at("f64le_base64").get<std::string>(), p.value.size(), p.name));
        p.value.check_finite(p.name);
        p.grad = nnet::Tensor(p.value.shape());
    }
}

} // namespace reviewguard
