#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "reviewguard/classic.hpp"
#include "reviewguard/corpus.hpp"
#include "reviewguard/embed.hpp"
#include "reviewguard/features.hpp"
#include "reviewguard/nnet/layers.hpp"
#include "reviewguard/nnet/optim.hpp"

namespace reviewguard {

enum class ModelKind { Mlp, Cnn, Lstm };

std::string_view to_string(ModelKind k);
ModelKind parse_model_kind(std::string_view s);

struct ModelSpec {
    ModelKind kind = ModelKind::Cnn;
    std::vector<std::size_t> mlp_hidden = {170, 170, 170};
    std::vector<std::size_t> filter_widths = {3, 4, 5};
    std::size_t filters_per_width = 100;
    double dropout = 0.5; // CNN only
    std::size_t embed_dim = 100;
    std::size_t hidden_dim = 100; // LSTM only
    double lr = 0.001;
    std::size_t epochs = 20;
    std::size_t batch_size = 32;
    std::uint64_t seed = 1;

    void validate() const;
    nlohmann::json to_json() const;
    static ModelSpec from_json(const nlohmann::json& j);
};

struct EpochRecord {
    double train_loss = 0.0;     // mean cross-entropy over the epoch's mini-batches
    double train_accuracy = 0.0; // percent, evaluated after the epoch
    double test_accuracy = 0.0;
};

struct TrainReport {
    std::vector<EpochRecord> epochs;
    double best_train_accuracy = 0.0;
    double best_test_accuracy = 0.0;

    double final_test_accuracy() const { return epochs.empty() ? 0.0 : epochs.back().test_accuracy; }
    nlohmann::json to_json() const;
};

// Percentage of rows whose argmax class matches.
double accuracy_percent(std::span<const ClassProbs> probs, std::span<const Label> labels);

namespace nets {

using nnet::Param;
using nnet::Tensor;

// Feed-forward net over standardized sparse TF-IDF rows. The first layer
// folds the standardization in, so rows stay sparse:
//   h = b - (mean/scale)^T W + sum_nnz (v_j/scale_j) W_j
class MlpNet {
public:
    using Input = SparseVector;

    MlpNet() = default;
    MlpNet(std::size_t in_dim, std::vector<std::size_t> hidden, std::vector<double> mean, std::vector<double> scale);

    void init(Rng& rng);
    std::vector<Param*> params();
    std::size_t in_dim() const { return mean_.size(); }

    // Mean cross-entropy over the batch; accumulates its gradient.
    double accumulate_batch(std::span<const Input* const> xs, std::span<const Label> ys, Rng& rng);
    std::vector<ClassProbs> predict_batch(std::span<const Input* const> xs) const;

    // Smallest |pre-activation| of any hidden unit over the batch.
    double kink_margin(std::span<const Input* const> xs) const;

private:
    Tensor first_layer(std::span<const Input* const> xs) const;

    std::vector<double> mean_;
    std::vector<double> inv_scale_;
    Param w1_, b1_;
    std::vector<nnet::Dense> layers_; // hidden-to-hidden, then the head
};

// Embeddings, parallel valid convolutions with max-over-time pooling, ReLU,
// dropout and a softmax head.
class CnnNet {
public:
    using Input = EncodedSeq;

    CnnNet() = default;
    CnnNet(std::size_t vocab_rows, std::size_t embed_dim, std::vector<std::size_t> widths, std::size_t filters,
           double dropout);

    // Glorot for conv and head; embeddings copied from `pretrained` if given.
    void init(Rng& rng, const EmbeddingTable* pretrained);
    std::vector<Param*> params();
    std::size_t embed_dim() const { return embed_.value.cols(); }

    double accumulate_batch(std::span<const Input* const> xs, std::span<const Label> ys, Rng& rng);
    std::vector<ClassProbs> predict_batch(std::span<const Input* const> xs) const;
    ClassProbs predict(const Input& x) const;

    // Per-example loss and gradient, accumulated into the params. Dropout is
    // skipped when `dropout_rng` is null.
    double loss_and_grad(const Input& x, Label y, Rng* dropout_rng);

    // Smallest distance of any pooled value to a ReLU kink or of a pooled
    // maximum to its runner-up; finite-difference checks need it positive.
    double kink_margin(const Input& x) const;

private:
    struct Grads;
    double example(const Input& x, Label y, Rng* dropout_rng, Grads& g) const;
    ClassProbs forward_eval(const Input& x) const;
    Tensor gather(const Input& x) const;

    Param embed_;
    std::vector<nnet::Conv1d> convs_;
    nnet::Dense head_;
    double dropout_ = 0.0;
};

// Embeddings, an LSTM run over the true-length prefix, and a softmax head on
// the last hidden state.
class LstmNet {
public:
    using Input = EncodedSeq;

    LstmNet() = default;
    LstmNet(std::size_t vocab_rows, std::size_t embed_dim, std::size_t hidden);

    void init(Rng& rng, const EmbeddingTable* pretrained);
    std::vector<Param*> params();
    std::size_t embed_dim() const { return embed_.value.cols(); }

    double accumulate_batch(std::span<const Input* const> xs, std::span<const Label> ys, Rng& rng);
    std::vector<ClassProbs> predict_batch(std::span<const Input* const> xs) const;
    ClassProbs predict(const Input& x) const;
    double loss_and_grad(const Input& x, Label y);

private:
    struct Grads;
    double example(const Input& x, Label y, Grads& g) const;
    Tensor gather(const Input& x) const;

    Param embed_;
    nnet::Lstm lstm_;
    nnet::Dense head_;
};

} // namespace nets

using EpochCallback = std::function<void(std::size_t epoch, const EpochRecord&)>;

// The training loop: each epoch shuffles the training rows with a seed
// derived from spec.seed, runs Adam over mini-batches of mean cross-entropy,
// then evaluates accuracy on both sets. Best accuracies are running maxima.
// A non-finite loss throws NumericError.
template <class Net>
TrainReport train_net(Net& net, const ModelSpec& spec, std::span<const typename Net::Input> train_x,
                      std::span<const Label> train_y, std::span<const typename Net::Input> test_x,
                      std::span<const Label> test_y, const EpochCallback& on_epoch = {});

// Parameters as {name, shape, f64le_base64} records, and the reverse. The
// payload is the raw little-endian doubles, so values round-trip exactly.
nlohmann::json params_to_json(std::span<nnet::Param* const> params);
void params_from_json(const nlohmann::json& j, std::span<nnet::Param* const> params);

} // namespace reviewguard
