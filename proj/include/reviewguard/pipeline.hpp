#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "reviewguard/classic.hpp"
#include "reviewguard/embed.hpp"
#include "reviewguard/features.hpp"
#include "reviewguard/models.hpp"
#include "reviewguard/textprep.hpp"

namespace reviewguard {

enum class ClassifierKind { Mlp, Cnn, Lstm, NaiveBayes, Knn, Svm };

std::string_view to_string(ClassifierKind k);
// "mlp", "cnn", "lstm", "nb", "knn", "svm"
ClassifierKind parse_classifier_kind(std::string_view s);
bool is_neural(ClassifierKind k);
bool uses_sequences(ClassifierKind k);

// Everything needed to turn preprocessed training documents into a model.
// Sub-seeds for word2vec, initialization, shuffling and the SVM all derive
// from `seed`.
struct PipelineConfig {
    ClassifierKind kind = ClassifierKind::Cnn;
    NgramRange ngram{1, 1};
    std::size_t min_df = 1;
    ModelSpec model;
    std::size_t knn_k = 5;
    SvmConfig svm;
    Word2VecConfig word2vec;       // dim is taken from model.embed_dim
    bool pretrain_embeddings = true;
    std::optional<std::size_t> max_len; // default: 95th percentile of training lengths
    std::uint64_t seed = 1;

    nlohmann::json to_json() const;
    static PipelineConfig from_json(const nlohmann::json& j);
};

// A fitted featurizer plus classifier. Prediction is thread-safe.
class TextClassifier {
public:
    virtual ~TextClassifier() = default;

    virtual ClassifierKind kind() const = 0;
    virtual std::vector<ClassProbs> predict_proba(std::span<const TokenizedDoc> docs) const = 0;
    ClassProbs predict_proba(const TokenizedDoc& doc) const { return predict_proba(std::span(&doc, 1))[0]; }
    std::vector<Label> predict(std::span<const TokenizedDoc> docs) const;

    // Whether the fitted featurizer has a feature for this (preprocessed) token.
    virtual bool knows_token(std::string_view token) const = 0;
    // Hash of the vocabulary or embedding table the model was fitted with.
    virtual std::uint64_t vocab_hash() const = 0;

    const PipelineConfig& config() const { return config_; }

    // {format_version, kind, config, vocab_hash, featurizer, model}
    virtual nlohmann::json to_json() const = 0;

protected:
    explicit TextClassifier(PipelineConfig cfg) : config_(std::move(cfg)) {}
    PipelineConfig config_;
};

struct FitResult {
    std::unique_ptr<TextClassifier> model;
    std::optional<TrainReport> report; // neural models only
};

// Fits every featurizer (vocabulary, standardizer, embeddings) on the
// training documents only. The test documents, if any, are used solely for
// the per-epoch test accuracy of neural models.
FitResult fit_pipeline(const PipelineConfig& cfg, std::span<const TokenizedDoc> train_docs,
                       std::span<const Label> train_labels, std::span<const TokenizedDoc> test_docs = {},
                       std::span<const Label> test_labels = {}, const EpochCallback& on_epoch = {});

std::unique_ptr<TextClassifier> classifier_from_json(const nlohmann::json& j);
void save_classifier(const TextClassifier& model, const std::filesystem::path& path);
std::unique_ptr<TextClassifier> load_classifier(const std::filesystem::path& path);

} // namespace reviewguard
