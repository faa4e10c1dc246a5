#include "reviewguard/pipeline.hpp"

#include "reviewguard/errors.hpp"
#include "reviewguard/rng.hpp"

#include <fstream>

#include <fmt/core.h>

namespace reviewguard {

namespace {

constexpr int kFormatVersion = 1;

// Sub-seed streams.
enum : std::uint64_t { kStreamTrain = 1, kStreamWord2Vec = 2, kStreamInit = 3, kStreamSvm = 4 };

} // namespace

std::string_view to_string(ClassifierKind k) {
    switch (k) {
    case ClassifierKind::Mlp: return "mlp";
    case ClassifierKind::Cnn: return "cnn";
    case ClassifierKind::Lstm: return "lstm";
    case ClassifierKind::NaiveBayes: return "nb";
    case ClassifierKind::Knn: return "knn";
    case ClassifierKind::Svm: return "svm";
    }
    return "?";
}

ClassifierKind parse_classifier_kind(std::string_view s) {
    for (auto k : {ClassifierKind::Mlp, ClassifierKind::Cnn, ClassifierKind::Lstm, ClassifierKind::NaiveBayes,
                   ClassifierKind::Knn, ClassifierKind::Svm})
        if (s == to_string(k)) return k;
    throw UsageError(fmt::format("unknown classifier '{}' (expected mlp, cnn, lstm, nb, knn or svm)", s));
}

bool is_neural(ClassifierKind k) {
    return k == ClassifierKind::Mlp || k == ClassifierKind::Cnn || k == ClassifierKind::Lstm;
}

bool uses_sequences(ClassifierKind k) { return k == ClassifierKind::Cnn || k == ClassifierKind::Lstm; }

nlohmann::json PipelineConfig::to_json() const {
    nlohmann::json j = {{"classifier", to_string(kind)},
                        {"ngram", ngram.name()},
                        {"min_df", min_df},
                        {"model", model.to_json()},
                        {"knn_k", knn_k},
                        {"svm",
                         {{"lambda", svm.lambda ? nlohmann::json(*svm.lambda) : nlohmann::json(nullptr)},
                          {"epochs", svm.epochs},
                          {"calibrate", svm.calibrate},
                          {"calibration_folds", svm.calibration_folds}}},
                        {"word2vec",
                         {{"window", word2vec.window},
                          {"negatives", word2vec.negatives},
                          {"epochs", word2vec.epochs},
                          {"lr", word2vec.lr},
                          {"max_vocab", word2vec.max_vocab},
                          {"subsample", word2vec.subsample}}},
                        {"pretrain_embeddings", pretrain_embeddings},
                        {"max_len", max_len ? nlohmann::json(*max_len) : nlohmann::json(nullptr)},
                        {"seed", seed}};
    return j;
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j) {
    PipelineConfig c;
    c.kind = parse_classifier_kind(j.at("classifier").get<std::string>());
    c.ngram = parse_ngram_range(j.at("ngram").get<std::string>());
    c.min_df = j.value("min_df", c.min_df);
    if (j.contains("model")) c.model = ModelSpec::from_json(j.at("model"));
    c.knn_k = j.value("knn_k", c.knn_k);
    if (j.contains("svm")) {
        const auto& s = j.at("svm");
        if (s.contains("lambda") && !s.at("lambda").is_null()) c.svm.lambda = s.at("lambda").get<double>();
        c.svm.epochs = s.value("epochs", c.svm.epochs);
        c.svm.calibrate = s.value("calibrate", c.svm.calibrate);
        c.svm.calibration_folds = s.value("calibration_folds", c.svm.calibration_folds);
    }
    if (j.contains("word2vec")) {
        const auto& w = j.at("word2vec");
        c.word2vec.window = w.value("window", c.word2vec.window);
        c.word2vec.negatives = w.value("negatives", c.word2vec.negatives);
        c.word2vec.epochs = w.value("epochs", c.word2vec.epochs);
        c.word2vec.lr = w.value("lr", c.word2vec.lr);
        c.word2vec.max_vocab = w.value("max_vocab", c.word2vec.max_vocab);
        c.word2vec.subsample = w.value("subsample", c.word2vec.subsample);
    }
    c.pretrain_embeddings = j.value("pretrain_embeddings", c.pretrain_embeddings);
    if (j.contains("max_len") && !j.at("max_len").is_null()) c.max_len = j.at("max_len").get<std::size_t>();
    c.seed = j.value("seed", c.seed);
    return c;
}

std::vector<Label> TextClassifier::predict(std::span<const TokenizedDoc> docs) const {
    std::vector<Label> out;
    for (const auto& p : predict_proba(docs)) out.push_back(argmax_label(p));
    return out;
}

namespace {

nlohmann::json envelope(const TextClassifier& m, nlohmann::json featurizer, nlohmann::json model) {
    return {{"format_version", kFormatVersion},
            {"kind", to_string(m.kind())},
            {"config", m.config().to_json()},
            {"vocab_hash", m.vocab_hash()},
            {"featurizer", std::move(featurizer)},
            {"model", std::move(model)}};
}

// ---------------------------------------------------------- n-gram models

class NgramClassifier : public TextClassifier {
public:
    NgramClassifier(PipelineConfig cfg, NgramVocab vocab) : TextClassifier(std::move(cfg)), vocab_(std::move(vocab)) {}

    bool knows_token(std::string_view token) const override { return vocab_.index(token).has_value(); }
    std::uint64_t vocab_hash() const override { return vocab_.hash(); }

protected:
    nlohmann::json featurizer_json() const { return {{"vocab", vocab_.to_json()}}; }

    NgramVocab vocab_;
};

class NbClassifier final : public NgramClassifier {
public:
    NbClassifier(PipelineConfig cfg, NgramVocab vocab, NaiveBayes nb)
        : NgramClassifier(std::move(cfg), std::move(vocab)), nb_(std::move(nb)) {}

    ClassifierKind kind() const override { return ClassifierKind::NaiveBayes; }
    std::vector<ClassProbs> predict_proba(std::span<const TokenizedDoc> docs) const override {
        std::vector<ClassProbs> out;
        for (const auto& d : docs) out.push_back(nb_.predict_proba(count_transform(d, vocab_)));
        return out;
    }
    nlohmann::json to_json() const override { return envelope(*this, featurizer_json(), nb_.to_json()); }

private:
    NaiveBayes nb_;
};

class KnnClassifier final : public NgramClassifier {
public:
    KnnClassifier(PipelineConfig cfg, NgramVocab vocab, Knn knn)
        : NgramClassifier(std::move(cfg), std::move(vocab)), knn_(std::move(knn)) {}

    ClassifierKind kind() const override { return ClassifierKind::Knn; }
    std::vector<ClassProbs> predict_proba(std::span<const TokenizedDoc> docs) const override {
        std::vector<ClassProbs> out(docs.size());
#pragma omp parallel for schedule(dynamic, 4)
        for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(docs.size()); ++i)
            out[i] = knn_.predict_proba(tfidf_transform(docs[i], vocab_));
        return out;
    }
    nlohmann::json to_json() const override { return envelope(*this, featurizer_json(), knn_.to_json()); }

private:
    Knn knn_;
};

// An uncalibrated SVM reports hard 0/1 probabilities.
class SvmClassifier final : public NgramClassifier {
public:
    SvmClassifier(PipelineConfig cfg, NgramVocab vocab, LinearSvm svm)
        : NgramClassifier(std::move(cfg), std::move(vocab)), svm_(std::move(svm)) {}

    ClassifierKind kind() const override { return ClassifierKind::Svm; }
    std::vector<ClassProbs> predict_proba(std::span<const TokenizedDoc> docs) const override {
        std::vector<ClassProbs> out;
        for (const auto& d : docs) {
            const auto x = tfidf_transform(d, vocab_);
            if (svm_.platt()) {
                out.push_back(svm_.predict_proba(x));
            } else {
                const bool spam = svm_.predict(x) == Label::Spam;
                out.push_back({spam ? 1.0 : 0.0, spam ? 0.0 : 1.0});
            }
        }
        return out;
    }
    nlohmann::json to_json() const override { return envelope(*this, featurizer_json(), svm_.to_json()); }

private:
    LinearSvm svm_;
};

class MlpClassifier final : public NgramClassifier {
public:
    MlpClassifier(PipelineConfig cfg, NgramVocab vocab, Standardizer standardizer, nets::MlpNet net)
        : NgramClassifier(std::move(cfg), std::move(vocab)), standardizer_(std::move(standardizer)),
          net_(std::move(net)) {}

    ClassifierKind kind() const override { return ClassifierKind::Mlp; }
    std::vector<ClassProbs> predict_proba(std::span<const TokenizedDoc> docs) const override {
        const auto rows = tfidf_transform_all(docs, vocab_);
        std::vector<const SparseVector*> ptrs;
        for (const auto& r : rows) ptrs.push_back(&r);
        return net_.predict_batch(ptrs);
    }
    nlohmann::json to_json() const override {
        auto f = featurizer_json();
        f["standardizer"] = standardizer_.to_json();
        auto& net = const_cast<nets::MlpNet&>(net_);
        return envelope(*this, std::move(f), {{"params", params_to_json(net.params())}});
    }

    static std::unique_ptr<TextClassifier> build(PipelineConfig cfg, NgramVocab vocab, Standardizer standardizer) {
        std::vector<double> scale(standardizer.dim());
        for (std::size_t j = 0; j < scale.size(); ++j) scale[j] = standardizer.scale(j);
        nets::MlpNet net(vocab.size(), cfg.model.mlp_hidden, standardizer.mean(), scale);
        return std::make_unique<MlpClassifier>(std::move(cfg), std::move(vocab), std::move(standardizer),
                                               std::move(net));
    }
    nets::MlpNet& net() { return net_; }

private:
    Standardizer standardizer_;
    nets::MlpNet net_;
};

// --------------------------------------------------------- sequence models

std::vector<std::string> table_words(const EmbeddingTable& t) {
    std::vector<std::string> words;
    for (std::size_t r = 2; r < t.rows(); ++r) words.push_back(t.word(r));
    return words;
}

template <class Net>
class SeqClassifier final : public TextClassifier {
public:
    SeqClassifier(PipelineConfig cfg, EmbeddingTable table, std::size_t max_len, Net net)
        : TextClassifier(std::move(cfg)), table_(std::move(table)), max_len_(max_len), net_(std::move(net)) {}

    ClassifierKind kind() const override {
        return std::is_same_v<Net, nets::CnnNet> ? ClassifierKind::Cnn : ClassifierKind::Lstm;
    }
    std::vector<ClassProbs> predict_proba(std::span<const TokenizedDoc> docs) const override {
        std::vector<EncodedSeq> seqs;
        for (const auto& d : docs) seqs.push_back(encode(d, table_, max_len_));
        std::vector<const EncodedSeq*> ptrs;
        for (const auto& s : seqs) ptrs.push_back(&s);
        return net_.predict_batch(ptrs);
    }
    bool knows_token(std::string_view token) const override { return table_.lookup(token) != EmbeddingTable::kUnk; }
    std::uint64_t vocab_hash() const override {
        std::uint64_t h = fnv1a("embedding-vocab");
        for (std::size_t r = 0; r < table_.rows(); ++r) h = fnv1a(table_.word(r), fnv1a("\n", h));
        return h;
    }
    nlohmann::json to_json() const override {
        auto& net = const_cast<Net&>(net_);
        return envelope(*this, {{"words", table_words(table_)}, {"max_len", max_len_}},
                        {{"params", params_to_json(net.params())}});
    }

    const EmbeddingTable& table() const { return table_; }
    std::size_t max_len() const { return max_len_; }
    Net& net() { return net_; }

private:
    EmbeddingTable table_;
    std::size_t max_len_;
    Net net_;
};

template <class Net>
Net make_seq_net(const PipelineConfig& cfg, std::size_t rows) {
    if constexpr (std::is_same_v<Net, nets::CnnNet>)
        return nets::CnnNet(rows, cfg.model.embed_dim, cfg.model.filter_widths, cfg.model.filters_per_width,
                            cfg.model.dropout);
    else
        return nets::LstmNet(rows, cfg.model.embed_dim, cfg.model.hidden_dim);
}

void check_inputs(std::span<const TokenizedDoc> docs, std::span<const Label> labels, std::string_view what) {
    if (docs.size() != labels.size())
        throw DataError(fmt::format("{} set has {} documents but {} labels", what, docs.size(), labels.size()));
}

ModelSpec train_spec(const PipelineConfig& cfg) {
    ModelSpec s = cfg.model;
    s.seed = derive_seed(cfg.seed, kStreamTrain);
    return s;
}

template <class Net>
FitResult fit_sequence(const PipelineConfig& cfg, std::span<const TokenizedDoc> train_docs,
                       std::span<const Label> train_labels, std::span<const TokenizedDoc> test_docs,
                       std::span<const Label> test_labels, const EpochCallback& on_epoch) {
    EmbeddingTable table;
    if (cfg.pretrain_embeddings) {
        Word2VecConfig w = cfg.word2vec;
        w.dim = cfg.model.embed_dim;
        w.seed = derive_seed(cfg.seed, kStreamWord2Vec);
        table = train_word2vec(train_docs, w);
    } else {
        table = EmbeddingTable(build_embedding_vocab(train_docs, cfg.word2vec.max_vocab), cfg.model.embed_dim);
    }
    const std::size_t max_len = cfg.max_len.value_or(default_max_len(train_docs));
    if (max_len < 1) throw UsageError("max_len must be >= 1");
    std::size_t widest = 1;
    for (auto w : cfg.model.filter_widths) widest = std::max(widest, w);
    if (std::is_same_v<Net, nets::CnnNet> && max_len < widest)
        throw UsageError(fmt::format("max_len {} is shorter than the widest filter ({})", max_len, widest));

    std::vector<EncodedSeq> train_x, test_x;
    for (const auto& d : train_docs) train_x.push_back(encode(d, table, max_len));
    for (const auto& d : test_docs) test_x.push_back(encode(d, table, max_len));

    Net net = make_seq_net<Net>(cfg, table.rows());
    Rng init_rng(derive_seed(cfg.seed, kStreamInit));
    net.init(init_rng, cfg.pretrain_embeddings ? &table : nullptr);
    auto report = train_net(net, train_spec(cfg), std::span<const EncodedSeq>(train_x), train_labels,
                            std::span<const EncodedSeq>(test_x), test_labels, on_epoch);
    // The table only maps words to rows from here on; the trained vectors
    // live in the network.
    EmbeddingTable words(table_words(table), 1);
    return {std::make_unique<SeqClassifier<Net>>(cfg, std::move(words), max_len, std::move(net)), std::move(report)};
}

} // namespace

FitResult fit_pipeline(const PipelineConfig& cfg, std::span<const TokenizedDoc> train_docs,
                       std::span<const Label> train_labels, std::span<const TokenizedDoc> test_docs,
                       std::span<const Label> test_labels, const EpochCallback& on_epoch) {
    check_inputs(train_docs, train_labels, "training");
    check_inputs(test_docs, test_labels, "test");
    if (train_docs.empty()) throw DataError("empty training set");
    if (is_neural(cfg.kind)) cfg.model.validate();

    if (cfg.kind == ClassifierKind::Cnn)
        return fit_sequence<nets::CnnNet>(cfg, train_docs, train_labels, test_docs, test_labels, on_epoch);
    if (cfg.kind == ClassifierKind::Lstm)
        return fit_sequence<nets::LstmNet>(cfg, train_docs, train_labels, test_docs, test_labels, on_epoch);

    auto vocab = NgramVocab::fit(train_docs, cfg.ngram, cfg.min_df);
    switch (cfg.kind) {
    case ClassifierKind::NaiveBayes: {
        auto nb = NaiveBayes::fit(count_transform_all(train_docs, vocab), train_labels);
        return {std::make_unique<NbClassifier>(cfg, std::move(vocab), std::move(nb)), std::nullopt};
    }
    case ClassifierKind::Knn: {
        auto knn = Knn::fit(tfidf_transform_all(train_docs, vocab), train_labels, cfg.knn_k);
        return {std::make_unique<KnnClassifier>(cfg, std::move(vocab), std::move(knn)), std::nullopt};
    }
    case ClassifierKind::Svm: {
        SvmConfig s = cfg.svm;
        s.seed = derive_seed(cfg.seed, kStreamSvm);
        auto svm = LinearSvm::fit(tfidf_transform_all(train_docs, vocab), train_labels, s);
        return {std::make_unique<SvmClassifier>(cfg, std::move(vocab), std::move(svm)), std::nullopt};
    }
    case ClassifierKind::Mlp: {
        const auto train_x = tfidf_transform_all(train_docs, vocab);
        const auto test_x = tfidf_transform_all(test_docs, vocab);
        auto standardizer = Standardizer::fit(train_x);
        auto model = MlpClassifier::build(cfg, std::move(vocab), std::move(standardizer));
        auto& net = static_cast<MlpClassifier&>(*model).net();
        Rng init_rng(derive_seed(cfg.seed, kStreamInit));
        net.init(init_rng);
        auto report = train_net(net, train_spec(cfg), std::span<const SparseVector>(train_x), train_labels,
                                std::span<const SparseVector>(test_x), test_labels, on_epoch);
        return {std::move(model), std::move(report)};
    }
    default: break;
    }
    throw UsageError("unsupported classifier");
}

std::unique_ptr<TextClassifier> classifier_from_json(const nlohmann::json& j) {
    if (j.value("format_version", 0) != kFormatVersion)
        throw DataError(fmt::format("unsupported model format_version {}", j.value("format_version", 0)));
    const auto cfg = PipelineConfig::from_json(j.at("config"));
    const auto kind = parse_classifier_kind(j.at("kind").get<std::string>());
    if (kind != cfg.kind) throw DataError("model kind tag does not match its configuration");
    const auto& f = j.at("featurizer");
    const auto& m = j.at("model");

    std::unique_ptr<TextClassifier> out;
    if (uses_sequences(kind)) {
        EmbeddingTable table(f.at("words").get<std::vector<std::string>>(), 1);
        const auto max_len = f.at("max_len").get<std::size_t>();
        if (kind == ClassifierKind::Cnn) {
            auto net = make_seq_net<nets::CnnNet>(cfg, table.rows());
            auto c = std::make_unique<SeqClassifier<nets::CnnNet>>(cfg, std::move(table), max_len, std::move(net));
            const auto p = c->net().params();
            params_from_json(m.at("params"), p);
            out = std::move(c);
        } else {
            auto net = make_seq_net<nets::LstmNet>(cfg, table.rows());
            auto c = std::make_unique<SeqClassifier<nets::LstmNet>>(cfg, std::move(table), max_len, std::move(net));
            const auto p = c->net().params();
            params_from_json(m.at("params"), p);
            out = std::move(c);
        }
    } else {
        auto vocab = NgramVocab::from_json(f.at("vocab"));
        switch (kind) {
        case ClassifierKind::NaiveBayes:
            out = std::make_unique<NbClassifier>(cfg, std::move(vocab), NaiveBayes::from_json(m));
            break;
        case ClassifierKind::Knn: out = std::make_unique<KnnClassifier>(cfg, std::move(vocab), Knn::from_json(m)); break;
        case ClassifierKind::Svm:
            out = std::make_unique<SvmClassifier>(cfg, std::move(vocab), LinearSvm::from_json(m));
            break;
        default: {
            auto standardizer = Standardizer::from_json(f.at("standardizer"));
            if (standardizer.dim() != vocab.size()) throw DataError("standardizer does not match the vocabulary");
            out = MlpClassifier::build(cfg, std::move(vocab), std::move(standardizer));
            const auto p = static_cast<MlpClassifier&>(*out).net().params();
            params_from_json(m.at("params"), p);
        }
        }
    }
    if (out->vocab_hash() != j.at("vocab_hash").get<std::uint64_t>())
        throw DataError("model vocabulary hash does not match its featurizer");
    return out;
}

void save_classifier(const TextClassifier& model, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError(fmt::format("cannot write model file {}", path.string()));
    out << model.to_json().dump() << '\n';
    if (!out) throw DataError(fmt::format("failed writing model file {}", path.string()));
}

std::unique_ptr<TextClassifier> load_classifier(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(fmt::format("cannot open model file {}", path.string()));
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(fmt::format("model file {} is not valid JSON: {}", path.string(), e.what()));
    }
    try {
        return classifier_from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(fmt::format("model file {} is malformed: {}", path.string(), e.what()));
    }
}

} // namespace reviewguard
