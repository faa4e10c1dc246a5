#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "reviewguard/textprep.hpp"

namespace reviewguard {

// Row-major |V| x d table. Rows 0 and 1 are reserved for padding and
// unknown tokens; the padding row is all-zero.
class EmbeddingTable {
public:
    static constexpr std::uint32_t kPad = 0;
    static constexpr std::uint32_t kUnk = 1;
    static constexpr std::string_view kPadToken = "<pad>";
    static constexpr std::string_view kUnkToken = "<unk>";

    EmbeddingTable() = default;
    // Reserved rows plus `words` in order; every vector zero.
    EmbeddingTable(std::vector<std::string> words, std::size_t dim);

    std::size_t dim() const { return dim_; }
    std::size_t rows() const { return words_.size(); }
    const std::string& word(std::size_t row) const { return words_[row]; }
    std::uint32_t lookup(std::string_view token) const;

    std::span<const double> row(std::size_t r) const { return {vectors_.data() + r * dim_, dim_}; }
    std::span<double> row(std::size_t r) { return {vectors_.data() + r * dim_, dim_}; }
    std::vector<double>& data() { return vectors_; }
    const std::vector<double>& data() const { return vectors_; }

    // "|V| d" header, then "word v1 ... vd" per row.
    void save_text(const std::filesystem::path& path) const;
    static EmbeddingTable load_text(const std::filesystem::path& path);
    nlohmann::json to_json() const;
    static EmbeddingTable from_json(const nlohmann::json& j);
    // Picks the format by extension (.json -> JSON, anything else text).
    void save(const std::filesystem::path& path) const;
    static EmbeddingTable load(const std::filesystem::path& path);

    bool operator==(const EmbeddingTable& o) const { return dim_ == o.dim_ && words_ == o.words_ && vectors_ == o.vectors_; }

private:
    std::size_t dim_ = 0;
    std::vector<std::string> words_;
    std::unordered_map<std::string, std::uint32_t> index_;
    std::vector<double> vectors_;
};

struct Word2VecConfig {
    std::size_t dim = 100;
    std::size_t window = 5;
    std::size_t negatives = 5;
    std::size_t epochs = 5;
    double lr = 0.025;
    std::uint64_t seed = 1;
    std::size_t max_vocab = 30000;
    // 0 disables frequent-word subsampling.
    double subsample = 0.0;
};

struct Word2VecStats {
    std::vector<double> epoch_mean_loss;
    std::size_t pairs_per_epoch = 0;
};

// Every (center, context) row pair with |i - j| <= window, i != j, in
// center-major order. Pad and unk positions produce no pairs.
std::vector<std::pair<std::uint32_t, std::uint32_t>> skipgram_pairs(std::span<const std::uint32_t> seq, std::size_t window);

// The `max_vocab` most frequent tokens, ties broken lexicographically.
std::vector<std::string> build_embedding_vocab(std::span<const TokenizedDoc> docs, std::size_t max_vocab);

// Skip-gram with negative sampling from the unigram^0.75 distribution and a
// linearly decaying learning rate. Single-threaded and bitwise deterministic.
EmbeddingTable train_word2vec(std::span<const TokenizedDoc> docs, const Word2VecConfig& cfg,
                              Word2VecStats* stats = nullptr);

struct EncodedSeq {
    std::vector<std::uint32_t> indices;
    std::size_t true_len = 0;

    bool operator==(const EncodedSeq&) const = default;
};

// Prefix of at most max_len tokens, unknown -> unk, right-padded with pad.
EncodedSeq encode(const TokenizedDoc& doc, const EmbeddingTable& table, std::size_t max_len);

// 95th-percentile (nearest rank) token count, clamped to [floor, cap].
std::size_t default_max_len(std::span<const TokenizedDoc> docs, std::size_t cap = 400, std::size_t floor = 5);

double cosine_similarity(std::span<const double> a, std::span<const double> b);

} // namespace reviewguard
