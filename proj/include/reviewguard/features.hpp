#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "reviewguard/textprep.hpp"

namespace reviewguard {

// Inclusive n-gram length range, 1 <= lo <= hi <= 3.
struct NgramRange {
    int lo = 1;
    int hi = 1;

    void validate() const;
    std::string name() const; // "unigram", "bigram", "unigram+bigram", ...
    bool operator==(const NgramRange&) const = default;
};

// Parses ranges ("1-3") and contiguous lists ("2,3", "unigram", "uni+bi+tri").
NgramRange parse_ngram_range(std::string_view s);

struct SparseEntry {
    std::uint32_t index;
    double value;

    bool operator==(const SparseEntry&) const = default;
};

// Sorted by strictly increasing index, all indices < dim.
struct SparseVector {
    std::size_t dim = 0;
    std::vector<SparseEntry> entries;

    double squared_norm() const;
    double norm() const;
    bool empty() const { return entries.empty(); }
};

double dot(const SparseVector& a, const SparseVector& b);
std::vector<double> to_dense(const SparseVector& v);

// Contiguous token windows joined by a single space, in document order.
std::vector<std::string> extract_ngrams(std::span<const std::string> tokens, NgramRange range);

class NgramVocab {
public:
    NgramVocab() = default;

    // Indices follow lexicographic gram order. Throws on empty `docs`.
    static NgramVocab fit(std::span<const TokenizedDoc> docs, NgramRange range, std::size_t min_df = 1);

    std::optional<std::uint32_t> index(std::string_view gram) const;
    std::size_t size() const { return grams_.size(); }
    const std::string& gram(std::size_t i) const { return grams_[i]; }
    std::size_t df(std::size_t i) const { return df_[i]; }
    std::size_t doc_count() const { return doc_count_; }
    NgramRange range() const { return range_; }

    // ln((1 + N) / (1 + df)) + 1
    double idf(std::size_t i) const { return idf_[i]; }

    nlohmann::json to_json() const;
    static NgramVocab from_json(const nlohmann::json& j);
    std::uint64_t hash() const;

private:
    void rebuild_index();

    NgramRange range_;
    std::size_t doc_count_ = 0;
    std::vector<std::string> grams_;
    std::vector<std::size_t> df_;
    std::vector<double> idf_;
    std::unordered_map<std::string, std::uint32_t> index_;
};

// Raw in-vocabulary n-gram counts (the representation naive Bayes consumes).
SparseVector count_transform(const TokenizedDoc& doc, const NgramVocab& vocab);

// tf * idf per entry, then L2-normalized. Out-of-vocabulary grams are ignored.
SparseVector tfidf_transform(const TokenizedDoc& doc, const NgramVocab& vocab);

std::vector<SparseVector> tfidf_transform_all(std::span<const TokenizedDoc> docs, const NgramVocab& vocab);
std::vector<SparseVector> count_transform_all(std::span<const TokenizedDoc> docs, const NgramVocab& vocab);

// Zero-mean / unit-variance column scaling (population variance).
class Standardizer {
public:
    static Standardizer fit(std::span<const SparseVector> rows);

    std::size_t dim() const { return mean_.size(); }
    const std::vector<double>& mean() const { return mean_; }
    const std::vector<double>& stdev() const { return stdev_; }
    // stdev, or 1 for constant columns
    double scale(std::size_t j) const { return stdev_[j] > 0.0 ? stdev_[j] : 1.0; }

    std::vector<double> transform(const SparseVector& v) const;

    nlohmann::json to_json() const;
    static Standardizer from_json(const nlohmann::json& j);

private:
    std::vector<double> mean_;
    std::vector<double> stdev_;
};

} // namespace reviewguard
