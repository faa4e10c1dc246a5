#include "reviewguard/features.hpp"

#include "reviewguard/errors.hpp"
#include "reviewguard/rng.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include <fmt/core.h>

namespace reviewguard {

void NgramRange::validate() const {
    if (lo < 1 || hi > 3 || lo > hi) throw UsageError(fmt::format("invalid n-gram range ({}, {})", lo, hi));
}

std::string NgramRange::name() const {
    static constexpr const char* names[] = {"", "unigram", "bigram", "trigram"};
    std::string out;
    for (int n = lo; n <= hi; ++n) {
        if (!out.empty()) out += '+';
        out += names[n];
    }
    return out;
}

NgramRange parse_ngram_range(std::string_view s) {
    auto order = [](std::string_view w) -> int {
        if (w == "1" || w.starts_with("uni")) return 1;
        if (w == "2" || w.starts_with("bi")) return 2;
        if (w == "3" || w.starts_with("tri")) return 3;
        throw UsageError(fmt::format("unknown n-gram order '{}'", w));
    };
    std::vector<int> parts;
    std::size_t start = 0;
    while (start <= s.size()) {
        const auto end = s.find_first_of("-,+:", start);
        parts.push_back(order(s.substr(start, end == std::string_view::npos ? s.npos : end - start)));
        if (end == std::string_view::npos) break;
        start = end + 1;
    }
    NgramRange r{*std::min_element(parts.begin(), parts.end()), *std::max_element(parts.begin(), parts.end())};
    // '-' and ':' denote a range; ',' and '+' list orders, which must be contiguous
    if (parts.size() > 2 || s.find_first_of(",+") != std::string_view::npos) {
        for (int n = r.lo; n <= r.hi; ++n) {
            if (std::find(parts.begin(), parts.end(), n) == parts.end())
                throw UsageError(fmt::format("n-gram combination '{}' is not a contiguous range", s));
        }
    }
    r.validate();
    return r;
}

double SparseVector::squared_norm() const {
    double s = 0.0;
    for (const auto& e : entries) s += e.value * e.value;
    return s;
}

double SparseVector::norm() const { return std::sqrt(squared_norm()); }

double dot(const SparseVector& a, const SparseVector& b) {
    double s = 0.0;
    auto i = a.entries.begin();
    auto j = b.entries.begin();
    while (i != a.entries.end() && j != b.entries.end()) {
        if (i->index < j->index) ++i;
        else if (j->index < i->index) ++j;
        else {
            s += i->value * j->value;
            ++i;
            ++j;
        }
    }
    return s;
}

std::vector<double> to_dense(const SparseVector& v) {
    std::vector<double> out(v.dim, 0.0);
    for (const auto& e : v.entries) out[e.index] = e.value;
    return out;
}

std::vector<std::string> extract_ngrams(std::span<const std::string> tokens, NgramRange range) {
    range.validate();
    std::vector<std::string> grams;
    for (int n = range.lo; n <= range.hi; ++n) {
        const auto un = static_cast<std::size_t>(n);
        for (std::size_t i = 0; i + un <= tokens.size(); ++i) {
            std::string g = tokens[i];
            for (std::size_t k = 1; k < un; ++k) {
                g += ' ';
                g += tokens[i + k];
            }
            grams.push_back(std::move(g));
        }
    }
    return grams;
}

NgramVocab NgramVocab::fit(std::span<const TokenizedDoc> docs, NgramRange range, std::size_t min_df) {
    if (docs.empty()) throw DataError("cannot fit a vocabulary on zero documents");
    range.validate();
    std::unordered_map<std::string, std::size_t> df;
    for (const auto& d : docs) {
        auto grams = extract_ngrams(d.tokens, range);
        std::sort(grams.begin(), grams.end());
        grams.erase(std::unique(grams.begin(), grams.end()), grams.end());
        for (auto& g : grams) ++df[std::move(g)];
    }
    NgramVocab v;
    v.range_ = range;
    v.doc_count_ = docs.size();
    for (auto& [g, c] : df) {
        if (c >= std::max<std::size_t>(min_df, 1)) v.grams_.push_back(g);
    }
    std::sort(v.grams_.begin(), v.grams_.end());
    v.df_.reserve(v.grams_.size());
    for (const auto& g : v.grams_) v.df_.push_back(df.at(g));
    v.rebuild_index();
    return v;
}

void NgramVocab::rebuild_index() {
    index_.clear();
    index_.reserve(grams_.size());
    idf_.resize(grams_.size());
    const double n1 = 1.0 + static_cast<double>(doc_count_);
    for (std::size_t i = 0; i < grams_.size(); ++i) {
        index_.emplace(grams_[i], static_cast<std::uint32_t>(i));
        idf_[i] = std::log(n1 / (1.0 + static_cast<double>(df_[i]))) + 1.0;
    }
}

std::optional<std::uint32_t> NgramVocab::index(std::string_view gram) const {
    const auto it = index_.find(std::string(gram));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

nlohmann::json NgramVocab::to_json() const {
    nlohmann::json entries = nlohmann::json::array();
    for (std::size_t i = 0; i < grams_.size(); ++i) {
        entries.push_back({{"gram", grams_[i]}, {"index", i}, {"df", df_[i]}});
    }
    return {{"format_version", 1},
            {"kind", "ngram_vocab"},
            {"n_range", {range_.lo, range_.hi}},
            {"doc_count", doc_count_},
            {"entries", std::move(entries)}};
}

NgramVocab NgramVocab::from_json(const nlohmann::json& j) {
    if (j.value("kind", "") != "ngram_vocab") throw DataError("not an n-gram vocabulary document");
    if (j.value("format_version", 0) != 1) throw DataError("unsupported vocabulary format version");
    NgramVocab v;
    v.range_ = {j.at("n_range").at(0).get<int>(), j.at("n_range").at(1).get<int>()};
    v.range_.validate();
    v.doc_count_ = j.at("doc_count").get<std::size_t>();
    const auto& entries = j.at("entries");
    v.grams_.resize(entries.size());
    v.df_.resize(entries.size());
    std::vector<bool> seen(entries.size(), false);
    for (const auto& e : entries) {
        const auto idx = e.at("index").get<std::size_t>();
        if (idx >= entries.size() || seen[idx]) throw DataError("vocabulary indices must be 0..n-1 without gaps");
        seen[idx] = true;
        v.grams_[idx] = e.at("gram").get<std::string>();
        v.df_[idx] = e.at("df").get<std::size_t>();
        if (v.df_[idx] < 1) throw DataError("vocabulary df must be >= 1");
    }
    v.rebuild_index();
    return v;
}

std::uint64_t NgramVocab::hash() const { return fnv1a(to_json().dump()); }

namespace {

std::vector<std::pair<std::uint32_t, double>> gram_counts(const TokenizedDoc& doc, const NgramVocab& vocab) {
    std::vector<std::uint32_t> ids;
    for (const auto& g : extract_ngrams(doc.tokens, vocab.range())) {
        if (auto i = vocab.index(g)) ids.push_back(*i);
    }
    std::sort(ids.begin(), ids.end());
    std::vector<std::pair<std::uint32_t, double>> counts;
    for (std::size_t i = 0; i < ids.size();) {
        std::size_t j = i;
        while (j < ids.size() && ids[j] == ids[i]) ++j;
        counts.emplace_back(ids[i], static_cast<double>(j - i));
        i = j;
    }
    return counts;
}

} // namespace

SparseVector count_transform(const TokenizedDoc& doc, const NgramVocab& vocab) {
    SparseVector v{vocab.size(), {}};
    for (const auto& [i, c] : gram_counts(doc, vocab)) v.entries.push_back({i, c});
    return v;
}

SparseVector tfidf_transform(const TokenizedDoc& doc, const NgramVocab& vocab) {
    SparseVector v{vocab.size(), {}};
    for (const auto& [i, c] : gram_counts(doc, vocab)) v.entries.push_back({i, c * vocab.idf(i)});
    const double n = v.norm();
    if (n > 0.0) {
        for (auto& e : v.entries) e.value /= n;
    }
    return v;
}

std::vector<SparseVector> tfidf_transform_all(std::span<const TokenizedDoc> docs, const NgramVocab& vocab) {
    std::vector<SparseVector> out(docs.size());
#pragma omp parallel for schedule(dynamic, 16)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(docs.size()); ++i) {
        out[static_cast<std::size_t>(i)] = tfidf_transform(docs[static_cast<std::size_t>(i)], vocab);
    }
    return out;
}

std::vector<SparseVector> count_transform_all(std::span<const TokenizedDoc> docs, const NgramVocab& vocab) {
    std::vector<SparseVector> out(docs.size());
#pragma omp parallel for schedule(dynamic, 16)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(docs.size()); ++i) {
        out[static_cast<std::size_t>(i)] = count_transform(docs[static_cast<std::size_t>(i)], vocab);
    }
    return out;
}

Standardizer Standardizer::fit(std::span<const SparseVector> rows) {
    if (rows.empty()) throw DataError("cannot fit a standardizer on zero rows");
    const std::size_t dim = rows.front().dim;
    const double n = static_cast<double>(rows.size());
    std::vector<double> sum(dim, 0.0);
    for (const auto& r : rows) {
        if (r.dim != dim) throw DataError("standardizer rows differ in dimension");
        for (const auto& e : r.entries) sum[e.index] += e.value;
    }
    Standardizer s;
    s.mean_.resize(dim);
    for (std::size_t j = 0; j < dim; ++j) s.mean_[j] = sum[j] / n;
    // Two-pass variance: implicit zeros contribute mean^2 each.
    std::vector<double> ss(dim, 0.0);
    std::vector<std::size_t> nnz(dim, 0);
    for (const auto& r : rows) {
        for (const auto& e : r.entries) {
            const double d = e.value - s.mean_[e.index];
            ss[e.index] += d * d;
            ++nnz[e.index];
        }
    }
    s.stdev_.resize(dim);
    for (std::size_t j = 0; j < dim; ++j) {
        const double zeros = n - static_cast<double>(nnz[j]);
        const double var = (ss[j] + zeros * s.mean_[j] * s.mean_[j]) / n;
        s.stdev_[j] = var > 0.0 ? std::sqrt(var) : 0.0;
        // All-equal columns must report exactly zero spread.
        if (s.stdev_[j] <= 1e-12 * std::max(1.0, std::abs(s.mean_[j]))) s.stdev_[j] = 0.0;
    }
    return s;
}

std::vector<double> Standardizer::transform(const SparseVector& v) const {
    if (v.dim != mean_.size())
        throw DataError(fmt::format("standardizer expects dimension {}, got {}", mean_.size(), v.dim));
    std::vector<double> out(mean_.size());
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = -mean_[j] / scale(j);
    for (const auto& e : v.entries) out[e.index] = (e.value - mean_[e.index]) / scale(e.index);
    return out;
}

nlohmann::json Standardizer::to_json() const {
    return {{"format_version", 1}, {"kind", "standardizer"}, {"mean", mean_}, {"stdev", stdev_}};
}

Standardizer Standardizer::from_json(const nlohmann::json& j) {
    if (j.value("kind", "") != "standardizer") throw DataError("not a standardizer document");
    Standardizer s;
    s.mean_ = j.at("mean").get<std::vector<double>>();
    s.stdev_ = j.at("stdev").get<std::vector<double>>();
    if (s.mean_.size() != s.stdev_.size()) throw DataError("standardizer mean/stdev size mismatch");
    return s;
}

} // namespace reviewguard
