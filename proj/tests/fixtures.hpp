#pragma once

// Synthetic two-class review sets. Spam documents draw some tokens from a
// spam-only vocabulary, ham documents from a ham-only one, and the rest
// from a shared pool. Every word is a nonsense form ending in 'k', which
// survives tokenizing, stopword removal and stemming unchanged.

#include <string>
#include <unordered_map>
#include <vector>

#include "reviewguard/corpus.hpp"
#include "reviewguard/rng.hpp"
#include "reviewguard/textprep.hpp"

namespace rgtest {

inline std::vector<std::string> nonsense_words(const std::string& prefix) {
    static const std::string letters = "bcdfgmnprt";
    std::vector<std::string> out;
    for (char a : letters)
        for (char b : letters) out.push_back(prefix + a + b + "k");
    return out;
}

struct SyntheticSet {
    std::vector<reviewguard::TokenizedDoc> docs;
    std::vector<reviewguard::Label> labels;
    std::vector<std::string> texts;
};

// `signal` is the chance that a token is class-specific; `flip` the chance
// that the recorded label is the wrong one.
inline SyntheticSet synthetic_set(std::size_t n, std::uint64_t seed, double signal = 0.35, double flip = 0.0,
                                  const std::string& id_prefix = "syn") {
    using namespace reviewguard;
    static const auto spam = nonsense_words("sp");
    static const auto ham = nonsense_words("hm");
    static const auto shared = nonsense_words("cm");
    Rng rng(seed);
    SyntheticSet out;
    for (std::size_t i = 0; i < n; ++i) {
        const Label truth = i % 2 == 0 ? Label::Spam : Label::Ham;
        const auto& own = truth == Label::Spam ? spam : ham;
        TokenizedDoc d;
        d.id = id_prefix + ":" + std::to_string(i);
        const std::size_t len = 8 + rng.below(13);
        for (std::size_t t = 0; t < len; ++t)
            d.tokens.push_back(rng.bernoulli(signal) ? own[rng.below(own.size())] : shared[rng.below(shared.size())]);
        out.texts.push_back(join_tokens(d.tokens));
        out.docs.push_back(std::move(d));
        const bool flipped = flip > 0.0 && rng.bernoulli(flip);
        out.labels.push_back(flipped ? (truth == Label::Spam ? Label::Ham : Label::Spam) : truth);
    }
    return out;
}

// Linearly separable pool: the label is the sign of (#spam words - #ham
// words). A `margin_share` of the documents sit one word from the boundary.
struct MarginPool {
    std::vector<reviewguard::ReviewRecord> records;
    std::unordered_map<std::string, reviewguard::Label> truth;
};

inline MarginPool margin_pool(std::size_t n, std::uint64_t seed, double margin_share, const std::string& id_prefix) {
    using namespace reviewguard;
    static const auto spam = nonsense_words("sp");
    static const auto ham = nonsense_words("hm");
    static const auto shared = nonsense_words("cm");
    Rng rng(seed);
    MarginPool out;
    for (std::size_t i = 0; i < n; ++i) {
        const Label truth = i % 2 == 0 ? Label::Spam : Label::Ham;
        const auto& own = truth == Label::Spam ? spam : ham;
        const auto& other = truth == Label::Spam ? ham : spam;
        std::size_t n_own, n_other;
        if (rng.bernoulli(margin_share)) {
            n_other = 2 + rng.below(4);
            n_own = n_other + 1;
        } else {
            n_own = 4 + rng.below(6);
            n_other = rng.below(2);
        }
        std::vector<std::string> words;
        for (std::size_t k = 0; k < n_own; ++k) words.push_back(own[rng.below(own.size())]);
        for (std::size_t k = 0; k < n_other; ++k) words.push_back(other[rng.below(other.size())]);
        for (std::size_t k = 0, m = 4 + rng.below(8); k < m; ++k) words.push_back(shared[rng.below(shared.size())]);
        rng.shuffle(std::span(words));
        ReviewRecord r;
        r.id = id_prefix + ":" + std::to_string(i);
        r.text = join_tokens(words);
        r.label = truth;
        out.truth.emplace(r.id, truth);
        out.records.push_back(std::move(r));
    }
    return out;
}

inline reviewguard::Corpus to_corpus(const SyntheticSet& s, const std::string& name, bool with_labels = true) {
    reviewguard::Corpus c(name);
    for (std::size_t i = 0; i < s.docs.size(); ++i) {
        reviewguard::ReviewRecord r;
        r.id = s.docs[i].id;
        r.text = s.texts[i];
        if (with_labels) r.label = s.labels[i];
        c.add(std::move(r));
    }
    return c;
}

} // namespace rgtest
