#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "reviewguard/corpus.hpp"

namespace reviewguard {

struct TokenizedDoc {
    std::string id;
    std::vector<std::string> tokens;

    bool operator==(const TokenizedDoc&) const = default;
};

struct PrepConfig {
    std::unordered_set<std::string> stopwords;
    std::string punctuation;
    bool stem = true;
    std::size_t min_token_len = 1;
};

// The bundled English stopword list, version-pinned with the build.
const std::vector<std::string>& default_stopwords();
// One word per line; blank lines and '#' comments are skipped.
std::vector<std::string> load_stopwords(const std::filesystem::path& path);

// Bundled stopwords, ASCII punctuation, Porter stemming, min length 1.
PrepConfig default_prep_config();

// Splits on every character outside [A-Za-z0-9]; bytes >= 0x80 separate too.
std::vector<std::string> tokenize(std::string_view text);

// Tokenize, lowercase, strip punctuation, drop stopwords, stem; in that order.
// Digit-only tokens are dropped. Stopword membership is tested before stemming.
TokenizedDoc preprocess(std::string_view text, const PrepConfig& cfg, std::string id = {});

std::vector<TokenizedDoc> preprocess_corpus(const Corpus& corpus, const PrepConfig& cfg);

// Original Porter (1980) stemmer, reference-implementation variant.
// Input must be lowercase ASCII letters; words of length <= 2 are returned as is.
std::string porter_stem(std::string_view word);

std::string join_tokens(const std::vector<std::string>& tokens);

} // namespace reviewguard
