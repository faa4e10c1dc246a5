#include "reviewguard/textprep.hpp"

#include "reviewguard/errors.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <fmt/core.h>

namespace reviewguard {

// Generated at build time from data/stopwords_en.txt.
extern const char* const kBundledStopwords;

namespace {

std::vector<std::string> parse_word_list(std::istream& in) {
    std::vector<std::string> words;
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) line.pop_back();
        const auto start = line.find_first_not_of(" \t");
        if (start == std::string::npos || line[start] == '#') continue;
        words.push_back(line.substr(start));
    }
    return words;
}

constexpr bool is_token_char(unsigned char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9');
}

bool all_digits(std::string_view s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return c >= '0' && c <= '9'; });
}

bool all_alpha(std::string_view s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return c >= 'a' && c <= 'z'; });
}

} // namespace

const std::vector<std::string>& default_stopwords() {
    static const std::vector<std::string> words = [] {
        std::istringstream in(kBundledStopwords);
        return parse_word_list(in);
    }();
    return words;
}

std::vector<std::string> load_stopwords(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError(fmt::format("cannot open stopword list {}", path.string()));
    return parse_word_list(in);
}

PrepConfig default_prep_config() {
    PrepConfig cfg;
    const auto& words = default_stopwords();
    cfg.stopwords.insert(words.begin(), words.end());
    cfg.punctuation = R"(!"#$%&'()*+,-./:;<=>?@[\]^_`{|}~)";
    return cfg;
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && !is_token_char(static_cast<unsigned char>(text[i]))) ++i;
        const std::size_t start = i;
        while (i < text.size() && is_token_char(static_cast<unsigned char>(text[i]))) ++i;
        if (i > start) tokens.emplace_back(text.substr(start, i - start));
    }
    return tokens;
}

TokenizedDoc preprocess(std::string_view text, const PrepConfig& cfg, std::string id) {
    if (cfg.min_token_len < 1) throw UsageError("min_token_len must be >= 1");
    TokenizedDoc doc{std::move(id), {}};
    for (auto& tok : tokenize(text)) {
        std::transform(tok.begin(), tok.end(), tok.begin(), [](unsigned char c) {
            return static_cast<char>(c >= 'A' && c <= 'Z' ? c - 'A' + 'a' : c);
        });
        if (!cfg.punctuation.empty()) {
            std::erase_if(tok, [&](char c) { return cfg.punctuation.find(c) != std::string::npos; });
        }
        if (tok.empty() || all_digits(tok) || tok.size() < cfg.min_token_len) continue;
        if (cfg.stopwords.contains(tok)) continue;
        if (cfg.stem && all_alpha(tok)) tok = porter_stem(tok);
        doc.tokens.push_back(std::move(tok));
    }
    return doc;
}

std::vector<TokenizedDoc> preprocess_corpus(const Corpus& corpus, const PrepConfig& cfg) {
    std::vector<TokenizedDoc> docs(corpus.size());
#pragma omp parallel for schedule(dynamic, 16)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(corpus.size()); ++i) {
        const auto& r = corpus[static_cast<std::size_t>(i)];
        docs[static_cast<std::size_t>(i)] = preprocess(r.text, cfg, r.id);
    }
    return docs;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
    std::string out;
    for (const auto& t : tokens) {
        if (!out.empty()) out += ' ';
        out += t;
    }
    return out;
}

} // namespace reviewguard
