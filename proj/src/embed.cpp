#include "reviewguard/embed.hpp"

#include "reviewguard/errors.hpp"
#include "reviewguard/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/core.h>

namespace reviewguard {

EmbeddingTable::EmbeddingTable(std::vector<std::string> words, std::size_t dim) : dim_(dim) {
    if (dim == 0) throw UsageError("embedding dimension must be >= 1");
    words_.reserve(words.size() + 2);
    words_.emplace_back(kPadToken);
    words_.emplace_back(kUnkToken);
    for (auto& w : words) words_.push_back(std::move(w));
    for (std::size_t i = 0; i < words_.size(); ++i) {
        if (!index_.emplace(words_[i], static_cast<std::uint32_t>(i)).second)
            throw DataError(fmt::format("duplicate embedding word '{}'", words_[i]));
    }
    vectors_.assign(words_.size() * dim_, 0.0);
}

std::uint32_t EmbeddingTable::lookup(std::string_view token) const {
    const auto it = index_.find(std::string(token));
    return it == index_.end() || it->second == kPad ? kUnk : it->second;
}

void EmbeddingTable::save_text(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError(fmt::format("cannot write {}", path.string()));
    out << rows() << ' ' << dim_ << '\n';
    for (std::size_t r = 0; r < rows(); ++r) {
        out << words_[r];
        for (double v : row(r)) out << ' ' << fmt::format("{}", v);
        out << '\n';
    }
}

EmbeddingTable EmbeddingTable::load_text(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError(fmt::format("cannot open {}", path.string()));
    std::size_t n = 0, dim = 0;
    if (!(in >> n >> dim) || dim == 0) throw DataError(fmt::format("{}: bad header", path.string()));
    std::vector<std::string> words;
    std::vector<std::vector<double>> vecs;
    for (std::size_t r = 0; r < n; ++r) {
        std::string w;
        std::vector<double> v(dim);
        if (!(in >> w)) throw DataError(fmt::format("{}: expected {} rows", path.string(), n));
        for (auto& x : v) {
            if (!(in >> x)) throw DataError(fmt::format("{}: row '{}' is short", path.string(), w));
        }
        words.push_back(std::move(w));
        vecs.push_back(std::move(v));
    }
    std::vector<std::string> plain;
    std::vector<const std::vector<double>*> plain_vecs;
    const std::vector<double>* unk = nullptr;
    for (std::size_t i = 0; i < words.size(); ++i) {
        if (words[i] == kPadToken) continue;
        if (words[i] == kUnkToken) {
            unk = &vecs[i];
            continue;
        }
        plain.push_back(words[i]);
        plain_vecs.push_back(&vecs[i]);
    }
    EmbeddingTable t(std::move(plain), dim);
    if (unk) std::copy(unk->begin(), unk->end(), t.row(kUnk).begin());
    for (std::size_t i = 0; i < plain_vecs.size(); ++i) {
        std::copy(plain_vecs[i]->begin(), plain_vecs[i]->end(), t.row(i + 2).begin());
    }
    return t;
}

nlohmann::json EmbeddingTable::to_json() const {
    nlohmann::json vecs = nlohmann::json::array();
    for (std::size_t r = 0; r < rows(); ++r) vecs.push_back(std::vector<double>(row(r).begin(), row(r).end()));
    return {{"format_version", 1}, {"kind", "embedding"}, {"dim", dim_}, {"words", words_}, {"vectors", std::move(vecs)}};
}

EmbeddingTable EmbeddingTable::from_json(const nlohmann::json& j) {
    if (j.value("kind", "") != "embedding") throw DataError("not an embedding document");
    const auto dim = j.at("dim").get<std::size_t>();
    auto words = j.at("words").get<std::vector<std::string>>();
    const auto& vecs = j.at("vectors");
    if (words.size() < 2 || words[0] != kPadToken || words[1] != kUnkToken || vecs.size() != words.size())
        throw DataError("embedding document must list <pad> and <unk> first and one vector per word");
    EmbeddingTable t(std::vector<std::string>(words.begin() + 2, words.end()), dim);
    for (std::size_t r = 0; r < words.size(); ++r) {
        const auto v = vecs[r].get<std::vector<double>>();
        if (v.size() != dim) throw DataError("embedding vector has the wrong dimension");
        if (r != kPad) std::copy(v.begin(), v.end(), t.row(r).begin());
    }
    return t;
}

void EmbeddingTable::save(const std::filesystem::path& path) const {
    if (path.extension() == ".json") {
        std::ofstream out(path, std::ios::trunc);
        if (!out) throw DataError(fmt::format("cannot write {}", path.string()));
        out << to_json().dump() << '\n';
    } else {
        save_text(path);
    }
}

EmbeddingTable EmbeddingTable::load(const std::filesystem::path& path) {
    if (path.extension() == ".json") {
        std::ifstream in(path);
        if (!in) throw DataError(fmt::format("cannot open {}", path.string()));
        return from_json(nlohmann::json::parse(in));
    }
    return load_text(path);
}

std::vector<std::pair<std::uint32_t, std::uint32_t>> skipgram_pairs(std::span<const std::uint32_t> seq,
                                                                    std::size_t window) {
    std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
    auto usable = [](std::uint32_t r) { return r != EmbeddingTable::kPad && r != EmbeddingTable::kUnk; };
    for (std::size_t i = 0; i < seq.size(); ++i) {
        if (!usable(seq[i])) continue;
        const std::size_t lo = i > window ? i - window : 0;
        const std::size_t hi = std::min(seq.size() - 1, i + window);
        for (std::size_t j = lo; j <= hi; ++j) {
            if (j != i && usable(seq[j])) pairs.emplace_back(seq[i], seq[j]);
        }
    }
    return pairs;
}

std::vector<std::string> build_embedding_vocab(std::span<const TokenizedDoc> docs, std::size_t max_vocab) {
    std::map<std::string, std::size_t> freq;
    for (const auto& d : docs)
        for (const auto& t : d.tokens) ++freq[t];
    std::vector<std::pair<std::string, std::size_t>> items(freq.begin(), freq.end());
    // map order is lexicographic; stable sort keeps it for equal counts
    std::stable_sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    if (items.size() > max_vocab) items.resize(max_vocab);
    std::vector<std::string> words;
    words.reserve(items.size());
    for (auto& [w, c] : items) words.push_back(std::move(w));
    return words;
}

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// -log(sigmoid(x)) without overflow.
double neg_log_sigmoid(double x) { return x > 0 ? std::log1p(std::exp(-x)) : -x + std::log1p(std::exp(x)); }

class NoiseSampler {
public:
    NoiseSampler(const std::vector<std::size_t>& counts) {
        cumulative_.resize(counts.size(), 0.0);
        double acc = 0.0;
        for (std::size_t i = 0; i < counts.size(); ++i) {
            acc += counts[i] > 0 ? std::pow(static_cast<double>(counts[i]), 0.75) : 0.0;
            cumulative_[i] = acc;
        }
        total_ = acc;
    }

    std::uint32_t sample(Rng& rng) const {
        const double u = rng.uniform() * total_;
        const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
        return static_cast<std::uint32_t>(std::min<std::size_t>(it - cumulative_.begin(), cumulative_.size() - 1));
    }

private:
    std::vector<double> cumulative_;
    double total_ = 0.0;
};

} // namespace

EmbeddingTable train_word2vec(std::span<const TokenizedDoc> docs, const Word2VecConfig& cfg, Word2VecStats* stats) {
    if (docs.empty()) throw DataError("word2vec needs at least one document");
    if (cfg.dim == 0 || cfg.window == 0 || cfg.epochs == 0) throw UsageError("word2vec dim, window and epochs must be >= 1");

    EmbeddingTable table(build_embedding_vocab(docs, cfg.max_vocab), cfg.dim);
    const std::size_t rows = table.rows();
    const std::size_t d = cfg.dim;

    std::vector<std::vector<std::uint32_t>> seqs;
    seqs.reserve(docs.size());
    std::vector<std::size_t> counts(rows, 0);
    for (const auto& doc : docs) {
        std::vector<std::uint32_t> s;
        s.reserve(doc.tokens.size());
        for (const auto& t : doc.tokens) {
            const auto r = table.lookup(t);
            s.push_back(r);
            if (r != EmbeddingTable::kUnk) ++counts[r];
        }
        seqs.push_back(std::move(s));
    }
    const std::size_t total_tokens = [&] {
        std::size_t n = 0;
        for (auto c : counts) n += c;
        return n;
    }();

    Rng rng(derive_seed(cfg.seed, 0x77327663));
    auto& in = table.data();
    for (std::size_t r = 2; r < rows; ++r) {
        for (std::size_t k = 0; k < d; ++k) in[r * d + k] = (rng.uniform() - 0.5) / static_cast<double>(d);
    }
    std::vector<double> out(rows * d, 0.0);
    const NoiseSampler noise(counts);

    // Pair count is fixed per epoch without subsampling; used for lr decay.
    std::size_t pairs_per_epoch = 0;
    for (const auto& s : seqs) pairs_per_epoch += skipgram_pairs(s, cfg.window).size();
    const double total_pairs = static_cast<double>(std::max<std::size_t>(1, pairs_per_epoch * cfg.epochs));

    if (stats) {
        stats->epoch_mean_loss.clear();
        stats->pairs_per_epoch = pairs_per_epoch;
    }

    std::vector<double> grad_in(d);
    std::size_t processed = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        double loss_sum = 0.0;
        std::size_t pair_count = 0;
        for (const auto& seq : seqs) {
            std::vector<std::uint32_t> kept;
            std::span<const std::uint32_t> view = seq;
            if (cfg.subsample > 0.0) {
                for (auto r : seq) {
                    if (r == EmbeddingTable::kUnk) continue;
                    const double f = static_cast<double>(counts[r]) / static_cast<double>(total_tokens);
                    const double keep = (std::sqrt(f / cfg.subsample) + 1.0) * cfg.subsample / f;
                    if (rng.uniform() < keep) kept.push_back(r);
                }
                view = kept;
            }
            for (const auto& [center, context] : skipgram_pairs(view, cfg.window)) {
                const double lr = cfg.lr * std::max(1e-4, 1.0 - static_cast<double>(processed) / total_pairs);
                ++processed;
                ++pair_count;
                double* v = in.data() + center * d;
                std::fill(grad_in.begin(), grad_in.end(), 0.0);
                for (std::size_t n = 0; n <= cfg.negatives; ++n) {
                    std::uint32_t target = context;
                    double label = 1.0;
                    if (n > 0) {
                        target = noise.sample(rng);
                        if (target == context) continue;
                        label = 0.0;
                    }
                    double* u = out.data() + target * d;
                    double score = 0.0;
                    for (std::size_t k = 0; k < d; ++k) score += u[k] * v[k];
                    loss_sum += label > 0 ? neg_log_sigmoid(score) : neg_log_sigmoid(-score);
                    const double g = (label - sigmoid(score)) * lr;
                    for (std::size_t k = 0; k < d; ++k) {
                        grad_in[k] += g * u[k];
                        u[k] += g * v[k];
                    }
                }
                for (std::size_t k = 0; k < d; ++k) v[k] += grad_in[k];
            }
        }
        if (stats) stats->epoch_mean_loss.push_back(pair_count ? loss_sum / static_cast<double>(pair_count) : 0.0);
    }
    for (double x : in) {
        if (!std::isfinite(x)) throw NumericError("word2vec produced a non-finite vector");
    }
    return table;
}

EncodedSeq encode(const TokenizedDoc& doc, const EmbeddingTable& table, std::size_t max_len) {
    if (max_len == 0) throw UsageError("max_len must be >= 1");
    EncodedSeq s;
    s.true_len = std::min(max_len, doc.tokens.size());
    s.indices.assign(max_len, EmbeddingTable::kPad);
    for (std::size_t i = 0; i < s.true_len; ++i) s.indices[i] = table.lookup(doc.tokens[i]);
    return s;
}

std::size_t default_max_len(std::span<const TokenizedDoc> docs, std::size_t cap, std::size_t floor) {
    if (docs.empty()) return floor;
    std::vector<std::size_t> lens;
    lens.reserve(docs.size());
    for (const auto& d : docs) lens.push_back(d.tokens.size());
    std::sort(lens.begin(), lens.end());
    const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(lens.size())));
    const std::size_t p95 = lens[std::max<std::size_t>(rank, 1) - 1];
    return std::clamp(p95, floor, cap);
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        ab += a[k] * b[k];
        aa += a[k] * a[k];
        bb += b[k] * b[k];
    }
    if (aa == 0.0 || bb == 0.0) return 0.0;
    return ab / std::sqrt(aa * bb);
}

} // namespace reviewguard
