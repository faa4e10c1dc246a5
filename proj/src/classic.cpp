#include "reviewguard/classic.hpp"

#include "reviewguard/errors.hpp"
#include "reviewguard/nnet/kernels.hpp"
#include "reviewguard/rng.hpp"
#include "reviewguard/split.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/core.h>

namespace reviewguard {

namespace {

void check_training_set(std::span<const SparseVector> rows, std::span<const Label> labels, bool both_classes) {
    if (rows.empty()) throw DataError("empty training set");
    if (rows.size() != labels.size()) throw DataError("feature rows and labels differ in count");
    for (const auto& r : rows)
        if (r.dim != rows[0].dim) throw DataError("training rows differ in dimension");
    if (both_classes) {
        const auto spam = std::count(labels.begin(), labels.end(), Label::Spam);
        if (spam == 0 || spam == static_cast<std::ptrdiff_t>(labels.size()))
            throw DataError("training set must contain both classes");
    }
}

void check_dim(const SparseVector& x, std::size_t dim) {
    if (x.dim != dim) throw DataError(fmt::format("model expects dimension {}, got {}", dim, x.dim));
}

SparseVector normalized(SparseVector v) {
    const double n = v.norm();
    if (n > 0.0)
        for (auto& e : v.entries) e.value /= n;
    return v;
}

nlohmann::json sparse_to_json(const SparseVector& v) {
    nlohmann::json idx = nlohmann::json::array(), val = nlohmann::json::array();
    for (const auto& e : v.entries) {
        idx.push_back(e.index);
        val.push_back(e.value);
    }
    return {{"indices", idx}, {"values", val}};
}

SparseVector sparse_from_json(const nlohmann::json& j, std::size_t dim) {
    SparseVector v{dim, {}};
    const auto& idx = j.at("indices");
    const auto& val = j.at("values");
    if (idx.size() != val.size()) throw DataError("sparse vector index/value count mismatch");
    for (std::size_t i = 0; i < idx.size(); ++i) v.entries.push_back({idx[i].get<std::uint32_t>(), val[i].get<double>()});
    return v;
}

void check_kind(const nlohmann::json& j, std::string_view kind) {
    if (j.value("kind", "") != kind) throw DataError(fmt::format("not a {} model document", kind));
    if (j.value("format_version", 0) != 1) throw DataError(fmt::format("unsupported {} format version", kind));
}

} // namespace

// ---------------------------------------------------------------- naive Bayes

NaiveBayes NaiveBayes::fit(std::span<const SparseVector> counts, std::span<const Label> labels, double alpha) {
    check_training_set(counts, labels, true);
    if (!(alpha > 0.0)) throw UsageError("naive Bayes smoothing must be > 0");
    const std::size_t dim = counts[0].dim;
    NaiveBayes m;
    m.alpha_ = alpha;
    std::array<std::vector<double>, kNumClasses> totals;
    std::array<double, kNumClasses> docs{};
    for (auto& t : totals) t.assign(dim, 0.0);
    for (std::size_t i = 0; i < counts.size(); ++i) {
        const int c = class_index(labels[i]);
        docs[c] += 1.0;
        for (const auto& e : counts[i].entries) totals[c][e.index] += e.value;
    }
    for (int c = 0; c < kNumClasses; ++c) {
        m.log_prior_[c] = std::log(docs[c] / static_cast<double>(counts.size()));
        const double mass = std::accumulate(totals[c].begin(), totals[c].end(), 0.0) + alpha * static_cast<double>(dim);
        m.log_likelihood_[c].resize(dim);
        for (std::size_t j = 0; j < dim; ++j) m.log_likelihood_[c][j] = std::log((totals[c][j] + alpha) / mass);
    }
    return m;
}

ClassProbs NaiveBayes::predict_proba(const SparseVector& counts) const {
    check_dim(counts, dim());
    std::array<double, kNumClasses> logp = log_prior_;
    for (int c = 0; c < kNumClasses; ++c)
        for (const auto& e : counts.entries) logp[c] += e.value * log_likelihood_[c][e.index];
    const double mx = std::max(logp[0], logp[1]);
    const double z = std::exp(logp[0] - mx) + std::exp(logp[1] - mx);
    return {std::exp(logp[0] - mx) / z, std::exp(logp[1] - mx) / z};
}

nlohmann::json NaiveBayes::to_json() const {
    return {{"format_version", 1},
            {"kind", "naive_bayes"},
            {"alpha", alpha_},
            {"log_prior", log_prior_},
            {"log_likelihood", log_likelihood_}};
}

NaiveBayes NaiveBayes::from_json(const nlohmann::json& j) {
    check_kind(j, "naive_bayes");
    NaiveBayes m;
    m.alpha_ = j.at("alpha").get<double>();
    m.log_prior_ = j.at("log_prior").get<std::array<double, kNumClasses>>();
    m.log_likelihood_ = j.at("log_likelihood").get<std::array<std::vector<double>, kNumClasses>>();
    if (m.log_likelihood_[0].size() != m.log_likelihood_[1].size()) throw DataError("naive Bayes class tables differ");
    return m;
}

// ------------------------------------------------------------------------ KNN

Knn Knn::fit(std::span<const SparseVector> rows, std::span<const Label> labels, std::size_t k) {
    check_training_set(rows, labels, false);
    if (k < 1 || k > rows.size())
        throw UsageError(fmt::format("k = {} must be in [1, {}] (the training size)", k, rows.size()));
    Knn m;
    m.k_ = k;
    m.dim_ = rows[0].dim;
    m.labels_.assign(labels.begin(), labels.end());
    m.rows_.reserve(rows.size());
    for (const auto& r : rows) m.rows_.push_back(normalized(r));
    return m;
}

std::vector<std::size_t> Knn::neighbors(const SparseVector& x) const {
    check_dim(x, dim_);
    const SparseVector q = normalized(x);
    std::vector<double> dense(dim_, 0.0);
    for (const auto& e : q.entries) dense[e.index] = e.value;
    std::vector<double> sim(rows_.size());
    nnet::kernels::sparse_dots(rows_, dense, sim);

    // Repeated selection: the most similar remaining point, taking the
    // lowest index among those within the tie tolerance of it.
    constexpr double kTie = 1e-12;
    std::vector<char> taken(rows_.size(), 0);
    std::vector<std::size_t> out;
    out.reserve(k_);
    for (std::size_t step = 0; step < k_; ++step) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < sim.size(); ++i)
            if (!taken[i]) best = std::max(best, sim[i]);
        for (std::size_t i = 0; i < sim.size(); ++i) {
            if (!taken[i] && sim[i] >= best - kTie) {
                taken[i] = 1;
                out.push_back(i);
                break;
            }
        }
    }
    return out;
}

ClassProbs Knn::predict_proba(const SparseVector& x) const {
    ClassProbs votes{0.0, 0.0};
    for (std::size_t i : neighbors(x)) votes[class_index(labels_[i])] += 1.0;
    votes[0] /= static_cast<double>(k_);
    votes[1] /= static_cast<double>(k_);
    return votes;
}

Label Knn::predict(const SparseVector& x) const { return argmax_label(predict_proba(x)); }

nlohmann::json Knn::to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : rows_) rows.push_back(sparse_to_json(r));
    nlohmann::json labels = nlohmann::json::array();
    for (Label l : labels_) labels.push_back(to_string(l));
    return {{"format_version", 1}, {"kind", "knn"}, {"k", k_}, {"dim", dim_}, {"rows", rows}, {"labels", labels}};
}

Knn Knn::from_json(const nlohmann::json& j) {
    check_kind(j, "knn");
    Knn m;
    m.k_ = j.at("k").get<std::size_t>();
    m.dim_ = j.at("dim").get<std::size_t>();
    for (const auto& r : j.at("rows")) m.rows_.push_back(sparse_from_json(r, m.dim_));
    for (const auto& l : j.at("labels")) m.labels_.push_back(parse_label(l.get<std::string>()));
    if (m.rows_.size() != m.labels_.size() || m.k_ < 1 || m.k_ > m.rows_.size())
        throw DataError("inconsistent KNN model document");
    return m;
}

// ------------------------------------------------------------------------ SVM

double PlattParams::p_spam(double s) const {
    const double z = a * s + b;
    return z >= 0 ? std::exp(-z) / (1.0 + std::exp(-z)) : 1.0 / (1.0 + std::exp(z));
}

PlattParams fit_platt(std::span<const double> scores, std::span<const Label> labels) {
    if (scores.size() != labels.size() || scores.empty()) throw DataError("Platt fit needs one label per score");
    double n_pos = 0.0, n_neg = 0.0;
    for (Label l : labels) (l == Label::Spam ? n_pos : n_neg) += 1.0;
    const double hi = (n_pos + 1.0) / (n_pos + 2.0);
    const double lo = 1.0 / (n_neg + 2.0);
    std::vector<double> t(labels.size());
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = labels[i] == Label::Spam ? hi : lo;

    auto objective = [&](double a, double b) {
        double f = 0.0;
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double z = scores[i] * a + b;
            f += z >= 0 ? t[i] * z + std::log1p(std::exp(-z)) : (t[i] - 1.0) * z + std::log1p(std::exp(z));
        }
        return f;
    };

    PlattParams p{0.0, std::log((n_neg + 1.0) / (n_pos + 1.0))};
    double fval = objective(p.a, p.b);
    constexpr double kSigma = 1e-12, kMinStep = 1e-10, kEps = 1e-5;
    for (int it = 0; it < 100; ++it) {
        double h11 = kSigma, h22 = kSigma, h21 = 0.0, g1 = 0.0, g2 = 0.0;
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double z = scores[i] * p.a + p.b;
            double pp, qq; // pp = P(spam), qq = 1 - pp
            if (z >= 0) {
                pp = std::exp(-z) / (1.0 + std::exp(-z));
                qq = 1.0 / (1.0 + std::exp(-z));
            } else {
                pp = 1.0 / (1.0 + std::exp(z));
                qq = std::exp(z) / (1.0 + std::exp(z));
            }
            const double d2 = pp * qq;
            h11 += scores[i] * scores[i] * d2;
            h22 += d2;
            h21 += scores[i] * d2;
            const double d1 = t[i] - pp;
            g1 += scores[i] * d1;
            g2 += d1;
        }
        if (std::abs(g1) < kEps && std::abs(g2) < kEps) break;
        const double det = h11 * h22 - h21 * h21;
        const double da = -(h22 * g1 - h21 * g2) / det;
        const double db = -(-h21 * g1 + h11 * g2) / det;
        const double gd = g1 * da + g2 * db;
        double step = 1.0;
        while (step >= kMinStep) {
            const double na = p.a + step * da, nb = p.b + step * db;
            const double nf = objective(na, nb);
            if (nf < fval + 1e-4 * step * gd) {
                p = {na, nb};
                fval = nf;
                break;
            }
            step /= 2.0;
        }
        if (step < kMinStep) break;
    }
    return p;
}

namespace {

double rms_norm(std::span<const SparseVector> rows) {
    double s = 0.0;
    for (const auto& r : rows) s += r.squared_norm();
    const double rms = std::sqrt(s / static_cast<double>(rows.size()));
    return rms > 0.0 ? rms : 1.0;
}

double sparse_dot(const SparseVector& x, const std::vector<double>& w) {
    double s = 0.0;
    for (const auto& e : x.entries) s += e.value * w[e.index];
    return s;
}

} // namespace

LinearSvm LinearSvm::train_raw(std::span<const SparseVector> rows, std::span<const Label> labels, double lambda,
                               std::size_t epochs, std::uint64_t seed) {
    const std::size_t n = rows.size();
    const std::size_t dim = rows[0].dim;
    const double c = rms_norm(rows);
    // Coordinate `dim` is the constant bias feature with value c.
    //
    // With step 1/(lambda t) the iterate is w_t = v_t / t, where v gains
    // y x / lambda on every margin violation. The average of w_1..w_T is
    // (H_T P - Q) / T per coordinate, with P the sum of the increments and
    // Q the sum of each increment times H_{s-1} at its step s.
    std::vector<double> v(dim + 1, 0.0), P(dim + 1, 0.0), Q(dim + 1, 0.0);
    double harmonic = 0.0; // H_{t-1} while processing step t
    std::uint64_t t = 0;
    std::vector<std::size_t> order(n);

    LinearSvm m;
    m.lambda_ = lambda;
    auto average = [&](std::vector<double>& w, double& b) {
        w.resize(dim);
        const double T = static_cast<double>(t);
        for (std::size_t j = 0; j < dim; ++j) w[j] = (harmonic * P[j] - Q[j]) / T;
        b = (harmonic * P[dim] - Q[dim]) / T * c;
    };

    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        Rng rng(derive_seed(seed, epoch));
        rng.shuffle(std::span<std::size_t>(order));
        for (std::size_t i : order) {
            ++t;
            const double y = labels[i] == Label::Spam ? 1.0 : -1.0;
            const double margin = y * (sparse_dot(rows[i], v) + v[dim] * c) / static_cast<double>(t > 1 ? t - 1 : 1);
            if (margin < 1.0) {
                const double k = y / lambda;
                for (const auto& e : rows[i].entries) {
                    const double d = k * e.value;
                    v[e.index] += d;
                    P[e.index] += d;
                    Q[e.index] += d * harmonic;
                }
                v[dim] += k * c;
                P[dim] += k * c;
                Q[dim] += k * c * harmonic;
            }
            harmonic += 1.0 / static_cast<double>(t);
        }
        double b = 0.0;
        std::vector<double> w;
        average(w, b);
        double hinge = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double y = labels[i] == Label::Spam ? 1.0 : -1.0;
            hinge += std::max(0.0, 1.0 - y * (sparse_dot(rows[i], w) + b));
        }
        const double wb = b / c;
        double sq = wb * wb;
        for (double x : w) sq += x * x;
        m.epoch_objective_.push_back(0.5 * lambda * sq + hinge / static_cast<double>(n));
    }
    average(m.w_, m.b_);
    for (double x : m.w_)
        if (!std::isfinite(x)) throw NumericError("SVM weights are not finite");
    return m;
}

LinearSvm LinearSvm::fit(std::span<const SparseVector> rows, std::span<const Label> labels, const SvmConfig& cfg) {
    check_training_set(rows, labels, true);
    if (cfg.epochs < 1) throw UsageError("SVM epochs must be >= 1");
    const double lambda = cfg.lambda.value_or(1.0 / static_cast<double>(rows.size()));
    if (!(lambda > 0.0)) throw UsageError("SVM lambda must be > 0");

    LinearSvm m = train_raw(rows, labels, lambda, cfg.epochs, cfg.seed);
    if (!cfg.calibrate) return m;

    // Out-of-fold decision values for the Platt fit. Classes too small to
    // appear in every training part fall back to in-sample scores.
    const auto spam = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), Label::Spam));
    const std::size_t folds = cfg.calibration_folds;
    std::vector<double> scores(rows.size());
    if (folds >= 2 && std::min(spam, rows.size() - spam) >= folds) {
        const auto parts = kfold_split(labels, folds, derive_seed(cfg.seed, 0xca1));
        for (std::size_t f = 0; f < folds; ++f) {
            const auto train_idx = fold_complement(parts, f);
            std::vector<SparseVector> tr;
            std::vector<Label> ty;
            for (std::size_t i : train_idx) {
                tr.push_back(rows[i]);
                ty.push_back(labels[i]);
            }
            const LinearSvm inner = train_raw(tr, ty, lambda, cfg.epochs, derive_seed(cfg.seed, 0xca2 + f));
            for (std::size_t i : parts[f]) scores[i] = inner.decision(rows[i]);
        }
    } else {
        for (std::size_t i = 0; i < rows.size(); ++i) scores[i] = m.decision(rows[i]);
    }
    m.platt_ = fit_platt(scores, labels);
    return m;
}

double LinearSvm::decision(const SparseVector& x) const {
    check_dim(x, w_.size());
    return sparse_dot(x, w_) + b_;
}

ClassProbs LinearSvm::predict_proba(const SparseVector& x) const {
    if (!platt_) throw UsageError("SVM was trained without probability calibration");
    const double p = platt_->p_spam(decision(x));
    return {p, 1.0 - p};
}

nlohmann::json LinearSvm::to_json() const {
    nlohmann::json j = {{"format_version", 1}, {"kind", "linear_svm"}, {"lambda", lambda_},
                        {"weights", w_},       {"bias", b_},           {"epoch_objective", epoch_objective_}};
    if (platt_) j["platt"] = {{"a", platt_->a}, {"b", platt_->b}};
    return j;
}

LinearSvm LinearSvm::from_json(const nlohmann::json& j) {
    check_kind(j, "linear_svm");
    LinearSvm m;
    m.lambda_ = j.at("lambda").get<double>();
    m.w_ = j.at("weights").get<std::vector<double>>();
    m.b_ = j.at("bias").get<double>();
    m.epoch_objective_ = j.value("epoch_objective", std::vector<double>{});
    if (j.contains("platt")) m.platt_ = PlattParams{j["platt"].at("a").get<double>(), j["platt"].at("b").get<double>()};
    return m;
}

} // namespace reviewguard
