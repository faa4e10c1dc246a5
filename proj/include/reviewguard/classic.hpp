#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "reviewguard/corpus.hpp"
#include "reviewguard/features.hpp"

namespace reviewguard {

// (p_spam, p_ham), indexed by class_index.
using ClassProbs = std::array<double, kNumClasses>;

// Argmax with ties going to Ham.
inline Label argmax_label(const ClassProbs& p) { return p[0] > p[1] ? Label::Spam : Label::Ham; }

// Multinomial naive Bayes over raw n-gram counts.
class NaiveBayes {
public:
    static NaiveBayes fit(std::span<const SparseVector> counts, std::span<const Label> labels, double alpha = 1.0);

    ClassProbs predict_proba(const SparseVector& counts) const;
    std::size_t dim() const { return log_likelihood_[0].size(); }
    double log_prior(Label c) const { return log_prior_[class_index(c)]; }
    double log_likelihood(Label c, std::size_t j) const { return log_likelihood_[class_index(c)][j]; }

    nlohmann::json to_json() const;
    static NaiveBayes from_json(const nlohmann::json& j);

private:
    double alpha_ = 1.0;
    std::array<double, kNumClasses> log_prior_{};
    std::array<std::vector<double>, kNumClasses> log_likelihood_;
};

// k nearest neighbours by cosine distance. Among equally distant points
// (within 1e-12) the lower training index is closer; a tied vote goes to Ham.
class Knn {
public:
    static Knn fit(std::span<const SparseVector> rows, std::span<const Label> labels, std::size_t k = 5);

    // Indices of the k nearest stored points, nearest first.
    std::vector<std::size_t> neighbors(const SparseVector& x) const;
    Label predict(const SparseVector& x) const;
    // Vote fractions among the k neighbours.
    ClassProbs predict_proba(const SparseVector& x) const;
    std::size_t k() const { return k_; }
    std::size_t size() const { return rows_.size(); }

    nlohmann::json to_json() const;
    static Knn from_json(const nlohmann::json& j);

private:
    std::size_t k_ = 5;
    std::size_t dim_ = 0;
    std::vector<SparseVector> rows_; // L2-normalized
    std::vector<Label> labels_;
};

struct SvmConfig {
    // Regularization strength; nullopt means 1 / n.
    std::optional<double> lambda;
    std::size_t epochs = 20;
    std::uint64_t seed = 1;
    bool calibrate = true;
    std::size_t calibration_folds = 3;
};

struct PlattParams {
    double a = 0.0;
    double b = 0.0;

    // P(spam | s) = 1 / (1 + exp(a s + b))
    double p_spam(double s) const;
};

// Fits (a, b) by Newton's method with backtracking on the regularized
// targets (n+ + 1)/(n+ + 2) and 1/(n- + 2).
PlattParams fit_platt(std::span<const double> scores, std::span<const Label> labels);

// Linear SVM trained by Pegasos on the primal hinge loss. The model is the
// average iterate. The bias is the weight of an extra constant feature that
// is regularized like the others; its value is the RMS norm of the training
// rows, so rescaling every row by c together with lambda by c^2 leaves the
// decision values unchanged.
class LinearSvm {
public:
    static LinearSvm fit(std::span<const SparseVector> rows, std::span<const Label> labels, const SvmConfig& cfg = {});

    // Positive scores lean towards Spam.
    double decision(const SparseVector& x) const;
    Label predict(const SparseVector& x) const { return decision(x) > 0.0 ? Label::Spam : Label::Ham; }
    // Throws UsageError if the model was trained without calibration.
    ClassProbs predict_proba(const SparseVector& x) const;

    const std::vector<double>& weights() const { return w_; }
    double bias() const { return b_; }
    double lambda() const { return lambda_; }
    const std::optional<PlattParams>& platt() const { return platt_; }
    // Primal objective of the running average iterate after each epoch.
    const std::vector<double>& epoch_objective() const { return epoch_objective_; }

    nlohmann::json to_json() const;
    static LinearSvm from_json(const nlohmann::json& j);

private:
    static LinearSvm train_raw(std::span<const SparseVector> rows, std::span<const Label> labels, double lambda,
                               std::size_t epochs, std::uint64_t seed);

    std::vector<double> w_;
    double b_ = 0.0;
    double lambda_ = 0.0;
    std::optional<PlattParams> platt_;
    std::vector<double> epoch_objective_;
};

} // namespace reviewguard
