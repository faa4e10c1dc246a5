#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "reviewguard/pipeline.hpp"

namespace reviewguard {

// Spam is the positive class.
struct Confusion {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

    static Confusion from(std::span<const Label> predicted, std::span<const Label> truth);

    std::size_t total() const { return tp + fp + tn + fn; }
    double accuracy() const; // percent
    // Per class, treating `c` as positive. 0/0 is reported as 0.
    double precision(Label c) const;
    double recall(Label c) const;
    double f1(Label c) const;

    nlohmann::json to_json() const;
};

struct EvalReport {
    Confusion confusion;
    nlohmann::json config; // echo of the pipeline, split and seed

    double accuracy() const { return confusion.accuracy(); }
    nlohmann::json to_json() const;
};

// Throws DataError on an empty test set.
EvalReport evaluate(const TextClassifier& model, std::span<const TokenizedDoc> docs, std::span<const Label> labels);

struct CvResult {
    std::vector<EvalReport> folds;
    std::vector<TrainReport> train_reports; // neural models only
    double mean_accuracy = 0.0;
    double stdev_accuracy = 0.0; // population

    nlohmann::json to_json() const;
};

// Trains a fresh pipeline per fold; every featurizer is fitted on the
// training folds only. Fold f's model uses seed derive_seed(cfg.seed, f).
CvResult cross_validate(const PipelineConfig& cfg, std::span<const TokenizedDoc> docs, std::span<const Label> labels,
                        std::size_t k, std::uint64_t split_seed, bool stratified = true);

// ---------------------------------------------------------------- experiments

enum class ExperimentId { I, II, III, IV };

std::string_view to_string(ExperimentId id);
ExperimentId parse_experiment_id(std::string_view s);

// Grid axes. Unused axes are ignored by an experiment: I and II sweep
// test fractions x embedding dims x hidden dims (LSTM only) over the neural
// sequence classifiers; III sweeps folds x n-grams for the MLP; IV sweeps
// folds x n-grams x classic classifiers.
struct ExperimentGrid {
    std::vector<double> test_fractions = {0.1, 0.2, 0.3, 0.4};
    std::vector<std::size_t> embed_dims = {50, 100, 200};
    std::vector<std::size_t> hidden_dims = {50, 100, 200};
    std::vector<std::size_t> folds = {5, 10};
    std::vector<NgramRange> ngrams = {{1, 1}, {2, 2}, {3, 3}, {1, 2}, {2, 3}, {1, 3}};
    std::vector<ClassifierKind> classifiers; // empty: the experiment's defaults
    std::vector<std::uint64_t> seeds = {1, 2, 3};
    bool stratified = true;
    PipelineConfig base; // everything else (epochs, batch size, lr, ...)

    std::vector<ClassifierKind> classifiers_for(ExperimentId id) const;
};

struct ResultRow {
    std::string experiment;
    std::string dataset;
    std::string ratio_or_cv; // "90:10" or "5-fold"
    std::optional<std::size_t> embed_dim;
    std::optional<std::size_t> hidden_dim;
    std::string ngram; // blank for the sequence models
    std::string classifier;
    std::uint64_t seed = 0;
    double accuracy = 0.0;                // best epoch for neural holdout runs, CV mean otherwise
    std::optional<double> accuracy_final; // last epoch (holdout neural runs)
};

struct ResultTable {
    std::vector<ResultRow> rows;

    std::string to_csv() const;
    nlohmann::json to_json() const;
    // Writes <stem>.csv and <stem>.json into `dir`.
    void write(const std::filesystem::path& dir, const std::string& stem) const;
    // Highest accuracy per (ratio_or_cv, classifier), first row on ties.
    ResultTable best_per_setting() const;
};

using RowCallback = std::function<void(const ResultRow&)>;

// `docs` and `labels` are the preprocessed, fully labeled dataset.
ResultTable run_experiment(ExperimentId id, const std::string& dataset, std::span<const TokenizedDoc> docs,
                           std::span<const Label> labels, const ExperimentGrid& grid, const RowCallback& on_row = {});

// "90:10" for 0.1.
std::string ratio_name(double test_fraction);

} // namespace reviewguard
