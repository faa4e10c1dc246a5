#include "reviewguard/eval.hpp"

#include "reviewguard/errors.hpp"
#include "reviewguard/rng.hpp"
#include "reviewguard/split.hpp"

#include <cmath>
#include <fstream>
#include <map>

#include <fmt/core.h>

namespace reviewguard {

namespace {

double ratio(std::size_t num, std::size_t den) { return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den); }

template <class T>
std::vector<T> pick(std::span<const T> items, const std::vector<std::size_t>& idx) {
    std::vector<T> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(items[i]);
    return out;
}

} // namespace

Confusion Confusion::from(std::span<const Label> predicted, std::span<const Label> truth) {
    if (predicted.size() != truth.size()) throw DataError("prediction and label counts differ");
    Confusion c;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const bool p = predicted[i] == Label::Spam, t = truth[i] == Label::Spam;
        if (p && t) ++c.tp;
        else if (p) ++c.fp;
        else if (t) ++c.fn;
        else ++c.tn;
    }
    return c;
}

double Confusion::accuracy() const {
    return total() == 0 ? 0.0 : 100.0 * static_cast<double>(tp + tn) / static_cast<double>(total());
}

double Confusion::precision(Label c) const { return c == Label::Spam ? ratio(tp, tp + fp) : ratio(tn, tn + fn); }

double Confusion::recall(Label c) const { return c == Label::Spam ? ratio(tp, tp + fn) : ratio(tn, tn + fp); }

double Confusion::f1(Label c) const {
    const double p = precision(c), r = recall(c);
    return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

nlohmann::json Confusion::to_json() const {
    nlohmann::json per_class;
    for (Label c : {Label::Spam, Label::Ham})
        per_class[std::string(to_string(c))] = {{"precision", precision(c)}, {"recall", recall(c)}, {"f1", f1(c)}};
    return {{"tp", tp}, {"fp", fp}, {"tn", tn}, {"fn", fn}, {"accuracy", accuracy()}, {"per_class", per_class}};
}

nlohmann::json EvalReport::to_json() const { return {{"confusion", confusion.to_json()}, {"config", config}}; }

EvalReport evaluate(const TextClassifier& model, std::span<const TokenizedDoc> docs, std::span<const Label> labels) {
    if (docs.empty()) throw DataError("empty test set");
    if (docs.size() != labels.size()) throw DataError("document and label counts differ");
    const auto predicted = model.predict(docs);
    return {Confusion::from(predicted, labels), {{"pipeline", model.config().to_json()}}};
}

nlohmann::json CvResult::to_json() const {
    nlohmann::json f = nlohmann::json::array();
    for (const auto& r : folds) f.push_back(r.to_json());
    nlohmann::json t = nlohmann::json::array();
    for (const auto& r : train_reports) t.push_back(r.to_json());
    return {{"mean_accuracy", mean_accuracy}, {"stdev_accuracy", stdev_accuracy}, {"folds", f}, {"train_reports", t}};
}

CvResult cross_validate(const PipelineConfig& cfg, std::span<const TokenizedDoc> docs, std::span<const Label> labels,
                        std::size_t k, std::uint64_t split_seed, bool stratified) {
    if (docs.size() != labels.size()) throw DataError("document and label counts differ");
    const auto folds = kfold_split(labels, k, split_seed, stratified);
    CvResult out;
    for (std::size_t f = 0; f < k; ++f) {
        const auto train_idx = fold_complement(folds, f);
        const auto train_docs = pick(docs, train_idx), test_docs = pick(docs, folds[f]);
        const auto train_y = pick(labels, train_idx), test_y = pick(labels, folds[f]);
        PipelineConfig fold_cfg = cfg;
        fold_cfg.seed = derive_seed(cfg.seed, f);
        auto fit = fit_pipeline(fold_cfg, train_docs, train_y, test_docs, test_y);
        auto report = evaluate(*fit.model, test_docs, test_y);
        report.config["fold"] = f;
        report.config["k"] = k;
        report.config["split_seed"] = split_seed;
        report.config["stratified"] = stratified;
        out.folds.push_back(std::move(report));
        if (fit.report) out.train_reports.push_back(std::move(*fit.report));
    }
    double sum = 0.0;
    for (const auto& r : out.folds) sum += r.accuracy();
    out.mean_accuracy = sum / static_cast<double>(k);
    double ss = 0.0;
    for (const auto& r : out.folds) ss += (r.accuracy() - out.mean_accuracy) * (r.accuracy() - out.mean_accuracy);
    out.stdev_accuracy = std::sqrt(ss / static_cast<double>(k));
    return out;
}

// ---------------------------------------------------------------- experiments

std::string_view to_string(ExperimentId id) {
    switch (id) {
    case ExperimentId::I: return "I";
    case ExperimentId::II: return "II";
    case ExperimentId::III: return "III";
    case ExperimentId::IV: return "IV";
    }
    return "?";
}

ExperimentId parse_experiment_id(std::string_view s) {
    if (s == "I" || s == "1") return ExperimentId::I;
    if (s == "II" || s == "2") return ExperimentId::II;
    if (s == "III" || s == "3") return ExperimentId::III;
    if (s == "IV" || s == "4") return ExperimentId::IV;
    throw UsageError(fmt::format("unknown experiment '{}' (expected I, II, III or IV)", s));
}

std::vector<ClassifierKind> ExperimentGrid::classifiers_for(ExperimentId id) const {
    std::vector<ClassifierKind> allowed;
    switch (id) {
    case ExperimentId::I:
    case ExperimentId::II: allowed = {ClassifierKind::Lstm, ClassifierKind::Cnn}; break;
    case ExperimentId::III: allowed = {ClassifierKind::Mlp}; break;
    case ExperimentId::IV: allowed = {ClassifierKind::Svm, ClassifierKind::Knn, ClassifierKind::NaiveBayes}; break;
    }
    if (classifiers.empty()) return allowed;
    std::vector<ClassifierKind> out;
    for (auto k : classifiers) {
        if (std::find(allowed.begin(), allowed.end(), k) == allowed.end())
            throw UsageError(fmt::format("classifier {} is not part of experiment {}", to_string(k), to_string(id)));
        out.push_back(k);
    }
    return out;
}

std::string ratio_name(double test_fraction) {
    const auto test = static_cast<int>(std::lround(test_fraction * 100.0));
    return fmt::format("{}:{}", 100 - test, test);
}

namespace {

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

std::string opt_num(const std::optional<std::size_t>& v) { return v ? std::to_string(*v) : std::string(); }

} // namespace

std::string ResultTable::to_csv() const {
    std::string out = "experiment,dataset,ratio_or_cv,embed_dim,hidden_dim,ngram,classifier,seed,accuracy,accuracy_final\n";
    for (const auto& r : rows) {
        out += fmt::format("{},{},{},{},{},{},{},{},{:.4f},{}\n", csv_field(r.experiment), csv_field(r.dataset),
                           csv_field(r.ratio_or_cv), opt_num(r.embed_dim), opt_num(r.hidden_dim), csv_field(r.ngram),
                           csv_field(r.classifier), r.seed, r.accuracy,
                           r.accuracy_final ? fmt::format("{:.4f}", *r.accuracy_final) : std::string());
    }
    return out;
}

nlohmann::json ResultTable::to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : rows) {
        arr.push_back({{"experiment", r.experiment},
                       {"dataset", r.dataset},
                       {"ratio_or_cv", r.ratio_or_cv},
                       {"embed_dim", r.embed_dim ? nlohmann::json(*r.embed_dim) : nlohmann::json(nullptr)},
                       {"hidden_dim", r.hidden_dim ? nlohmann::json(*r.hidden_dim) : nlohmann::json(nullptr)},
                       {"ngram", r.ngram},
                       {"classifier", r.classifier},
                       {"seed", r.seed},
                       {"accuracy", r.accuracy},
                       {"accuracy_final", r.accuracy_final ? nlohmann::json(*r.accuracy_final) : nlohmann::json(nullptr)}});
    }
    return arr;
}

void ResultTable::write(const std::filesystem::path& dir, const std::string& stem) const {
    std::filesystem::create_directories(dir);
    auto put = [&](const std::filesystem::path& p, const std::string& content) {
        std::ofstream out(p, std::ios::binary | std::ios::trunc);
        out << content;
        if (!out) throw DataError(fmt::format("cannot write {}", p.string()));
    };
    put(dir / (stem + ".csv"), to_csv());
    put(dir / (stem + ".json"), to_json().dump(2) + "\n");
}

ResultTable ResultTable::best_per_setting() const {
    std::map<std::pair<std::string, std::string>, std::size_t> best;
    std::vector<std::pair<std::string, std::string>> order;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto key = std::make_pair(rows[i].ratio_or_cv, rows[i].classifier);
        const auto it = best.find(key);
        if (it == best.end()) {
            best.emplace(key, i);
            order.push_back(key);
        } else if (rows[i].accuracy > rows[it->second].accuracy) {
            it->second = i;
        }
    }
    ResultTable out;
    for (const auto& key : order) out.rows.push_back(rows[best.at(key)]);
    return out;
}

ResultTable run_experiment(ExperimentId id, const std::string& dataset, std::span<const TokenizedDoc> docs,
                           std::span<const Label> labels, const ExperimentGrid& grid, const RowCallback& on_row) {
    if (docs.empty()) throw DataError("experiment needs a non-empty labeled dataset");
    if (docs.size() != labels.size()) throw DataError("document and label counts differ");
    const auto classifiers = grid.classifiers_for(id);
    ResultTable table;
    auto emit = [&](ResultRow row) {
        if (on_row) on_row(row);
        table.rows.push_back(std::move(row));
    };

    if (id == ExperimentId::I || id == ExperimentId::II) {
        for (double frac : grid.test_fractions) {
            for (auto kind : classifiers) {
                for (auto d : grid.embed_dims) {
                    const bool lstm = kind == ClassifierKind::Lstm;
                    const std::vector<std::optional<std::size_t>> hiddens =
                        lstm ? std::vector<std::optional<std::size_t>>(grid.hidden_dims.begin(), grid.hidden_dims.end())
                             : std::vector<std::optional<std::size_t>>{std::nullopt};
                    for (const auto& h : hiddens) {
                        for (auto seed : grid.seeds) {
                            const auto split = holdout_split(labels, frac, seed, grid.stratified);
                            PipelineConfig cfg = grid.base;
                            cfg.kind = kind;
                            cfg.model.kind = lstm ? ModelKind::Lstm : ModelKind::Cnn;
                            cfg.model.embed_dim = d;
                            if (h) cfg.model.hidden_dim = *h;
                            cfg.seed = seed;
                            const auto fit = fit_pipeline(cfg, pick(docs, split.train), pick(labels, split.train),
                                                          pick(docs, split.test), pick(labels, split.test));
                            ResultRow row{std::string(to_string(id)), dataset, ratio_name(frac), d, h, "",
                                          std::string(to_string(kind)), seed, fit.report->best_test_accuracy,
                                          fit.report->final_test_accuracy()};
                            emit(std::move(row));
                        }
                    }
                }
            }
        }
        return table;
    }

    for (auto k : grid.folds) {
        for (auto kind : classifiers) {
            for (const auto& ngram : grid.ngrams) {
                for (auto seed : grid.seeds) {
                    PipelineConfig cfg = grid.base;
                    cfg.kind = kind;
                    cfg.model.kind = ModelKind::Mlp;
                    cfg.ngram = ngram;
                    cfg.seed = seed;
                    const auto cv = cross_validate(cfg, docs, labels, k, seed, grid.stratified);
                    ResultRow row{std::string(to_string(id)), dataset, fmt::format("{}-fold", k), std::nullopt,
                                  std::nullopt, ngram.name(), std::string(to_string(kind)), seed, cv.mean_accuracy,
                                  std::nullopt};
                    emit(std::move(row));
                }
            }
        }
    }
    return table;
}

} // namespace reviewguard
