#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "fixtures.hpp"
#include "reviewguard/errors.hpp"
#include "reviewguard/eval.hpp"
#include "reviewguard/split.hpp"
#include "test_util.hpp"

using namespace reviewguard;

namespace {

class ConstantClassifier final : public TextClassifier {
public:
    explicit ConstantClassifier(Label l) : TextClassifier(PipelineConfig{}), label_(l) {}
    ClassifierKind kind() const override { return ClassifierKind::NaiveBayes; }
    std::vector<ClassProbs> predict_proba(std::span<const TokenizedDoc> docs) const override {
        return std::vector<ClassProbs>(docs.size(), label_ == Label::Spam ? ClassProbs{1, 0} : ClassProbs{0, 1});
    }
    bool knows_token(std::string_view) const override { return false; }
    std::uint64_t vocab_hash() const override { return 0; }
    nlohmann::json to_json() const override { return {}; }

private:
    Label label_;
};

Confusion make(std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn) {
    Confusion c;
    c.tp = tp;
    c.fp = fp;
    c.tn = tn;
    c.fn = fn;
    return c;
}

ExperimentGrid tiny_grid() {
    ExperimentGrid g;
    g.test_fractions = {0.25};
    g.embed_dims = {6};
    g.hidden_dims = {5};
    g.folds = {3};
    g.ngrams = {{1, 1}};
    g.seeds = {1};
    g.base.model.filter_widths = {2};
    g.base.model.filters_per_width = 4;
    g.base.model.mlp_hidden = {8};
    g.base.model.epochs = 3;
    g.base.model.batch_size = 8;
    g.base.word2vec.epochs = 1;
    return g;
}

} // namespace

TEST_CASE("confusion matrix metrics") {
    const auto c = make(9, 1, 9, 1);
    CHECK(c.total() == 20);
    CHECK(c.accuracy() == doctest::Approx(90.0));
    CHECK(c.precision(Label::Spam) == doctest::Approx(0.9));
    CHECK(c.recall(Label::Ham) == doctest::Approx(0.9));

    const auto perfect = make(5, 0, 7, 0);
    for (Label l : {Label::Spam, Label::Ham}) {
        CHECK(perfect.precision(l) == 1.0);
        CHECK(perfect.recall(l) == 1.0);
        CHECK(perfect.f1(l) == 1.0);
    }

    const auto empty = Confusion{};
    CHECK(empty.accuracy() == 0.0);
    CHECK(empty.precision(Label::Spam) == 0.0);
    CHECK(empty.f1(Label::Ham) == 0.0);

    const std::vector<Label> pred = {Label::Spam, Label::Spam, Label::Ham, Label::Ham};
    const std::vector<Label> truth = {Label::Spam, Label::Ham, Label::Ham, Label::Spam};
    const auto m = Confusion::from(pred, truth);
    CHECK((m.tp == 1 && m.fp == 1 && m.tn == 1 && m.fn == 1));
    CHECK_THROWS_AS(Confusion::from(pred, std::span(truth).first(2)), DataError);
}

TEST_CASE("constant-ham classifier on a 350/1650 set") {
    std::vector<TokenizedDoc> docs(2000);
    std::vector<Label> labels(2000, Label::Ham);
    std::fill_n(labels.begin(), 350, Label::Spam);
    const ConstantClassifier ham(Label::Ham);
    const auto r = evaluate(ham, docs, labels);
    CHECK(r.accuracy() == doctest::Approx(82.5));
    CHECK(r.confusion.recall(Label::Spam) == 0.0);
    CHECK(r.confusion.total() == 2000);
    CHECK_THROWS_AS(evaluate(ham, {}, {}), DataError);
}

TEST_CASE("cross-validation trains per fold and reports consistent metrics") {
    const auto set = rgtest::synthetic_set(60, 21, 0.5);
    PipelineConfig cfg;
    cfg.kind = ClassifierKind::NaiveBayes;
    const auto cv = cross_validate(cfg, set.docs, set.labels, 5, 3);
    REQUIRE(cv.folds.size() == 5);
    std::size_t evaluated = 0;
    double sum = 0.0;
    for (const auto& f : cv.folds) {
        const auto& c = f.confusion;
        CHECK(f.accuracy() == 100.0 * static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total()));
        evaluated += c.total();
        sum += f.accuracy();
    }
    CHECK(evaluated == set.docs.size());
    CHECK(cv.mean_accuracy == doctest::Approx(sum / 5));
    CHECK(cv.mean_accuracy > 90.0);
    CHECK(cv.stdev_accuracy >= 0.0);
    CHECK(cv.to_json()["folds"].size() == 5);
}

TEST_CASE("cross-validation fits featurizers inside each fold") {
    // A token that occurs in exactly one document can only be known to the
    // models of the folds that train on it.
    auto set = rgtest::synthetic_set(30, 22, 0.5);
    const std::string marker = "markerqk";
    set.docs[7].tokens.push_back(marker);
    PipelineConfig cfg;
    cfg.kind = ClassifierKind::Svm;
    const auto folds = kfold_split(set.labels, 3, 9);
    std::size_t knowing = 0;
    for (std::size_t f = 0; f < 3; ++f) {
        const auto train = fold_complement(folds, f);
        std::vector<TokenizedDoc> d;
        std::vector<Label> y;
        for (auto i : train) {
            d.push_back(set.docs[i]);
            y.push_back(set.labels[i]);
        }
        const auto fit = fit_pipeline(cfg, d, y);
        const bool holds = std::find(train.begin(), train.end(), 7u) != train.end();
        CHECK(fit.model->knows_token(marker) == holds);
        knowing += holds;
    }
    CHECK(knowing == 2);
}

TEST_CASE("ratio names and experiment ids") {
    CHECK(ratio_name(0.1) == "90:10");
    CHECK(ratio_name(0.4) == "60:40");
    CHECK(parse_experiment_id("III") == ExperimentId::III);
    CHECK(parse_experiment_id("4") == ExperimentId::IV);
    CHECK_THROWS_AS(parse_experiment_id("V"), UsageError);
    ExperimentGrid g;
    g.classifiers = {ClassifierKind::Svm};
    CHECK_THROWS_AS(g.classifiers_for(ExperimentId::I), UsageError);
    CHECK(g.classifiers_for(ExperimentId::IV).size() == 1);
    CHECK(ExperimentGrid{}.classifiers_for(ExperimentId::IV).size() == 3);
}

TEST_CASE("experiment grids produce one row per cell") {
    const auto set = rgtest::synthetic_set(48, 23, 0.5);
    auto g = tiny_grid();

    std::size_t streamed = 0;
    const auto one = run_experiment(ExperimentId::I, "syn", set.docs, set.labels, g, [&](const ResultRow&) { ++streamed; });
    // LSTM: one hidden dim; CNN: no hidden axis.
    REQUIRE(one.rows.size() == 2);
    CHECK(streamed == 2);
    CHECK(one.rows[0].classifier == "lstm");
    CHECK(one.rows[0].hidden_dim == 5u);
    CHECK(one.rows[1].classifier == "cnn");
    CHECK_FALSE(one.rows[1].hidden_dim.has_value());
    CHECK(one.rows[0].ratio_or_cv == "75:25");
    CHECK(one.rows[0].accuracy_final.has_value());
    for (const auto& r : one.rows) {
        CHECK(r.accuracy >= *r.accuracy_final);
        CHECK(r.accuracy >= 0.0);
        CHECK(r.accuracy <= 100.0);
    }

    g.ngrams = {{1, 1}, {1, 2}};
    const auto iv = run_experiment(ExperimentId::IV, "syn", set.docs, set.labels, g);
    CHECK(iv.rows.size() == 6);
    CHECK(iv.rows[0].ratio_or_cv == "3-fold");
    CHECK(iv.rows[1].ngram == "unigram+bigram");
    CHECK(iv.best_per_setting().rows.size() == 3);

    g.ngrams = {{1, 1}};
    const auto iii = run_experiment(ExperimentId::III, "syn", set.docs, set.labels, g);
    REQUIRE(iii.rows.size() == 1);
    CHECK(iii.rows[0].classifier == "mlp");
}

TEST_CASE("result tables are byte-identical across runs") {
    const auto set = rgtest::synthetic_set(40, 24, 0.5);
    const auto g = tiny_grid();
    const auto a = run_experiment(ExperimentId::I, "syn", set.docs, set.labels, g);
    const auto b = run_experiment(ExperimentId::I, "syn", set.docs, set.labels, g);
    CHECK(a.to_csv() == b.to_csv());
    CHECK(a.to_json().dump() == b.to_json().dump());

    rgtest::TempDir tmp("tables");
    a.write(tmp.path(), "experiment_I");
    CHECK(rgtest::read_file(tmp / "experiment_I.csv") == a.to_csv());
    const auto header = a.to_csv().substr(0, a.to_csv().find('\n'));
    CHECK(header == "experiment,dataset,ratio_or_cv,embed_dim,hidden_dim,ngram,classifier,seed,accuracy,accuracy_final");
}

TEST_CASE("csv fields with commas are quoted") {
    ResultTable t;
    t.rows.push_back({"IV", "a,b", "5-fold", std::nullopt, std::nullopt, "unigram", "nb", 1, 90.0, std::nullopt});
    const auto csv = t.to_csv();
    CHECK(csv.find("IV,\"a,b\",5-fold,,,unigram,nb,1,90.0000,\n") != std::string::npos);
}
