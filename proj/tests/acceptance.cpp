// Acceptance runner. With no arguments every criterion runs and prints one
// PASS/FAIL/SKIP line; with a criterion name only that one runs. Exit codes:
// 0 all ran criteria passed, 1 any failed, 77 the single requested criterion
// was skipped. `--list` prints the names.
//
// Criteria on the Ott corpus need REVIEWGUARD_OTT_DIR (the unpacked corpus
// directory) or REVIEWGUARD_OTT_JSONL (an imported corpus file).

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/core.h>

#include "fixtures.hpp"
#include "grad_cases.hpp"
#include "oracles.hpp"
#include "reviewguard/active.hpp"
#include "reviewguard/classic.hpp"
#include "reviewguard/cli.hpp"
#include "reviewguard/eval.hpp"
#include "reviewguard/split.hpp"
#include "reviewguard/textprep.hpp"
#include "test_util.hpp"

using namespace reviewguard;

namespace {

enum class Status { Pass, Fail, Skip };

struct Outcome {
    Status status;
    std::string detail;
};

Outcome pass(std::string d) { return {Status::Pass, std::move(d)}; }
Outcome fail(std::string d) { return {Status::Fail, std::move(d)}; }
Outcome skip(std::string d) { return {Status::Skip, std::move(d)}; }
Outcome verdict(bool ok, std::string d) { return {ok ? Status::Pass : Status::Fail, std::move(d)}; }

struct Criterion {
    std::string name;
    std::string summary;
    double budget_seconds;
    std::function<Outcome()> run;
};

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// ------------------------------------------------------------------ Ott data

struct Dataset {
    std::vector<TokenizedDoc> docs;
    std::vector<Label> labels;
};

std::optional<Dataset> load_ott(std::string& why) {
    Corpus corpus("ott");
    if (const char* dir = std::getenv("REVIEWGUARD_OTT_DIR"); dir && *dir) {
        corpus = import_ott(dir);
    } else if (const char* file = std::getenv("REVIEWGUARD_OTT_JSONL"); file && *file) {
        corpus = read_corpus(file);
    } else {
        why = "Ott corpus not available (set REVIEWGUARD_OTT_DIR or REVIEWGUARD_OTT_JSONL)";
        return std::nullopt;
    }
    if (corpus.size() == 0 || !corpus.fully_labeled()) {
        why = "Ott corpus is empty or not fully labeled";
        return std::nullopt;
    }
    Dataset d;
    d.docs = preprocess_corpus(corpus, default_prep_config());
    for (const auto& r : corpus.records()) d.labels.push_back(*r.label);
    return d;
}

// Holdout rows from the experiment harness with the pinned grid cell.
Outcome ott_holdout(ClassifierKind kind, double test_fraction, std::size_t embed_dim, std::size_t hidden_dim,
                    double target) {
    std::string why;
    const auto data = load_ott(why);
    if (!data) return skip(why);
    ExperimentGrid grid;
    grid.test_fractions = {test_fraction};
    grid.embed_dims = {embed_dim};
    grid.hidden_dims = {hidden_dim};
    grid.classifiers = {kind};
    grid.seeds = {1, 2, 3};
    const auto table = run_experiment(ExperimentId::I, "ott", data->docs, data->labels, grid);
    double best = 0.0;
    std::string per_seed;
    for (const auto& row : table.rows) {
        best = std::max(best, row.accuracy);
        per_seed += fmt::format(" seed{}={:.3f}", row.seed, row.accuracy);
    }
    return verdict(best >= target, fmt::format("best {:.3f}% (need >= {}%);{}", best, target, per_seed));
}

Outcome ott_cv(ExperimentId id, ClassifierKind kind, NgramRange ngram, double target) {
    std::string why;
    const auto data = load_ott(why);
    if (!data) return skip(why);
    ExperimentGrid grid;
    grid.folds = {5};
    grid.ngrams = {ngram};
    grid.classifiers = {kind};
    grid.seeds = {1};
    grid.base.model.mlp_hidden = {170, 170, 170};
    const auto table = run_experiment(id, "ott", data->docs, data->labels, grid);
    if (table.rows.empty()) return fail("experiment produced no rows");
    const double acc = table.rows.front().accuracy;
    return verdict(acc >= target, fmt::format("5-fold mean {:.3f}% (need >= {}%)", acc, target));
}

// ----------------------------------------------------------------- criteria

Outcome gradients() {
    struct Kind {
        const char* name;
        std::function<double(std::uint64_t)> rel_err;
    };
    const std::vector<Kind> kinds = {
        {"dense", [](std::uint64_t s) { return rgtest::grad_case_dense(s); }},
        {"relu", [](std::uint64_t s) { return rgtest::grad_case_relu(s); }},
        {"dropout(eval)", [](std::uint64_t s) { return rgtest::grad_case_dropout(s, false); }},
        {"conv1d", [](std::uint64_t s) { return rgtest::grad_case_conv1d(s); }},
        {"max-over-time", [](std::uint64_t s) { return rgtest::grad_case_maxpool(s); }},
        {"lstm cell", [](std::uint64_t s) { return rgtest::grad_case_lstm(s, 1 + s % 3); }},
        {"cnn", [](std::uint64_t s) { return rgtest::grad_case_cnn(s); }},
        {"lstm net", [](std::uint64_t s) { return rgtest::grad_case_lstm_net(s); }},
    };
    bool ok = true;
    std::string detail;
    for (const auto& k : kinds) {
        double worst = 0.0;
        for (std::uint64_t s = 0; s < 50; ++s) worst = std::max(worst, k.rel_err(derive_seed(0xacce97, s)));
        ok = ok && worst < 1e-4;
        detail += fmt::format("{}{}={:.1e}", detail.empty() ? "" : " ", k.name, worst);
    }
    return verdict(ok, "max rel err " + detail + " (need < 1e-4)");
}

Outcome oracles() {
    Rng rng(0x0acc);
    std::size_t tfidf_bad = 0, nb_bad = 0, knn_bad = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const auto c = rgtest::random_tfidf_case(rng);
        const auto vocab = NgramVocab::fit(c.docs, c.range);
        const auto oracle = rgtest::tfidf_oracle(c.docs, c.range);
        bool good = true;
        for (std::size_t d = 0; d < c.docs.size(); ++d) {
            const auto v = tfidf_transform(c.docs[d], vocab);
            good = good && v.entries.size() == oracle[d].size();
            for (const auto& e : v.entries) {
                const auto it = oracle[d].find(vocab.gram(e.index));
                good = good && it != oracle[d].end() && std::abs(e.value - it->second) <= 1e-12 * std::abs(it->second);
            }
        }
        tfidf_bad += !good;
    }
    for (int trial = 0; trial < 200; ++trial) {
        const auto c = rgtest::random_count_case(rng, 5, 6, 3, 4);
        const auto nb = NaiveBayes::fit(c.rows, c.labels);
        bool good = true;
        for (const auto& q : c.queries) good = good && std::abs(nb.predict_proba(q)[0] - rgtest::nb_oracle_p_spam(c, q)) < 1e-9;
        nb_bad += !good;
    }
    for (int trial = 0; trial < 200; ++trial) {
        const auto c = rgtest::random_count_case(rng, 20, 6, 3, 5);
        const std::size_t k = 1 + rng.below(std::min<std::size_t>(7, c.rows.size()));
        const auto knn = Knn::fit(c.rows, c.labels, k);
        bool good = true;
        for (const auto& q : c.queries) good = good && knn.predict(q) == rgtest::knn_oracle(c, q, k);
        knn_bad += !good;
    }
    return verdict(tfidf_bad + nb_bad + knn_bad == 0,
                   fmt::format("mismatching instances: tfidf {}/200, nb {}/200, knn {}/200", tfidf_bad, nb_bad, knn_bad));
}

Outcome porter() {
    std::ifstream voc(rgtest::data_dir() / "porter_voc.txt");
    std::ifstream out(rgtest::data_dir() / "porter_output.txt");
    if (!voc || !out) return fail("porter fixture files missing");
    std::size_t total = 0, wrong = 0;
    std::string w, expected, first_wrong;
    while (voc >> w && out >> expected) {
        ++total;
        if (porter_stem(w) != expected) {
            if (wrong++ == 0) first_wrong = fmt::format(", first: {} -> {} (want {})", w, porter_stem(w), expected);
        }
    }
    return verdict(total > 0 && wrong == 0, fmt::format("{}/{} entries match{}", total - wrong, total, first_wrong));
}

Outcome active_protocol() {
    auto seed_set = rgtest::margin_pool(100, 0x5eed, 0.1, "seed");
    auto pool_set = rgtest::margin_pool(500, 0x9001, 0.1, "pool");
    Corpus seed("seed"), pool("pool");
    std::vector<std::string> seed_ids, pool_ids;
    for (auto& r : seed_set.records) {
        seed_ids.push_back(r.id);
        seed.add(std::move(r));
    }
    for (auto& r : pool_set.records) {
        pool_ids.push_back(r.id);
        r.label.reset();
        pool.add(std::move(r));
    }
    ActiveConfig cfg;
    ActiveSession session(seed, pool, cfg);
    SimulatedOracle oracle(pool_set.truth);
    const auto report = session.run_to_completion(oracle, &pool_set.truth);

    std::vector<std::string> problems;
    if (!session.complete()) problems.push_back("session did not terminate");
    std::map<std::size_t, std::size_t> experts_per_iter;
    std::size_t low_auto = 0;
    for (const auto& e : session.events()) {
        if (e.action == EventAction::Expert) ++experts_per_iter[e.iter];
        if (e.action == EventAction::Auto && !(e.score > cfg.threshold)) ++low_auto;
    }
    std::size_t max_experts = 0;
    for (const auto& [iter, n] : experts_per_iter) max_experts = std::max(max_experts, n);
    if (max_experts > cfg.max_expert_per_iter) problems.push_back(fmt::format("{} expert queries in one iteration", max_experts));
    if (low_auto) problems.push_back(fmt::format("{} auto labels at or below the threshold", low_auto));
    const auto replay = replay_events(seed_ids, pool_ids, session.events(), cfg);
    if (!replay.ok) problems.push_back("replay: " + replay.violations.front());
    if (!replay.final_pool.empty()) problems.push_back("replay leaves records in the pool");
    const double agreement = report.auto_agreement.value_or(0.0);
    if (agreement < 95.0) problems.push_back(fmt::format("auto agreement {:.2f}% < 95%", agreement));

    std::string detail = fmt::format("{} iterations, {} auto, {} expert (max {}/iter), agreement {:.2f}%",
                                     report.iterations, report.counts.auto_labeled, report.counts.expert, max_experts,
                                     agreement);
    for (const auto& p : problems) detail += "; " + p;
    return verdict(problems.empty(), detail);
}

Outcome overfit() {
    std::string why;
    const auto data = load_ott(why);
    if (!data) return skip(why);
    // 50 of each class, picked by a seeded shuffle.
    std::vector<std::size_t> spam, ham;
    for (std::size_t i = 0; i < data->labels.size(); ++i) (data->labels[i] == Label::Spam ? spam : ham).push_back(i);
    if (spam.size() < 50 || ham.size() < 50) return fail("fewer than 50 reviews in a class");
    Rng rng(0x0f17);
    rng.shuffle(std::span(spam));
    rng.shuffle(std::span(ham));
    std::vector<TokenizedDoc> docs;
    std::vector<Label> labels;
    for (std::size_t k = 0; k < 50; ++k) {
        for (auto i : {spam[k], ham[k]}) {
            docs.push_back(data->docs[i]);
            labels.push_back(data->labels[i]);
        }
    }
    bool ok = true;
    std::string detail;
    for (auto kind : {ClassifierKind::Cnn, ClassifierKind::Lstm}) {
        PipelineConfig cfg;
        cfg.kind = kind;
        cfg.model.epochs = 30;
        const auto fit = fit_pipeline(cfg, docs, labels);
        std::size_t reached = 0;
        for (std::size_t e = 0; e < fit.report->epochs.size() && !reached; ++e)
            if (fit.report->epochs[e].train_accuracy >= 100.0) reached = e + 1;
        ok = ok && reached > 0;
        detail += fmt::format("{}{}: best train {:.1f}%{}", detail.empty() ? "" : "; ", to_string(kind),
                              fit.report->best_train_accuracy, reached ? fmt::format(" at epoch {}", reached) : "");
    }
    return verdict(ok, detail);
}

Outcome determinism() {
    rgtest::TempDir tmp("acceptance_det");
    export_jsonl(rgtest::to_corpus(rgtest::synthetic_set(80, 0xde7, 0.4, 0.05, "fx"), "fx"), tmp / "fx.jsonl", true);
    auto run = [&](const std::string& sub) {
        std::vector<std::string> args = {"reviewguard", "--seed", "11", "experiment", "--id", "I", "--corpus",
                                         (tmp / "fx.jsonl").string(), "--out", (tmp / sub).string(),
                                         "--test-fractions", "0.2", "--embed-dims", "8", "--hidden-dims", "6",
                                         "--epochs", "3", "--filters", "4", "--filter-widths", "2,3", "--w2v-epochs", "1",
                                         "--batch-size", "8"};
        std::vector<const char*> argv;
        for (const auto& a : args) argv.push_back(a.c_str());
        std::ostringstream out, err;
        return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    };
    const int a = run("a"), b = run("b");
    if (a != 0 || b != 0) return fail(fmt::format("experiment exited {} and {}", a, b));
    const auto csv_a = rgtest::read_file(tmp / "a" / "experiment_I.csv");
    const auto csv_b = rgtest::read_file(tmp / "b" / "experiment_I.csv");
    const auto json_a = rgtest::read_file(tmp / "a" / "experiment_I.json");
    const auto json_b = rgtest::read_file(tmp / "b" / "experiment_I.json");
    const bool same = !csv_a.empty() && csv_a == csv_b && json_a == json_b;
    return verdict(same, fmt::format("csv {} bytes, json {} bytes, {}", csv_a.size(), json_a.size(),
                                     same ? "byte-identical" : "differ"));
}

std::vector<Criterion> criteria() {
    return {
        {"gradients", "analytic gradients match finite differences", 120, gradients},
        {"oracles", "tfidf, naive Bayes and knn match brute-force oracles", 60, oracles},
        {"porter", "Porter stemmer matches the canonical list", 60, porter},
        {"active_protocol", "active-learning protocol on a 500-record margin pool", 60, active_protocol},
        {"ott_cnn_holdout", "Ott 90:10 CNN d=50 best-epoch accuracy >= 86%", 15 * 60,
         [] { return ott_holdout(ClassifierKind::Cnn, 0.1, 50, 50, 86.0); }},
        {"ott_lstm_holdout", "Ott 70:30 LSTM d=100 h=50 best-epoch accuracy >= 89%", 20 * 60,
         [] { return ott_holdout(ClassifierKind::Lstm, 0.3, 100, 50, 89.0); }},
        {"ott_svm_cv", "Ott 5-fold SVM uni+bigrams mean accuracy >= 85%", 5 * 60,
         [] { return ott_cv(ExperimentId::IV, ClassifierKind::Svm, {1, 2}, 85.0); }},
        {"ott_mlp_cv", "Ott 5-fold MLP 3x170 uni+bi+trigrams mean accuracy >= 87%", 15 * 60,
         [] { return ott_cv(ExperimentId::III, ClassifierKind::Mlp, {1, 3}, 87.0); }},
        {"overfit", "CNN and LSTM reach 100% train accuracy on 100 Ott reviews within 30 epochs", 30 * 60, overfit},
        {"determinism", "experiment I twice gives byte-identical tables", 120, determinism},
    };
}

Outcome run_one(const Criterion& c, double& seconds) {
    Stopwatch sw;
    Outcome o;
    try {
        o = c.run();
    } catch (const std::exception& e) {
        o = fail(std::string("exception: ") + e.what());
    }
    seconds = sw.seconds();
    if (o.status == Status::Pass && seconds > c.budget_seconds) {
        o.status = Status::Fail;
        o.detail += fmt::format("; runtime {:.1f}s over the {:.0f}s budget", seconds, c.budget_seconds);
    }
    return o;
}

} // namespace

int main(int argc, char** argv) {
    const auto all = criteria();
    std::vector<const Criterion*> selected;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--list") {
            for (const auto& c : all) std::cout << c.name << "  " << c.summary << "\n";
            return 0;
        }
        const auto it = std::find_if(all.begin(), all.end(), [&](const Criterion& c) { return c.name == arg; });
        if (it == all.end()) {
            std::cerr << "unknown criterion '" << arg << "' (see --list)\n";
            return 2;
        }
        selected.push_back(&*it);
    }
    if (selected.empty())
        for (const auto& c : all) selected.push_back(&c);

    std::size_t passed = 0, failed = 0, skipped = 0;
    for (const auto* c : selected) {
        double seconds = 0.0;
        const auto o = run_one(*c, seconds);
        const char* tag = o.status == Status::Pass ? "PASS" : o.status == Status::Fail ? "FAIL" : "SKIP";
        std::cout << fmt::format("{} {:<17} {:>7.1f}s  {}\n", tag, c->name, seconds, o.detail) << std::flush;
        (o.status == Status::Pass ? passed : o.status == Status::Fail ? failed : skipped)++;
    }
    std::cout << fmt::format("{} passed, {} failed, {} skipped\n", passed, failed, skipped);
    if (failed) return 1;
    if (selected.size() == 1 && skipped == 1) return 77;
    return 0;
}
