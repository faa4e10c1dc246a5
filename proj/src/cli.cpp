#include "reviewguard/cli.hpp"

#include "reviewguard/active.hpp"
#include "reviewguard/corpus.hpp"
#include "reviewguard/embed.hpp"
#include "reviewguard/errors.hpp"
#include "reviewguard/eval.hpp"
#include "reviewguard/labelsvc.hpp"
#include "reviewguard/pipeline.hpp"
#include "reviewguard/split.hpp"
#include "reviewguard/textprep.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <fmt/core.h>
#include <fmt/ostream.h>

namespace reviewguard {

namespace fs = std::filesystem;

namespace {

struct GlobalOpts {
    std::uint64_t seed = 1;
    bool no_stem = false;
    std::string stopwords;
    std::size_t min_token_len = 1;
};

PrepConfig prep_config(const GlobalOpts& g) {
    PrepConfig p = default_prep_config();
    p.stem = !g.no_stem;
    p.min_token_len = g.min_token_len;
    if (!g.stopwords.empty()) {
        const auto words = load_stopwords(g.stopwords);
        p.stopwords = {words.begin(), words.end()};
    }
    return p;
}

// A directory is read as an Ott-style tree, anything else as our JSONL.
Corpus load_corpus(const fs::path& path) {
    if (fs::is_directory(path)) return import_ott(path);
    return read_corpus(path);
}

struct Labeled {
    std::vector<TokenizedDoc> docs;
    std::vector<Label> labels;
};

Labeled load_labeled(const fs::path& path, const PrepConfig& prep) {
    const auto corpus = load_corpus(path);
    if (corpus.empty()) throw DataError(fmt::format("{} holds no records", path.string()));
    if (!corpus.fully_labeled()) throw DataError(fmt::format("{} has unlabeled records", path.string()));
    Labeled out;
    out.docs = preprocess_corpus(corpus, prep);
    for (const auto& r : corpus.records()) out.labels.push_back(*r.label);
    return out;
}

void ensure_parent(const fs::path& p) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

void write_text(const fs::path& p, const std::string& text) {
    ensure_parent(p);
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) throw DataError(fmt::format("cannot write {}", p.string()));
}

struct TrainOpts {
    std::string classifier = "cnn";
    std::string ngram = "unigram";
    std::size_t min_df = 1;
    std::size_t epochs = ModelSpec{}.epochs;
    std::size_t batch_size = ModelSpec{}.batch_size;
    double lr = ModelSpec{}.lr;
    std::size_t embed_dim = ModelSpec{}.embed_dim;
    std::size_t hidden_dim = ModelSpec{}.hidden_dim;
    std::vector<std::size_t> mlp_hidden = ModelSpec{}.mlp_hidden;
    std::vector<std::size_t> filter_widths = ModelSpec{}.filter_widths;
    std::size_t filters = ModelSpec{}.filters_per_width;
    double dropout = ModelSpec{}.dropout;
    std::size_t knn_k = 5;
    std::optional<double> svm_lambda;
    std::size_t w2v_epochs = Word2VecConfig{}.epochs;
    bool no_pretrain = false;
    std::size_t max_len = 0;
};

void add_train_options(CLI::App* cmd, TrainOpts& t) {
    cmd->add_option("--classifier", t.classifier, "mlp, cnn, lstm, nb, knn or svm")->capture_default_str();
    cmd->add_option("--ngram", t.ngram, "n-gram orders, e.g. uni, bi, uni+bi, 1-3")->capture_default_str();
    cmd->add_option("--min-df", t.min_df, "minimum document frequency")->capture_default_str();
    cmd->add_option("--epochs", t.epochs)->capture_default_str();
    cmd->add_option("--batch-size", t.batch_size)->capture_default_str();
    cmd->add_option("--lr", t.lr, "Adam learning rate")->capture_default_str();
    cmd->add_option("--embed-dim", t.embed_dim)->capture_default_str();
    cmd->add_option("--hidden-dim", t.hidden_dim, "LSTM hidden size")->capture_default_str();
    cmd->add_option("--mlp-hidden", t.mlp_hidden, "MLP layer widths")->delimiter(',')->capture_default_str();
    cmd->add_option("--filter-widths", t.filter_widths, "CNN filter widths")->delimiter(',')->capture_default_str();
    cmd->add_option("--filters", t.filters, "CNN filters per width")->capture_default_str();
    cmd->add_option("--dropout", t.dropout, "CNN dropout rate")->capture_default_str();
    cmd->add_option("--knn-k", t.knn_k)->capture_default_str();
    cmd->add_option("--svm-lambda", t.svm_lambda, "SVM regularization (default 1/n)");
    cmd->add_option("--w2v-epochs", t.w2v_epochs, "word2vec pretraining epochs")->capture_default_str();
    cmd->add_flag("--no-pretrain", t.no_pretrain, "start sequence models from random embeddings");
    cmd->add_option("--max-len", t.max_len, "sequence length (0: 95th percentile of training lengths)")
        ->capture_default_str();
}

PipelineConfig pipeline_config(const TrainOpts& t, std::uint64_t seed) {
    PipelineConfig c;
    c.kind = parse_classifier_kind(t.classifier);
    c.ngram = parse_ngram_range(t.ngram);
    c.min_df = t.min_df;
    c.model.kind = c.kind == ClassifierKind::Mlp    ? ModelKind::Mlp
                   : c.kind == ClassifierKind::Lstm ? ModelKind::Lstm
                                                    : ModelKind::Cnn;
    c.model.epochs = t.epochs;
    c.model.batch_size = t.batch_size;
    c.model.lr = t.lr;
    c.model.embed_dim = t.embed_dim;
    c.model.hidden_dim = t.hidden_dim;
    c.model.mlp_hidden = t.mlp_hidden;
    c.model.filter_widths = t.filter_widths;
    c.model.filters_per_width = t.filters;
    c.model.dropout = t.dropout;
    c.knn_k = t.knn_k;
    c.svm.lambda = t.svm_lambda;
    c.word2vec.epochs = t.w2v_epochs;
    c.pretrain_embeddings = !t.no_pretrain;
    if (t.max_len > 0) c.max_len = t.max_len;
    c.seed = seed;
    return c;
}

struct ActiveOpts {
    std::size_t batch_size = ActiveConfig{}.batch_size;
    double threshold = ActiveConfig{}.threshold;
    std::size_t max_expert = ActiveConfig{}.max_expert_per_iter;
    double holdout_fraction = ActiveConfig{}.holdout_fraction;
    std::string learner = "svm";
    std::string learner_ngram = "unigram";
};

void add_active_options(CLI::App* cmd, ActiveOpts& a) {
    cmd->add_option("--batch", a.batch_size, "records drawn per iteration")->capture_default_str();
    cmd->add_option("--threshold", a.threshold, "auto-label when |p_spam - p_ham| exceeds this")->capture_default_str();
    cmd->add_option("--max-expert", a.max_expert, "expert queries per iteration")->capture_default_str();
    cmd->add_option("--holdout-fraction", a.holdout_fraction, "seed share held out for accuracy reporting")
        ->capture_default_str();
    cmd->add_option("--learner", a.learner, "nb, knn or svm")->capture_default_str();
    cmd->add_option("--learner-ngram", a.learner_ngram)->capture_default_str();
}

ActiveConfig active_config(const ActiveOpts& a, std::uint64_t seed) {
    ActiveConfig c;
    c.batch_size = a.batch_size;
    c.threshold = a.threshold;
    c.max_expert_per_iter = a.max_expert;
    c.holdout_fraction = a.holdout_fraction;
    c.learner.kind = parse_classifier_kind(a.learner);
    if (is_neural(c.learner.kind)) throw UsageError("the active learner must be nb, knn or svm");
    c.learner.ngram = parse_ngram_range(a.learner_ngram);
    c.seed = seed;
    c.validate();
    return c;
}

std::string option_lines(const CLI::App& a) {
    std::string s;
    for (const CLI::Option* o : a.get_options()) {
        const std::string name = o->get_single_name();
        if (name == "help" || name == "config") continue;
        std::string value;
        if (o->get_expected_max() == 0) {
            value = o->count() > 0 ? "true" : "false";
        } else if (o->count() > 0) {
            const auto& r = o->results();
            if (o->get_expected_max() > 1) {
                value = "[";
                for (std::size_t i = 0; i < r.size(); ++i) value += (i ? "," : "") + r[i];
                value += "]";
            } else {
                value = r.empty() ? "" : r.back();
            }
        } else {
            value = o->get_default_str();
        }
        if (value.empty()) {
            s += "; " + name + "=\n";
            continue;
        }
        if (value.find_first_of(" #;\"") != std::string::npos) value = "\"" + value + "\"";
        s += name + "=" + value + "\n";
    }
    return s;
}

// Every effective setting of the run, loadable again through --config.
void echo_config(const CLI::App& app, const fs::path& path) {
    std::string text = option_lines(app);
    for (const CLI::App* sub : app.get_subcommands()) text += "\n[" + sub->get_name() + "]\n" + option_lines(*sub);
    write_text(path, text);
}

std::string sidecar(const fs::path& p) { return p.string() + ".config.ini"; }

} // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Opinion-spam detection toolkit", "reviewguard"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_config("--config", "", "INI file with option values; flags override it");
    GlobalOpts g;
    app.add_option("--seed", g.seed, "seed for all randomness")->envname("REVIEWGUARD_SEED")->capture_default_str();
    app.add_flag("--no-stem", g.no_stem, "skip Porter stemming");
    app.add_option("--stopwords", g.stopwords, "stopword list replacing the bundled one")->check(CLI::ExistingFile);
    app.add_option("--min-token-len", g.min_token_len)->capture_default_str();

    std::function<void()> action;

    // import
    auto* imp = app.add_subcommand("import", "Read an Ott directory tree or a JSONL dump into corpus JSONL");
    std::string imp_ott, imp_jsonl, imp_out, imp_text = "text", imp_id = "id", imp_label;
    std::size_t imp_limit = 0;
    bool imp_strict = false;
    auto* ott_opt = imp->add_option("--ott", imp_ott, "Ott corpus root")->check(CLI::ExistingDirectory);
    auto* jsonl_opt = imp->add_option("--jsonl", imp_jsonl, "line-delimited JSON reviews")->check(CLI::ExistingFile);
    ott_opt->excludes(jsonl_opt);
    imp->add_option("--text-field", imp_text)->capture_default_str();
    imp->add_option("--id-field", imp_id)->capture_default_str();
    imp->add_option("--label-field", imp_label, "field holding spam or ham");
    imp->add_option("--limit", imp_limit, "keep at most this many records (0: all)");
    imp->add_flag("--strict", imp_strict, "fail on the first malformed record");
    imp->add_option("--out", imp_out, "output corpus")->required();
    imp->callback([&] {
        action = [&] {
            if (imp_ott.empty() == imp_jsonl.empty()) throw UsageError("give exactly one of --ott or --jsonl");
            ImportDiagnostics diag;
            Corpus c;
            if (!imp_ott.empty()) {
                OttImportOptions o;
                o.strict = imp_strict;
                c = import_ott(imp_ott, o, &diag);
            } else {
                JsonlImportOptions o;
                o.text_field = imp_text;
                o.id_field = imp_id;
                if (!imp_label.empty()) o.label_field = imp_label;
                if (imp_limit > 0) o.limit = imp_limit;
                o.strict = imp_strict;
                c = import_jsonl(imp_jsonl, o, &diag);
            }
            for (const auto& w : diag.warnings) fmt::print(err, "warning: {}\n", w);
            ensure_parent(imp_out);
            const auto n = export_jsonl(c, imp_out);
            echo_config(app, sidecar(imp_out));
            fmt::print(out, "{} records ({} spam, {} ham) -> {}\n", n, c.count(Label::Spam), c.count(Label::Ham), imp_out);
        };
    });

    // prep
    auto* prep = app.add_subcommand("prep", "Tokenize, filter and stem a corpus");
    std::string prep_corpus, prep_out;
    prep->add_option("--corpus", prep_corpus)->required();
    prep->add_option("--out", prep_out, "JSONL of {id, tokens, label}")->required();
    prep->callback([&] {
        action = [&] {
            const auto corpus = load_corpus(prep_corpus);
            const auto docs = preprocess_corpus(corpus, prep_config(g));
            std::string text;
            for (std::size_t i = 0; i < docs.size(); ++i) {
                nlohmann::json j = {{"id", docs[i].id}, {"tokens", docs[i].tokens}};
                if (corpus[i].label) j["label"] = to_string(*corpus[i].label);
                text += j.dump() + "\n";
            }
            write_text(prep_out, text);
            echo_config(app, sidecar(prep_out));
            fmt::print(out, "{} documents -> {}\n", docs.size(), prep_out);
        };
    });

    // embed
    auto* emb = app.add_subcommand("embed", "Train skip-gram word vectors on a corpus");
    std::string emb_corpus, emb_out;
    Word2VecConfig w2v;
    emb->add_option("--corpus", emb_corpus)->required();
    emb->add_option("--dim", w2v.dim)->capture_default_str();
    emb->add_option("--window", w2v.window)->capture_default_str();
    emb->add_option("--negatives", w2v.negatives)->capture_default_str();
    emb->add_option("--epochs", w2v.epochs)->capture_default_str();
    emb->add_option("--lr", w2v.lr)->capture_default_str();
    emb->add_option("--max-vocab", w2v.max_vocab)->capture_default_str();
    emb->add_option("--out", emb_out, "table file (.json, else text)")->required();
    emb->callback([&] {
        action = [&] {
            const auto docs = preprocess_corpus(load_corpus(emb_corpus), prep_config(g));
            w2v.seed = g.seed;
            Word2VecStats stats;
            const auto table = train_word2vec(docs, w2v, &stats);
            ensure_parent(emb_out);
            table.save(emb_out);
            echo_config(app, sidecar(emb_out));
            fmt::print(out, "{} words x {} dims -> {}\n", table.rows(), table.dim(), emb_out);
            for (std::size_t e = 0; e < stats.epoch_mean_loss.size(); ++e)
                fmt::print(err, "epoch {} loss {:.4f}\n", e + 1, stats.epoch_mean_loss[e]);
        };
    });

    // train
    auto* train = app.add_subcommand("train", "Fit a classifier and save it");
    std::string train_corpus, train_model, train_report;
    double train_test_fraction = 0.0;
    TrainOpts topts;
    train->add_option("--corpus", train_corpus)->required();
    train->add_option("--test-fraction", train_test_fraction, "stratified holdout share scored after every epoch")
        ->check(CLI::Range(0.0, 0.9))
        ->capture_default_str();
    add_train_options(train, topts);
    train->add_option("--model-out", train_model)->required();
    train->add_option("--report", train_report, "training report JSON");
    train->callback([&] {
        action = [&] {
            const auto cfg = pipeline_config(topts, g.seed);
            const auto data = load_labeled(train_corpus, prep_config(g));
            std::vector<TokenizedDoc> tr_docs, te_docs;
            std::vector<Label> tr_y, te_y;
            if (train_test_fraction > 0.0) {
                const auto split = holdout_split(data.labels, train_test_fraction, g.seed);
                for (auto i : split.train) {
                    tr_docs.push_back(data.docs[i]);
                    tr_y.push_back(data.labels[i]);
                }
                for (auto i : split.test) {
                    te_docs.push_back(data.docs[i]);
                    te_y.push_back(data.labels[i]);
                }
            } else {
                tr_docs = data.docs;
                tr_y = data.labels;
            }
            const auto fit = fit_pipeline(cfg, tr_docs, tr_y, te_docs, te_y, [&](std::size_t epoch, const EpochRecord& r) {
                fmt::print(err, "epoch {} loss {:.4f} train {:.2f}% test {:.2f}%\n", epoch + 1, r.train_loss,
                           r.train_accuracy, r.test_accuracy);
            });
            ensure_parent(train_model);
            save_classifier(*fit.model, train_model);
            echo_config(app, sidecar(train_model));
            nlohmann::json summary = {{"model", train_model}, {"classifier", to_string(cfg.kind)}, {"train_size", tr_docs.size()}};
            if (!te_docs.empty()) {
                summary["test_size"] = te_docs.size();
                summary["test_accuracy"] = evaluate(*fit.model, te_docs, te_y).accuracy();
            }
            if (fit.report) summary["report"] = fit.report->to_json();
            if (!train_report.empty()) write_text(train_report, summary.dump(2) + "\n");
            nlohmann::json brief = summary;
            brief.erase("report");
            fmt::print(out, "{}\n", brief.dump());
        };
    });

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "Score a saved model on a labeled corpus, or cross-validate");
    std::string ev_model, ev_corpus, ev_out;
    std::size_t ev_folds = 0;
    TrainOpts eopts;
    ev->add_option("--model", ev_model, "saved model; omit to cross-validate");
    ev->add_option("--corpus", ev_corpus)->required();
    ev->add_option("--folds", ev_folds, "k for cross-validation");
    add_train_options(ev, eopts);
    ev->add_option("--out", ev_out, "report JSON");
    ev->callback([&] {
        action = [&] {
            const auto data = load_labeled(ev_corpus, prep_config(g));
            nlohmann::json report;
            if (!ev_model.empty()) {
                if (ev_folds > 0) throw UsageError("--folds trains new models; drop --model");
                const auto model = load_classifier(ev_model);
                const auto r = evaluate(*model, data.docs, data.labels);
                report = r.to_json();
                fmt::print(out, "accuracy {:.4f}\n", r.accuracy());
            } else {
                if (ev_folds < 2) throw UsageError("give --model, or --folds >= 2 to cross-validate");
                const auto cv = cross_validate(pipeline_config(eopts, g.seed), data.docs, data.labels, ev_folds, g.seed);
                report = cv.to_json();
                fmt::print(out, "{}-fold mean accuracy {:.4f} (sd {:.4f})\n", ev_folds, cv.mean_accuracy, cv.stdev_accuracy);
            }
            if (!ev_out.empty()) {
                write_text(ev_out, report.dump(2) + "\n");
                echo_config(app, sidecar(ev_out));
            }
        };
    });

    // experiment
    auto* ex = app.add_subcommand("experiment", "Run one of the four experiment grids");
    std::string ex_id, ex_corpus, ex_out, ex_dataset;
    ExperimentGrid grid;
    std::vector<std::string> ex_ngrams, ex_classifiers;
    TrainOpts xopts;
    ex->add_option("--id", ex_id, "I, II, III or IV")->required();
    ex->add_option("--corpus", ex_corpus)->required();
    ex->add_option("--out", ex_out, "directory for the result tables")->required();
    ex->add_option("--dataset", ex_dataset, "name in the dataset column (default: corpus file stem)");
    ex->add_option("--test-fractions", grid.test_fractions)->delimiter(',')->capture_default_str();
    ex->add_option("--embed-dims", grid.embed_dims)->delimiter(',')->capture_default_str();
    ex->add_option("--hidden-dims", grid.hidden_dims)->delimiter(',')->capture_default_str();
    ex->add_option("--folds", grid.folds)->delimiter(',')->capture_default_str();
    ex->add_option("--ngrams", ex_ngrams, "n-gram combinations (default: all six)")->delimiter(',');
    ex->add_option("--classifiers", ex_classifiers, "subset of the experiment's classifiers")->delimiter(',');
    ex->add_option("--seeds", grid.seeds, "seed list (default: 1,2,3)")->delimiter(',')->capture_default_str();
    add_train_options(ex, xopts);
    ex->callback([&] {
        action = [&] {
            const auto id = parse_experiment_id(ex_id);
            auto base = xopts;
            base.classifier = "cnn";
            grid.base = pipeline_config(base, g.seed);
            if (!ex_ngrams.empty()) {
                grid.ngrams.clear();
                for (const auto& n : ex_ngrams) grid.ngrams.push_back(parse_ngram_range(n));
            }
            for (const auto& c : ex_classifiers) grid.classifiers.push_back(parse_classifier_kind(c));
            const auto data = load_labeled(ex_corpus, prep_config(g));
            const std::string dataset = ex_dataset.empty() ? fs::path(ex_corpus).stem().string() : ex_dataset;
            const auto table = run_experiment(id, dataset, data.docs, data.labels, grid, [&](const ResultRow& r) {
                fmt::print(err, "{} {} {} d={} h={} {} seed={} acc={:.4f}\n", r.experiment, r.classifier, r.ratio_or_cv,
                           r.embed_dim ? std::to_string(*r.embed_dim) : "-", r.hidden_dim ? std::to_string(*r.hidden_dim) : "-",
                           r.ngram.empty() ? "-" : r.ngram, r.seed, r.accuracy);
            });
            const std::string stem = fmt::format("experiment_{}", to_string(id));
            table.write(ex_out, stem);
            table.best_per_setting().write(ex_out, stem + "_best");
            echo_config(app, fs::path(ex_out) / (stem + ".config.ini"));
            fmt::print(out, "{} rows -> {}\n", table.rows.size(), (fs::path(ex_out) / (stem + ".csv")).string());
        };
    });

    // label
    auto* lab = app.add_subcommand("label", "Run the active-learning loop over an unlabeled pool");
    std::string lab_seed, lab_pool, lab_oracle = "simulated", lab_truth, lab_out;
    double lab_flip = 0.0;
    bool lab_include_seed = false;
    ActiveOpts aopts;
    lab->add_option("--seed-corpus", lab_seed, "labeled seed set")->required();
    lab->add_option("--pool", lab_pool, "unlabeled pool")->required();
    lab->add_option("--oracle", lab_oracle, "simulated (use `serve` for a human expert)")->capture_default_str();
    lab->add_option("--truth", lab_truth, "labeled corpus answering the simulated expert");
    lab->add_option("--flip-rate", lab_flip, "share of simulated answers that are wrong")->capture_default_str();
    lab->add_option("--out", lab_out, "output directory")->required();
    lab->add_flag("--include-seed", lab_include_seed, "export the seed records too");
    add_active_options(lab, aopts);
    lab->callback([&] {
        action = [&] {
            if (lab_oracle != "simulated")
                throw UsageError(fmt::format("unknown oracle '{}'; run `serve` to label interactively", lab_oracle));
            if (lab_truth.empty()) throw UsageError("--oracle simulated needs --truth");
            const auto cfg = active_config(aopts, g.seed);
            const auto truth_corpus = load_corpus(lab_truth);
            std::unordered_map<std::string, Label> truth;
            for (const auto& r : truth_corpus.records())
                if (r.label) truth.emplace(r.id, *r.label);
            ActiveSession session(load_corpus(lab_seed), load_corpus(lab_pool), cfg, prep_config(g));
            fs::create_directories(lab_out);
            session.set_event_log(fs::path(lab_out) / "events.jsonl");
            SimulatedOracle oracle(truth, lab_flip, derive_seed(g.seed, 0xa11ce));
            const auto report = session.run_to_completion(oracle, &truth);
            export_jsonl(session.labeled_corpus(lab_include_seed), fs::path(lab_out) / "labeled.jsonl", true);
            write_text(fs::path(lab_out) / "report.json", report.to_json().dump(2) + "\n");
            echo_config(app, fs::path(lab_out) / "run_config.ini");
            fmt::print(out, "{} iterations, {} auto, {} expert -> {}\n", report.iterations, report.counts.auto_labeled,
                       report.counts.expert, (fs::path(lab_out) / "labeled.jsonl").string());
        };
    });

    // predict
    auto* pred = app.add_subcommand("predict", "Classify reviews with a saved model");
    std::string pred_model, pred_corpus, pred_text, pred_out;
    pred->add_option("--model", pred_model)->required();
    auto* pc = pred->add_option("--corpus", pred_corpus);
    auto* pt = pred->add_option("--text", pred_text, "a single review");
    pc->excludes(pt);
    pred->add_option("--out", pred_out, "JSONL of {id, label, p_spam}; stdout if omitted");
    pred->callback([&] {
        action = [&] {
            if (pred_corpus.empty() && pred_text.empty()) throw UsageError("give --corpus or --text");
            const auto model = load_classifier(pred_model);
            std::vector<TokenizedDoc> docs;
            if (!pred_text.empty()) docs.push_back(preprocess(pred_text, prep_config(g), "text"));
            else docs = preprocess_corpus(load_corpus(pred_corpus), prep_config(g));
            const auto probs = model->predict_proba(docs);
            std::string text;
            for (std::size_t i = 0; i < docs.size(); ++i) {
                const Label l = probs[i][0] > probs[i][1] ? Label::Spam : Label::Ham;
                text += nlohmann::json{{"id", docs[i].id}, {"label", to_string(l)}, {"p_spam", probs[i][0]}}.dump() + "\n";
            }
            if (pred_out.empty()) {
                out << text;
            } else {
                write_text(pred_out, text);
                echo_config(app, sidecar(pred_out));
            }
        };
    });

    // serve
    auto* srv = app.add_subcommand("serve", "Serve the expert-labeling API");
    std::string srv_host = "127.0.0.1", srv_seed, srv_pool, srv_out, srv_static;
    int srv_port = 8080;
    ActiveOpts sopts;
    srv->add_option("--host", srv_host)->capture_default_str();
    srv->add_option("--port", srv_port)->check(CLI::Range(0, 65535))->capture_default_str();
    srv->add_option("--seed-corpus", srv_seed, "default seed set for new sessions");
    srv->add_option("--pool", srv_pool, "default pool for new sessions");
    srv->add_option("--out", srv_out, "directory for event logs and exports");
    srv->add_option("--static-dir", srv_static, "UI assets served at /")->check(CLI::ExistingDirectory);
    add_active_options(srv, sopts);
    srv->callback([&] {
        action = [&] {
            LabelServiceOptions o;
            if (!srv_seed.empty()) o.seed_corpus = srv_seed;
            if (!srv_pool.empty()) o.pool = srv_pool;
            o.active = active_config(sopts, g.seed);
            o.prep = prep_config(g);
            if (!srv_out.empty()) {
                o.output_dir = srv_out;
                fs::create_directories(srv_out);
                echo_config(app, fs::path(srv_out) / "run_config.ini");
            }
            if (!srv_static.empty()) o.static_dir = srv_static;
            LabelService service(std::move(o));
            const int port = service.bind(srv_host, srv_port);
            fmt::print(out, "listening on http://{}:{}/\n", srv_host, port);
            out.flush();
            service.listen();
        };
    });

    try {
        if (argc <= 1) {
            err << app.help();
            return 1;
        }
        for (int i = 1; i < argc; ++i) {
            const std::string_view a = argv[i];
            if (a.starts_with("-")) {
                const auto* opt = a.find('=') == a.npos ? app.get_option_no_throw(std::string(a)) : nullptr;
                if (opt && opt->get_expected_max() > 0) ++i;
                continue;
            }
            if (!app.get_subcommand_no_throw(std::string(a))) {
                err << "error: unknown subcommand '" << a << "'\n" << app.help();
                return 1;
            }
            break;
        }
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        const auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
        err << sub->help();
        return 1;
    }
    try {
        if (action) action();
        return 0;
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        err << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const nlohmann::json::exception& e) {
        err << "data error: " << e.what() << "\n";
        return 2;
    } catch (const fs::filesystem_error& e) {
        err << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "failure: " << e.what() << "\n";
        return 3;
    }
}

} // namespace reviewguard
