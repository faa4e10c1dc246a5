#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <sstream>

#include "fixtures.hpp"
#include "reviewguard/active.hpp"
#include "reviewguard/cli.hpp"
#include "reviewguard/embed.hpp"
#include "reviewguard/pipeline.hpp"
#include "test_util.hpp"

using namespace reviewguard;

namespace {

struct Run {
    int code = 0;
    std::string out, err;
};

Run cli(std::vector<std::string> args) {
    args.insert(args.begin(), "reviewguard");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    Run r;
    r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

std::size_t line_count(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

// Small networks so grid runs stay quick.
const std::vector<std::string> kTinyNet = {"--epochs", "3", "--filters", "4", "--filter-widths", "2,3", "--w2v-epochs", "1",
                                           "--batch-size", "8"};

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

} // namespace

TEST_CASE("no arguments prints usage and exits 1") {
    const auto r = cli({});
    CHECK(r.code == 1);
    CHECK(r.err.find("Usage:") != std::string::npos);
}

TEST_CASE("usage errors exit 1 and help exits 0") {
    CHECK(cli({"bogus"}).code == 1);
    CHECK(cli({"train", "--bogus"}).code == 1);
    CHECK(cli({"train"}).code == 1);
    CHECK(cli({"--no-stem", "frobnicate"}).code == 1);
    const auto help = cli({"experiment", "--help"});
    CHECK(help.code == 0);
    CHECK(help.out.find("--test-fractions") != std::string::npos);
    CHECK(cli({"--help"}).code == 0);
}

TEST_CASE("data errors exit 2") {
    rgtest::TempDir tmp("cli_data");
    CHECK(cli({"train", "--corpus", (tmp / "missing.jsonl").string(), "--model-out", (tmp / "m.json").string()}).code == 2);
    rgtest::write_file(tmp / "bad.jsonl", "{\"id\": \"a\", \"text\": \"x\", \"label\": \"maybe\"}\n");
    CHECK(cli({"train", "--corpus", (tmp / "bad.jsonl").string(), "--model-out", (tmp / "m.json").string()}).code == 2);
    export_jsonl(rgtest::to_corpus(rgtest::synthetic_set(10, 1), "u", false), tmp / "unlabeled.jsonl");
    const auto r = cli({"train", "--corpus", (tmp / "unlabeled.jsonl").string(), "--classifier", "nb", "--model-out",
                        (tmp / "m.json").string()});
    CHECK(r.code == 2);
    CHECK(r.err.find("unlabeled") != std::string::npos);
}

TEST_CASE("import, prep, embed, train, predict and evaluate") {
    rgtest::TempDir tmp("cli_flow");
    const auto set = rgtest::synthetic_set(80, 51, 0.5);
    std::string raw;
    for (std::size_t i = 0; i < set.docs.size(); ++i)
        raw += nlohmann::json{{"review_id", "x" + std::to_string(i)}, {"body", set.texts[i]}, {"verdict", to_string(set.labels[i])}}
                   .dump() +
               "\n";
    rgtest::write_file(tmp / "raw.jsonl", raw);
    const auto corpus = (tmp / "corpus.jsonl").string();

    auto r = cli({"import", "--jsonl", (tmp / "raw.jsonl").string(), "--text-field", "body", "--id-field", "review_id",
                  "--label-field", "verdict", "--out", corpus});
    REQUIRE(r.code == 0);
    CHECK(read_corpus(corpus).size() == 80);
    CHECK(std::filesystem::exists(corpus + ".config.ini"));
    CHECK(cli({"import", "--out", corpus}).code == 1);

    r = cli({"prep", "--corpus", corpus, "--out", (tmp / "tokens.jsonl").string()});
    REQUIRE(r.code == 0);
    CHECK(line_count(rgtest::read_file(tmp / "tokens.jsonl")) == 80);

    r = cli({"embed", "--corpus", corpus, "--dim", "8", "--epochs", "1", "--out", (tmp / "vec.txt").string()});
    REQUIRE(r.code == 0);
    CHECK(EmbeddingTable::load(tmp / "vec.txt").dim() == 8);

    const auto model = (tmp / "nb.json").string();
    r = cli({"train", "--corpus", corpus, "--classifier", "nb", "--ngram", "uni+bi", "--test-fraction", "0.25",
             "--model-out", model, "--report", (tmp / "report.json").string()});
    REQUIRE(r.code == 0);
    const auto summary = nlohmann::json::parse(r.out);
    CHECK(summary["test_size"] == 20);
    CHECK(summary["test_accuracy"].get<double>() >= 80.0);
    CHECK(load_classifier(model)->config().ngram == NgramRange{1, 2});

    r = cli({"predict", "--model", model, "--corpus", corpus});
    REQUIRE(r.code == 0);
    CHECK(line_count(r.out) == 80);
    r = cli({"predict", "--model", model, "--text", set.texts[0]});
    REQUIRE(r.code == 0);
    CHECK(nlohmann::json::parse(r.out)["label"] == "spam");
    CHECK(cli({"predict", "--model", model}).code == 1);

    r = cli({"evaluate", "--model", model, "--corpus", corpus, "--out", (tmp / "eval.json").string()});
    REQUIRE(r.code == 0);
    CHECK(r.out.starts_with("accuracy "));
    r = cli({"evaluate", "--corpus", corpus, "--classifier", "svm", "--folds", "4"});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("4-fold mean accuracy") != std::string::npos);
    CHECK(cli({"evaluate", "--corpus", corpus}).code == 1);

    r = cli(concat({"train", "--corpus", corpus, "--classifier", "cnn", "--embed-dim", "6", "--model-out",
                    (tmp / "cnn.json").string()},
                   kTinyNet));
    REQUIRE(r.code == 0);
    CHECK(load_classifier(tmp / "cnn.json")->kind() == ClassifierKind::Cnn);
}

TEST_CASE("experiment tables are byte-identical across runs and config replays") {
    rgtest::TempDir tmp("cli_exp");
    export_jsonl(rgtest::to_corpus(rgtest::synthetic_set(48, 52, 0.5), "fx"), tmp / "fx.jsonl");
    const auto args = concat({"experiment", "--id", "I", "--corpus", (tmp / "fx.jsonl").string(), "--test-fractions",
                              "0.25", "--embed-dims", "6", "--hidden-dims", "5", "--seeds", "1,2"},
                             kTinyNet);
    REQUIRE(cli(concat(args, {"--out", (tmp / "a").string()})).code == 0);
    REQUIRE(cli(concat(args, {"--out", (tmp / "b").string()})).code == 0);
    const auto a = rgtest::read_file(tmp / "a" / "experiment_I.csv");
    CHECK(line_count(a) == 5);
    CHECK(a == rgtest::read_file(tmp / "b" / "experiment_I.csv"));
    CHECK(rgtest::read_file(tmp / "a" / "experiment_I.json") == rgtest::read_file(tmp / "b" / "experiment_I.json"));

    const auto replay = cli({"--config", (tmp / "a" / "experiment_I.config.ini").string(), "experiment", "--out",
                             (tmp / "c").string()});
    REQUIRE(replay.code == 0);
    CHECK(rgtest::read_file(tmp / "c" / "experiment_I.csv") == a);

    CHECK(cli(concat(args, {"--out", (tmp / "d").string(), "--classifiers", "svm"})).code == 1);
}

TEST_CASE("seed comes from the flag, then the config file, then the environment") {
    rgtest::TempDir tmp("cli_seed");
    export_jsonl(rgtest::to_corpus(rgtest::synthetic_set(30, 53, 0.5), "fx"), tmp / "fx.jsonl");
    const auto base = std::vector<std::string>{"train", "--corpus", (tmp / "fx.jsonl").string(), "--classifier", "svm"};
    auto seed_in = [&](const std::string& model) {
        const auto ini = rgtest::read_file(model + ".config.ini");
        return ini.substr(0, ini.find('\n'));
    };
    ::setenv("REVIEWGUARD_SEED", "9", 1);
    REQUIRE(cli(concat(base, {"--model-out", (tmp / "env.json").string()})).code == 0);
    CHECK(seed_in((tmp / "env.json").string()) == "seed=9");
    REQUIRE(cli(concat({"--seed", "4"}, concat(base, {"--model-out", (tmp / "flag.json").string()}))).code == 0);
    CHECK(seed_in((tmp / "flag.json").string()) == "seed=4");
    rgtest::write_file(tmp / "run.ini", "seed=6\n");
    REQUIRE(cli(concat({"--config", (tmp / "run.ini").string()}, concat(base, {"--model-out", (tmp / "ini.json").string()})))
                .code == 0);
    CHECK(seed_in((tmp / "ini.json").string()) == "seed=6");
    ::unsetenv("REVIEWGUARD_SEED");
    CHECK(load_classifier(tmp / "flag.json")->config().seed == 4);
}

TEST_CASE("label runs the simulated expert and writes a replayable log") {
    rgtest::TempDir tmp("cli_label");
    const auto seed_set = rgtest::synthetic_set(40, 54, 0.6, 0.0, "seed");
    const auto pool_set = rgtest::synthetic_set(60, 55, 0.4, 0.0, "pool");
    export_jsonl(rgtest::to_corpus(seed_set, "seed"), tmp / "seed.jsonl");
    export_jsonl(rgtest::to_corpus(pool_set, "pool", false), tmp / "pool.jsonl");
    export_jsonl(rgtest::to_corpus(pool_set, "truth"), tmp / "truth.jsonl");
    const std::vector<std::string> args = {"label", "--seed-corpus", (tmp / "seed.jsonl").string(), "--pool",
                                           (tmp / "pool.jsonl").string(), "--oracle", "simulated", "--truth",
                                           (tmp / "truth.jsonl").string()};
    const auto r = cli(concat(args, {"--out", (tmp / "out").string()}));
    REQUIRE(r.code == 0);
    const auto labeled = read_corpus(tmp / "out" / "labeled.jsonl");
    CHECK(labeled.size() == 60);
    CHECK(labeled.fully_labeled());
    const auto report = nlohmann::json::parse(rgtest::read_file(tmp / "out" / "report.json"));
    CHECK(report["counts"]["pool_remaining"] == 0);

    std::vector<std::string> seed_ids, pool_ids;
    for (const auto& d : seed_set.docs) seed_ids.push_back(d.id);
    for (const auto& d : pool_set.docs) pool_ids.push_back(d.id);
    const auto events = read_event_log(tmp / "out" / "events.jsonl");
    CHECK(replay_events(seed_ids, pool_ids, events, ActiveConfig{}).ok);

    REQUIRE(cli(concat(args, {"--out", (tmp / "again").string()})).code == 0);
    CHECK(rgtest::read_file(tmp / "again" / "labeled.jsonl") == rgtest::read_file(tmp / "out" / "labeled.jsonl"));
    CHECK(rgtest::read_file(tmp / "again" / "events.jsonl") == rgtest::read_file(tmp / "out" / "events.jsonl"));

    CHECK(cli(concat(args, {"--out", (tmp / "h").string(), "--oracle", "human"})).code == 1);
    CHECK(cli(concat(args, {"--out", (tmp / "t").string(), "--threshold", "1.5"})).code == 1);
}

TEST_CASE("numeric failures exit 3") {
    rgtest::TempDir tmp("cli_numeric");
    export_jsonl(rgtest::to_corpus(rgtest::synthetic_set(30, 56, 0.5), "fx"), tmp / "fx.jsonl");
    const auto r = cli({"train", "--corpus", (tmp / "fx.jsonl").string(), "--classifier", "mlp", "--mlp-hidden", "8",
                        "--lr", "1e300", "--epochs", "3", "--model-out", (tmp / "m.json").string()});
    CHECK(r.code == 3);
}
