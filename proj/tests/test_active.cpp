#include <doctest.h>

#include <algorithm>
#include <set>

#include "fixtures.hpp"
#include "reviewguard/active.hpp"
#include "reviewguard/errors.hpp"
#include "test_util.hpp"

using namespace reviewguard;

namespace {

ActiveConfig test_config() {
    ActiveConfig c;
    c.seed = 5;
    return c;
}

reviewguard::Corpus seed_corpus() { return rgtest::to_corpus(rgtest::synthetic_set(60, 31, 0.6, 0.0, "seed"), "seed"); }

// With label noise the calibrated learner is unsure about unseen words.
reviewguard::Corpus noisy_seed() { return rgtest::to_corpus(rgtest::synthetic_set(60, 31, 0.6, 0.2, "seed"), "seed"); }

// Documents made only of words the learner has never seen.
reviewguard::Corpus unknown_pool(std::size_t n) {
    static const auto words = rgtest::nonsense_words("zq");
    reviewguard::Corpus c("pool");
    for (std::size_t i = 0; i < n; ++i) {
        ReviewRecord r;
        r.id = "unk:" + std::to_string(i);
        r.text = words[i] + " " + words[(i * 7 + 3) % words.size()];
        c.add(std::move(r));
    }
    return c;
}

std::unordered_map<std::string, Label> truth_of(const rgtest::SyntheticSet& s) {
    std::unordered_map<std::string, Label> t;
    for (std::size_t i = 0; i < s.docs.size(); ++i) t[s.docs[i].id] = s.labels[i];
    return t;
}

std::vector<std::string> ids_of(const reviewguard::Corpus& c) {
    std::vector<std::string> out;
    for (const auto& r : c.records()) out.push_back(r.id);
    return out;
}

class GiveUpOracle final : public Oracle {
public:
    std::optional<Label> label(const PendingItem&) override { return std::nullopt; }
};

class ConstOracle final : public Oracle {
public:
    std::optional<Label> label(const PendingItem&) override { return Label::Ham; }
};

} // namespace

TEST_CASE("probability gap") {
    CHECK(probability_gap(0.9, 0.1) == doctest::Approx(0.8));
    CHECK(probability_gap(0.55, 0.45) == doctest::Approx(0.10));
    CHECK(probability_gap(0.5, 0.5) == 0.0);
}

TEST_CASE("active config validation and JSON") {
    auto c = test_config();
    c.batch_size = 7;
    c.threshold = 0.3;
    const auto back = ActiveConfig::from_json(c.to_json());
    CHECK(back.to_json() == c.to_json());
    c.threshold = 1.0;
    CHECK_THROWS_AS(c.validate(), UsageError);
    c.threshold = 0.2;
    c.batch_size = 0;
    CHECK_THROWS_AS(c.validate(), UsageError);
}

TEST_CASE("session construction checks its inputs") {
    const auto pool = unknown_pool(3);
    CHECK_THROWS_AS(ActiveSession(reviewguard::Corpus("empty"), pool, test_config()), DataError);
    auto one_class = rgtest::synthetic_set(10, 1, 0.6, 0.0, "seed");
    std::fill(one_class.labels.begin(), one_class.labels.end(), Label::Spam);
    CHECK_THROWS_AS(ActiveSession(rgtest::to_corpus(one_class, "s"), pool, test_config()), DataError);
    CHECK_THROWS_AS(ActiveSession(seed_corpus(), rgtest::to_corpus(rgtest::synthetic_set(5, 1, 0.6, 0.0, "seed"), "p"),
                                  test_config()),
                    DataError);
}

TEST_CASE("confident records are all auto-labeled") {
    const auto pool_set = rgtest::synthetic_set(20, 32, 0.9, 0.0, "pool");
    ActiveSession s(seed_corpus(), rgtest::to_corpus(pool_set, "pool", false), test_config());
    SimulatedOracle oracle(truth_of(pool_set));
    const auto out = s.run_iteration(oracle);
    CHECK(out.auto_labeled == 20);
    CHECK(out.expert_labeled == 0);
    CHECK(out.requeued == 0);
    CHECK(s.complete());
    CHECK(oracle.queries() == 0);
    for (const auto& e : s.events()) CHECK(e.score > 0.2);
}

TEST_CASE("low-confidence records: four experts, the rest requeued") {
    ActiveSession s(noisy_seed(), unknown_pool(7), test_config());
    const auto* plan = s.begin_iteration();
    REQUIRE(plan);
    for (const auto& item : plan->batch) REQUIRE(item.score <= 0.2);
    s.abort_iteration();

    ConstOracle oracle;
    const auto out = s.run_iteration(oracle);
    CHECK(out.expert_labeled == 4);
    CHECK(out.requeued == 3);
    CHECK(out.auto_labeled == 0);
    CHECK(s.pool_ids().size() == 3);
    CHECK(s.counts().expert == 4);

    // Expert picks are the lowest scores, ties broken by pool order.
    std::vector<const ActiveEvent*> experts, requeued;
    for (const auto& e : s.events()) (e.action == EventAction::Expert ? experts : requeued).push_back(&e);
    for (auto* x : experts)
        for (auto* r : requeued) CHECK(x->score <= r->score);
    // Requeued records go to the tail in batch order.
    std::vector<std::string> tail(s.pool_ids().begin(), s.pool_ids().end());
    std::vector<std::string> req;
    for (auto* r : requeued) req.push_back(r->record_id);
    CHECK(tail == req);
}

TEST_CASE("empty pool is a no-op and a pool of one takes one iteration") {
    ConstOracle oracle;
    ActiveSession empty(seed_corpus(), reviewguard::Corpus("pool"), test_config());
    CHECK(empty.complete());
    const auto out = empty.run_iteration(oracle);
    CHECK(out.was_noop);
    CHECK(empty.iteration() == 0);
    CHECK(empty.events().empty());

    ActiveSession one(noisy_seed(), unknown_pool(1), test_config());
    const auto r = one.run_to_completion(oracle);
    CHECK(r.iterations == 1);
    CHECK(one.complete());
    CHECK(r.counts.expert == 1);
}

TEST_CASE("a self-similar pool is labeled with high agreement") {
    const auto pool_set = rgtest::synthetic_set(200, 33, 0.6, 0.0, "pool");
    const auto truth = truth_of(pool_set);
    ActiveSession s(seed_corpus(), rgtest::to_corpus(pool_set, "pool", false), test_config());
    SimulatedOracle oracle(truth);
    const auto r = s.run_to_completion(oracle, &truth);
    CHECK(s.complete());
    CHECK(r.counts.auto_labeled + r.counts.expert == 200);
    REQUIRE(r.auto_agreement.has_value());
    CHECK(*r.auto_agreement >= 95.0);
    CHECK(r.expert_queries <= 4 * r.iterations);
    CHECK(r.pool_spam + r.pool_ham == 200);
    REQUIRE(r.holdout_accuracy.has_value());
    CHECK(*r.holdout_accuracy >= 80.0);

    const auto exported = s.labeled_corpus();
    CHECK(ids_of(exported) == ids_of(rgtest::to_corpus(pool_set, "pool")));
    CHECK(exported.fully_labeled());
    CHECK(s.labeled_corpus(true).size() == 260);

    const auto seed_ids = ids_of(seed_corpus());
    const auto pool_ids = ids_of(rgtest::to_corpus(pool_set, "pool"));
    const auto replay = replay_events(seed_ids, pool_ids, s.events(), s.config());
    CHECK(replay.ok);
    CHECK(replay.iterations == r.iterations);
    CHECK(replay.final_pool.empty());
    CHECK(replay.pool_labels.size() == 200);
}

TEST_CASE("sessions are deterministic") {
    const auto pool_set = rgtest::synthetic_set(80, 34, 0.4, 0.0, "pool");
    const auto truth = truth_of(pool_set);
    auto run = [&] {
        ActiveSession s(seed_corpus(), rgtest::to_corpus(pool_set, "pool", false), test_config());
        SimulatedOracle oracle(truth, 0.1, 3);
        s.run_to_completion(oracle);
        nlohmann::json j = nlohmann::json::array();
        for (const auto& e : s.events()) j.push_back(e.to_json());
        return j.dump();
    };
    CHECK(run() == run());
}

TEST_CASE("simulated oracle flips depend only on seed and id") {
    const auto pool_set = rgtest::synthetic_set(200, 35, 0.4, 0.0, "pool");
    const auto truth = truth_of(pool_set);
    SimulatedOracle a(truth, 0.2, 9), b(truth, 0.2, 9);
    std::size_t flips = 0;
    for (std::size_t i = 0; i < pool_set.docs.size(); ++i) {
        PendingItem item;
        item.record.id = pool_set.docs[i].id;
        const auto x = a.label(item);
        PendingItem again = item;
        again.score = 0.5;
        CHECK(x == b.label(again));
        flips += *x != pool_set.labels[i];
    }
    CHECK(flips > 20);
    CHECK(flips < 60);
    CHECK(a.queries() == 200);
}

TEST_CASE("replay catches tampered logs") {
    const auto pool_set = rgtest::synthetic_set(60, 36, 0.4, 0.0, "pool");
    const auto truth = truth_of(pool_set);
    ActiveSession s(seed_corpus(), rgtest::to_corpus(pool_set, "pool", false), test_config());
    SimulatedOracle oracle(truth);
    s.run_to_completion(oracle);
    const auto seed_ids = ids_of(seed_corpus());
    const auto pool_ids = ids_of(rgtest::to_corpus(pool_set, "pool"));
    std::vector<ActiveEvent> events(s.events().begin(), s.events().end());
    REQUIRE(replay_events(seed_ids, pool_ids, events, s.config()).ok);

    auto swapped = events;
    std::swap(swapped[0], swapped[1]);
    CHECK_FALSE(replay_events(seed_ids, pool_ids, swapped, s.config()).ok);

    auto low_auto = events;
    low_auto[0].action = EventAction::Auto;
    low_auto[0].label = Label::Spam;
    low_auto[0].score = 0.05;
    CHECK_FALSE(replay_events(seed_ids, pool_ids, low_auto, s.config()).ok);

    auto dropped = events;
    dropped.erase(dropped.begin() + 3);
    CHECK_FALSE(replay_events(seed_ids, pool_ids, dropped, s.config()).ok);

    auto tight = s.config();
    tight.batch_size = 10;
    CHECK_FALSE(replay_events(seed_ids, pool_ids, events, tight).ok);
}

TEST_CASE("an oracle that gives up rolls the iteration back") {
    ActiveSession s(noisy_seed(), unknown_pool(7), test_config());
    GiveUpOracle quitter;
    const auto before = s.pool_ids();
    const auto out = s.run_iteration(quitter);
    CHECK(out.rolled_back);
    CHECK(s.pool_ids() == before);
    CHECK(s.events().empty());
    CHECK(s.iteration() == 0);
    CHECK(s.counts().expert == 0);
    CHECK_FALSE(s.open_plan());
    const auto r = s.run_to_completion(quitter);
    CHECK(r.rollbacks == 2);
    CHECK_FALSE(s.complete());
}

TEST_CASE("no expert budget still makes progress") {
    auto cfg = test_config();
    cfg.max_expert_per_iter = 0;
    ActiveSession s(noisy_seed(), unknown_pool(5), cfg);
    ConstOracle oracle;
    const auto r = s.run_to_completion(oracle);
    CHECK(s.complete());
    CHECK(r.forced_queries >= 1);
    CHECK(r.forced_queries <= r.iterations);
    for (const auto& e : s.events())
        if (e.action == EventAction::Expert) CHECK(e.forced);
    CHECK(replay_events(ids_of(noisy_seed()), ids_of(unknown_pool(5)), s.events(), cfg).ok);
}

TEST_CASE("split-phase submission rules") {
    ActiveSession s(noisy_seed(), unknown_pool(7), test_config());
    const auto* plan = s.begin_iteration();
    REQUIRE(plan);
    CHECK(s.begin_iteration() == plan);
    const auto pending = s.pending();
    REQUIRE(pending.size() == 4);
    CHECK(s.counts().pending == 4);
    CHECK(s.counts().pool_remaining == 3);
    CHECK_FALSE(s.ready_to_finish());
    CHECK_THROWS_AS(s.finish_iteration(), UsageError);

    const auto& id = pending[0].record.id;
    CHECK(s.submit(id, Label::Spam) == ActiveSession::SubmitResult::Accepted);
    CHECK(s.submit(id, Label::Spam) == ActiveSession::SubmitResult::Duplicate);
    CHECK(s.submit(id, Label::Ham) == ActiveSession::SubmitResult::Conflict);
    CHECK(s.submit("nope", Label::Ham) == ActiveSession::SubmitResult::Unknown);
    CHECK(s.pending().size() == 3);
    for (std::size_t i = 1; i < pending.size(); ++i) s.submit(pending[i].record.id, Label::Ham);
    REQUIRE(s.ready_to_finish());
    s.finish_iteration();
    CHECK(s.submit(id, Label::Spam) == ActiveSession::SubmitResult::Duplicate);
    CHECK(s.submit(id, Label::Ham) == ActiveSession::SubmitResult::Conflict);
    CHECK(s.submit(noisy_seed()[0].id, Label::Spam) == ActiveSession::SubmitResult::Conflict);
}

TEST_CASE("event log round-trips") {
    rgtest::TempDir tmp("events");
    const auto pool_set = rgtest::synthetic_set(40, 37, 0.4, 0.0, "pool");
    ActiveSession s(seed_corpus(), rgtest::to_corpus(pool_set, "pool", false), test_config());
    s.set_event_log(tmp / "log" / "events.jsonl");
    SimulatedOracle oracle(truth_of(pool_set));
    s.run_to_completion(oracle);
    const auto back = read_event_log(tmp / "log" / "events.jsonl");
    REQUIRE(back.size() == s.events().size());
    for (std::size_t i = 0; i < back.size(); ++i) CHECK(back[i].to_json() == s.events()[i].to_json());
    rgtest::write_file(tmp / "bad.jsonl", "{\"iter\": 1}\n");
    CHECK_THROWS_AS(read_event_log(tmp / "bad.jsonl"), DataError);
}

TEST_CASE("a session restores from its event log") {
    const auto pool_set = rgtest::synthetic_set(60, 38, 0.4, 0.1, "pool");
    const auto pool = rgtest::to_corpus(pool_set, "pool", false);
    ActiveSession full(seed_corpus(), pool, test_config());
    SimulatedOracle oracle(truth_of(pool_set), 0.1, 4);
    full.run_iteration(oracle);
    full.run_iteration(oracle);
    full.run_iteration(oracle);
    const std::vector<ActiveEvent> log(full.events().begin(), full.events().end());

    ActiveSession restored(seed_corpus(), pool, test_config());
    CHECK(restore_from_events(restored, log) == 3);
    CHECK(restored.pool_ids() == full.pool_ids());
    CHECK(restored.labeled_corpus().records() == full.labeled_corpus().records());
    full.run_to_completion(oracle);
    restored.run_to_completion(oracle);
    CHECK(restored.labeled_corpus().records() == full.labeled_corpus().records());

    auto tampered = log;
    tampered[0].record_id = "pool:59";
    ActiveSession other(seed_corpus(), pool, test_config());
    CHECK_THROWS_AS(restore_from_events(other, tampered), DataError);
}
