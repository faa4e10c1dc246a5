#include "reviewguard/active.hpp"

#include "reviewguard/errors.hpp"
#include "reviewguard/eval.hpp"
#include "reviewguard/rng.hpp"
#include "reviewguard/split.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_set>

#include <fmt/core.h>

namespace reviewguard {

namespace {

constexpr std::uint64_t kHoldoutStream = 0x401d;

std::string_view label_name(Label l) { return to_string(l); }

} // namespace

PipelineConfig ActiveConfig::default_learner() {
    PipelineConfig p;
    p.kind = ClassifierKind::Svm;
    p.ngram = {1, 1};
    return p;
}

void ActiveConfig::validate() const {
    if (!(threshold > 0.0 && threshold < 1.0)) throw UsageError("active threshold must be in (0, 1)");
    if (batch_size < 1) throw UsageError("active batch size must be >= 1");
    if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) throw UsageError("holdout fraction must be in [0, 1)");
}

nlohmann::json ActiveConfig::to_json() const {
    return {{"batch_size", batch_size},
            {"threshold", threshold},
            {"max_expert_per_iter", max_expert_per_iter},
            {"retrain_every_iteration", retrain_every_iteration},
            {"holdout_fraction", holdout_fraction},
            {"learner", learner.to_json()},
            {"seed", seed}};
}

ActiveConfig ActiveConfig::from_json(const nlohmann::json& j) {
    ActiveConfig c;
    c.batch_size = j.value("batch_size", c.batch_size);
    c.threshold = j.value("threshold", c.threshold);
    c.max_expert_per_iter = j.value("max_expert_per_iter", c.max_expert_per_iter);
    c.retrain_every_iteration = j.value("retrain_every_iteration", c.retrain_every_iteration);
    c.holdout_fraction = j.value("holdout_fraction", c.holdout_fraction);
    if (j.contains("learner")) c.learner = PipelineConfig::from_json(j.at("learner"));
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
}

double probability_gap(double p_spam, double p_ham) { return std::abs(p_spam - p_ham); }

std::string_view to_string(Provenance p) {
    switch (p) {
    case Provenance::Seed: return "seed";
    case Provenance::Auto: return "auto";
    case Provenance::Expert: return "expert";
    }
    return "?";
}

std::string_view to_string(EventAction a) {
    switch (a) {
    case EventAction::Auto: return "auto";
    case EventAction::Expert: return "expert";
    case EventAction::Requeue: return "requeue";
    }
    return "?";
}

nlohmann::json PendingItem::to_json() const {
    return {{"record_id", record.id}, {"text", record.text}, {"score", score}, {"p_spam", p_spam}, {"iteration", iteration}};
}

nlohmann::json ActiveEvent::to_json() const {
    nlohmann::json j = {{"iter", iter},
                        {"record_id", record_id},
                        {"action", to_string(action)},
                        {"score", score},
                        {"p_spam", p_spam},
                        {"label", label ? nlohmann::json(label_name(*label)) : nlohmann::json(nullptr)}};
    if (forced) j["forced"] = true;
    return j;
}

ActiveEvent ActiveEvent::from_json(const nlohmann::json& j) {
    ActiveEvent e;
    e.iter = j.at("iter").get<std::size_t>();
    e.record_id = j.at("record_id").get<std::string>();
    const auto action = j.at("action").get<std::string>();
    if (action == "auto") e.action = EventAction::Auto;
    else if (action == "expert") e.action = EventAction::Expert;
    else if (action == "requeue") e.action = EventAction::Requeue;
    else throw DataError(fmt::format("unknown event action '{}'", action));
    e.score = j.at("score").get<double>();
    e.p_spam = j.at("p_spam").get<double>();
    if (j.contains("label") && !j.at("label").is_null()) e.label = parse_label(j.at("label").get<std::string>());
    e.forced = j.value("forced", false);
    return e;
}

SimulatedOracle::SimulatedOracle(std::unordered_map<std::string, Label> truth, double flip_rate, std::uint64_t seed)
    : truth_(std::move(truth)), flip_rate_(flip_rate), seed_(seed) {
    if (!(flip_rate >= 0.0 && flip_rate <= 1.0)) throw UsageError("flip rate must be in [0, 1]");
}

std::optional<Label> SimulatedOracle::label(const PendingItem& item) {
    const auto it = truth_.find(item.record.id);
    if (it == truth_.end()) throw DataError(fmt::format("no ground truth for record '{}'", item.record.id));
    ++queries_;
    if (flip_rate_ > 0.0) {
        Rng r(derive_seed(seed_, fnv1a(item.record.id)));
        if (r.bernoulli(flip_rate_)) return it->second == Label::Spam ? Label::Ham : Label::Spam;
    }
    return it->second;
}

nlohmann::json SessionCounts::to_json() const {
    return {{"seed", seed}, {"auto", auto_labeled}, {"expert", expert}, {"pool_remaining", pool_remaining}, {"pending", pending}};
}

nlohmann::json SessionReport::to_json() const {
    return {{"counts", counts.to_json()},
            {"iterations", iterations},
            {"expert_queries", expert_queries},
            {"forced_queries", forced_queries},
            {"rollbacks", rollbacks},
            {"pool_spam", pool_spam},
            {"pool_ham", pool_ham},
            {"auto_agreement", auto_agreement ? nlohmann::json(*auto_agreement) : nlohmann::json(nullptr)},
            {"holdout_accuracy", holdout_accuracy ? nlohmann::json(*holdout_accuracy) : nlohmann::json(nullptr)}};
}

// ------------------------------------------------------------------ session

ActiveSession::ActiveSession(const Corpus& seed, const Corpus& pool, ActiveConfig cfg, PrepConfig prep)
    : cfg_(std::move(cfg)), prep_(std::move(prep)) {
    cfg_.validate();
    if (seed.empty()) throw DataError("active learning needs a non-empty seed corpus");
    if (!seed.fully_labeled()) throw DataError("every seed record must be labeled");
    if (seed.count(Label::Spam) == 0 || seed.count(Label::Ham) == 0)
        throw DataError("the seed corpus must contain both classes");

    for (const auto& r : seed.records()) {
        records_.emplace(r.id, r);
        docs_.emplace(r.id, preprocess(r.text, prep_, r.id));
        seed_ids_.push_back(r.id);
        labeled_index_.emplace(r.id, labeled_.size());
        labeled_.push_back({r, *r.label, Provenance::Seed, 0, 0.0, 0.0});
    }
    for (const auto& r : pool.records()) {
        if (records_.count(r.id)) throw DataError(fmt::format("record id '{}' appears in both seed and pool", r.id));
        ReviewRecord unlabeled = r;
        unlabeled.label.reset();
        records_.emplace(r.id, unlabeled);
        docs_.emplace(r.id, preprocess(r.text, prep_, r.id));
        pool_order_.push_back(r.id);
        pool_.push_back(r.id);
    }

    if (cfg_.holdout_fraction > 0.0 && seed.size() >= 10) {
        std::vector<Label> labels;
        for (const auto& r : seed.records()) labels.push_back(*r.label);
        const auto split = holdout_split(labels, cfg_.holdout_fraction, derive_seed(cfg_.seed, kHoldoutStream));
        for (auto i : split.test) holdout_ids_.push_back(seed.records()[i].id);
    }
    retrain();
}

std::vector<TokenizedDoc> ActiveSession::labeled_docs(std::vector<Label>& labels) const {
    std::vector<TokenizedDoc> docs;
    for (const auto& item : labeled_) {
        docs.push_back(docs_.at(item.record.id));
        labels.push_back(item.label);
    }
    return docs;
}

void ActiveSession::retrain() {
    PipelineConfig lc = cfg_.learner;
    lc.seed = derive_seed(cfg_.seed, iteration_);
    std::vector<Label> labels;
    const auto docs = labeled_docs(labels);
    learner_ = fit_pipeline(lc, docs, labels).model;

    if (holdout_ids_.empty()) return;
    // Shadow learner without the held-out seed records.
    const std::unordered_set<std::string> held(holdout_ids_.begin(), holdout_ids_.end());
    std::vector<TokenizedDoc> train_docs, test_docs;
    std::vector<Label> train_y, test_y;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        const bool h = held.count(docs[i].id) > 0;
        (h ? test_docs : train_docs).push_back(docs[i]);
        (h ? test_y : train_y).push_back(labels[i]);
    }
    const auto shadow = fit_pipeline(lc, train_docs, train_y).model;
    holdout_accuracy_ = evaluate(*shadow, test_docs, test_y).accuracy();
}

const IterationPlan* ActiveSession::begin_iteration() {
    if (plan_) return &*plan_;
    if (pool_.empty()) return nullptr;
    IterationPlan plan;
    plan.iteration = iteration_ + 1;
    const std::size_t n = std::min(cfg_.batch_size, pool_.size());
    std::vector<TokenizedDoc> docs;
    for (std::size_t i = 0; i < n; ++i) docs.push_back(docs_.at(pool_[i]));
    const auto probs = learner_->predict_proba(docs);

    std::vector<std::size_t> low;
    for (std::size_t i = 0; i < n; ++i) {
        PendingItem item{records_.at(pool_[i]), probability_gap(probs[i][0], probs[i][1]), probs[i][0], plan.iteration,
                         i};
        (item.score > cfg_.threshold ? plan.auto_items : low).push_back(i);
        plan.batch.push_back(std::move(item));
    }
    std::stable_sort(low.begin(), low.end(),
                     [&](std::size_t a, std::size_t b) { return plan.batch[a].score < plan.batch[b].score; });
    std::size_t take = std::min(cfg_.max_expert_per_iter, low.size());
    if (take == 0 && plan.auto_items.empty() && !low.empty()) {
        take = 1;
        plan.forced = true;
    }
    plan.expert_items.assign(low.begin(), low.begin() + static_cast<std::ptrdiff_t>(take));
    plan.requeue_items.assign(low.begin() + static_cast<std::ptrdiff_t>(take), low.end());
    std::sort(plan.requeue_items.begin(), plan.requeue_items.end());
    plan_ = std::move(plan);
    return &*plan_;
}

ActiveSession::SubmitResult ActiveSession::submit(const std::string& record_id, Label label) {
    if (plan_) {
        for (auto i : plan_->expert_items) {
            if (plan_->batch[i].record.id != record_id) continue;
            const auto it = plan_->answers.find(record_id);
            if (it == plan_->answers.end()) {
                plan_->answers.emplace(record_id, label);
                return SubmitResult::Accepted;
            }
            return it->second == label ? SubmitResult::Duplicate : SubmitResult::Conflict;
        }
    }
    const auto it = labeled_index_.find(record_id);
    if (it != labeled_index_.end()) {
        const auto& item = labeled_[it->second];
        return item.provenance == Provenance::Expert && item.label == label ? SubmitResult::Duplicate
                                                                             : SubmitResult::Conflict;
    }
    return SubmitResult::Unknown;
}

bool ActiveSession::ready_to_finish() const {
    return plan_ && plan_->answers.size() == plan_->expert_items.size();
}

IterationOutcome ActiveSession::finish_iteration() {
    if (!plan_) throw UsageError("no iteration is open");
    if (!ready_to_finish()) throw UsageError("expert labels are still missing for this iteration");
    IterationPlan plan = std::move(*plan_);
    plan_.reset();

    std::vector<int> role(plan.batch.size(), 0); // 0 auto, 1 expert, 2 requeue
    for (auto i : plan.expert_items) role[i] = 1;
    for (auto i : plan.requeue_items) role[i] = 2;
    for (std::size_t i = 0; i < plan.batch.size(); ++i) pool_.pop_front();

    IterationOutcome out;
    out.iteration = plan.iteration;
    out.forced = plan.forced;
    std::vector<ActiveEvent> fresh;
    for (std::size_t i = 0; i < plan.batch.size(); ++i) {
        const auto& item = plan.batch[i];
        ActiveEvent e{plan.iteration, item.record.id, EventAction::Auto, item.score, item.p_spam, std::nullopt, false};
        if (role[i] == 2) {
            e.action = EventAction::Requeue;
            pool_.push_back(item.record.id);
            ++out.requeued;
        } else {
            Label l;
            Provenance prov;
            if (role[i] == 1) {
                e.action = EventAction::Expert;
                e.forced = plan.forced;
                l = plan.answers.at(item.record.id);
                prov = Provenance::Expert;
                ++out.expert_labeled;
            } else {
                l = item.p_spam > 1.0 - item.p_spam ? Label::Spam : Label::Ham;
                prov = Provenance::Auto;
                ++out.auto_labeled;
            }
            e.label = l;
            ReviewRecord rec = item.record;
            rec.label = l;
            labeled_index_.emplace(rec.id, labeled_.size());
            labeled_.push_back({std::move(rec), l, prov, plan.iteration, item.score, item.p_spam});
        }
        fresh.push_back(e);
    }
    iteration_ = plan.iteration;
    expert_queries_ += out.expert_labeled;
    if (plan.forced) ++forced_;

    if (event_log_) {
        std::ofstream log(*event_log_, std::ios::binary | std::ios::app);
        for (const auto& e : fresh) log << e.to_json().dump() << '\n';
        if (!log) throw DataError(fmt::format("cannot append to event log {}", event_log_->string()));
    }
    events_.insert(events_.end(), fresh.begin(), fresh.end());
    if (cfg_.retrain_every_iteration) retrain();
    return out;
}

void ActiveSession::abort_iteration() {
    if (plan_) {
        plan_.reset();
        ++rollbacks_;
    }
}

IterationOutcome ActiveSession::run_iteration(Oracle& oracle) {
    const IterationPlan* plan = begin_iteration();
    if (!plan) {
        IterationOutcome noop;
        noop.iteration = iteration_;
        noop.was_noop = true;
        return noop;
    }
    const auto experts = plan->expert_items;
    for (auto i : experts) {
        const PendingItem item = plan_->batch[i];
        std::optional<Label> answer;
        try {
            answer = oracle.label(item);
        } catch (...) {
            abort_iteration();
            throw;
        }
        if (!answer) {
            abort_iteration();
            IterationOutcome rolled;
            rolled.iteration = iteration_ + 1;
            rolled.rolled_back = true;
            return rolled;
        }
        submit(item.record.id, *answer);
    }
    return finish_iteration();
}

SessionReport ActiveSession::run_to_completion(Oracle& oracle, const std::unordered_map<std::string, Label>* truth) {
    while (!complete()) {
        if (run_iteration(oracle).rolled_back) break;
    }
    SessionReport r;
    r.counts = counts();
    r.iterations = iteration_;
    r.expert_queries = expert_queries_;
    r.forced_queries = forced_;
    r.rollbacks = rollbacks_;
    r.holdout_accuracy = holdout_accuracy_;
    std::size_t autos = 0, agree = 0;
    for (const auto& item : labeled_) {
        if (item.provenance == Provenance::Seed) continue;
        (item.label == Label::Spam ? r.pool_spam : r.pool_ham)++;
        if (item.provenance == Provenance::Auto && truth) {
            const auto it = truth->find(item.record.id);
            if (it == truth->end()) continue;
            ++autos;
            agree += it->second == item.label;
        }
    }
    if (truth && autos > 0) r.auto_agreement = 100.0 * static_cast<double>(agree) / static_cast<double>(autos);
    return r;
}

std::vector<PendingItem> ActiveSession::pending() const {
    std::vector<PendingItem> out;
    if (!plan_) return out;
    for (auto i : plan_->expert_items)
        if (!plan_->answers.count(plan_->batch[i].record.id)) out.push_back(plan_->batch[i]);
    return out;
}

SessionCounts ActiveSession::counts() const {
    SessionCounts c;
    for (const auto& item : labeled_) {
        switch (item.provenance) {
        case Provenance::Seed: ++c.seed; break;
        case Provenance::Auto: ++c.auto_labeled; break;
        case Provenance::Expert: ++c.expert; break;
        }
    }
    c.pending = plan_ ? plan_->expert_items.size() - plan_->answers.size() : 0;
    c.pool_remaining = pool_.size() - c.pending;
    return c;
}

Corpus ActiveSession::labeled_corpus(bool include_seed) const {
    Corpus out;
    auto add = [&](const LabeledItem& item) {
        ReviewRecord r = item.record;
        r.label = item.label;
        r.meta["provenance"] = std::string(to_string(item.provenance));
        if (item.provenance != Provenance::Seed) r.meta["al_iteration"] = std::to_string(item.iteration);
        out.add(std::move(r));
    };
    if (include_seed)
        for (const auto& id : seed_ids_) add(labeled_[labeled_index_.at(id)]);
    for (const auto& id : pool_order_) {
        const auto it = labeled_index_.find(id);
        if (it != labeled_index_.end()) add(labeled_[it->second]);
    }
    return out;
}

void ActiveSession::set_event_log(std::filesystem::path path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream log(path, std::ios::binary | std::ios::trunc);
    for (const auto& e : events_) log << e.to_json().dump() << '\n';
    if (!log) throw DataError(fmt::format("cannot write event log {}", path.string()));
    event_log_ = std::move(path);
}

// ------------------------------------------------------------------- replay

ReplayResult replay_events(std::span<const std::string> seed_ids, std::span<const std::string> pool_ids,
                           std::span<const ActiveEvent> events, const ActiveConfig& cfg) {
    ReplayResult r;
    auto fail = [&](std::string msg) {
        r.ok = false;
        r.violations.push_back(std::move(msg));
    };
    std::unordered_set<std::string> labeled(seed_ids.begin(), seed_ids.end());
    std::deque<std::string> pool(pool_ids.begin(), pool_ids.end());
    const std::size_t total = labeled.size() + pool.size();

    std::size_t pos = 0, expected_iter = 1;
    while (pos < events.size()) {
        const std::size_t iter = events[pos].iter;
        std::size_t end = pos;
        while (end < events.size() && events[end].iter == iter) ++end;
        if (iter != expected_iter) fail(fmt::format("iteration {} follows iteration {}", iter, expected_iter - 1));
        const std::size_t n = end - pos;
        const std::size_t expected_n = std::min(cfg.batch_size, pool.size());
        if (n != expected_n) fail(fmt::format("iteration {} has {} events for a batch of {}", iter, n, expected_n));

        std::size_t experts = 0, autos = 0;
        bool forced = false;
        std::vector<std::string> requeue;
        for (std::size_t k = 0; k < n; ++k) {
            const auto& e = events[pos + k];
            if (pool.empty() || pool.front() != e.record_id) {
                fail(fmt::format("iteration {}: record '{}' is not at the head of the pool", iter, e.record_id));
                auto it = std::find(pool.begin(), pool.end(), e.record_id);
                if (it != pool.end()) pool.erase(it);
            } else {
                pool.pop_front();
            }
            switch (e.action) {
            case EventAction::Auto:
                ++autos;
                if (!(e.score > cfg.threshold))
                    fail(fmt::format("iteration {}: auto label for '{}' has score {} <= threshold", iter, e.record_id, e.score));
                if (!e.label) fail(fmt::format("iteration {}: auto event for '{}' lacks a label", iter, e.record_id));
                break;
            case EventAction::Expert:
                ++experts;
                forced = forced || e.forced;
                if (e.score > cfg.threshold)
                    fail(fmt::format("iteration {}: expert query for '{}' has score {} > threshold", iter, e.record_id, e.score));
                if (!e.label) fail(fmt::format("iteration {}: expert event for '{}' lacks a label", iter, e.record_id));
                break;
            case EventAction::Requeue:
                if (e.score > cfg.threshold)
                    fail(fmt::format("iteration {}: requeued '{}' has score {} > threshold", iter, e.record_id, e.score));
                requeue.push_back(e.record_id);
                break;
            }
            if (e.action != EventAction::Requeue) {
                if (!labeled.insert(e.record_id).second)
                    fail(fmt::format("iteration {}: '{}' labeled twice", iter, e.record_id));
                if (e.label) r.pool_labels[e.record_id] = *e.label;
            }
        }
        const std::size_t cap = forced ? 1 : cfg.max_expert_per_iter;
        if (experts > cap) fail(fmt::format("iteration {}: {} expert queries exceed the cap of {}", iter, experts, cap));
        if (forced && (autos > 0 || cfg.max_expert_per_iter > 0))
            fail(fmt::format("iteration {}: forced query without a livelock", iter));
        if (autos + experts == 0) fail(fmt::format("iteration {}: no progress", iter));
        for (auto& id : requeue) pool.push_back(std::move(id));

        std::unordered_set<std::string> in_pool(pool.begin(), pool.end());
        for (const auto& id : in_pool)
            if (labeled.count(id)) fail(fmt::format("after iteration {}: '{}' is both labeled and pooled", iter, id));
        if (in_pool.size() != pool.size()) fail(fmt::format("after iteration {}: duplicate pool entries", iter));
        if (labeled.size() + pool.size() != total)
            fail(fmt::format("after iteration {}: labeled + pool covers {} of {} ids", iter, labeled.size() + pool.size(), total));

        ++r.iterations;
        expected_iter = iter + 1;
        pos = end;
    }
    r.final_pool.assign(pool.begin(), pool.end());
    return r;
}

std::vector<ActiveEvent> read_event_log(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(fmt::format("cannot open event log {}", path.string()));
    std::vector<ActiveEvent> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty()) continue;
        try {
            out.push_back(ActiveEvent::from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw DataError(fmt::format("{}:{}: malformed event: {}", path.string(), n, e.what()));
        }
    }
    return out;
}

namespace {

class LogOracle final : public Oracle {
public:
    explicit LogOracle(std::span<const ActiveEvent> events) {
        for (const auto& e : events)
            if (e.action == EventAction::Expert && e.label) answers_.emplace(e.record_id, *e.label);
    }
    std::optional<Label> label(const PendingItem& item) override {
        const auto it = answers_.find(item.record.id);
        if (it == answers_.end()) return std::nullopt;
        return it->second;
    }

private:
    std::unordered_map<std::string, Label> answers_;
};

} // namespace

std::size_t restore_from_events(ActiveSession& session, std::span<const ActiveEvent> events) {
    if (session.iteration() != 0 || !session.events().empty())
        throw UsageError("events can only be restored into a fresh session");
    LogOracle oracle(events);
    std::size_t restored = 0;
    while (session.events().size() < events.size()) {
        const std::size_t before = session.events().size();
        const auto out = session.run_iteration(oracle);
        if (out.was_noop || out.rolled_back)
            throw DataError(fmt::format("event log diverges from the session at iteration {}", out.iteration));
        const auto fresh = session.events().subspan(before);
        for (std::size_t i = 0; i < fresh.size(); ++i) {
            const auto* logged = before + i < events.size() ? &events[before + i] : nullptr;
            if (!logged || logged->iter != fresh[i].iter || logged->record_id != fresh[i].record_id ||
                logged->action != fresh[i].action || logged->label != fresh[i].label)
                throw DataError(fmt::format("event log diverges from the session at iteration {}", out.iteration));
        }
        ++restored;
    }
    return restored;
}

} // namespace reviewguard
