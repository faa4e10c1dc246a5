#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "reviewguard/corpus.hpp"
#include "reviewguard/pipeline.hpp"
#include "reviewguard/textprep.hpp"

namespace reviewguard {

struct ActiveConfig {
    std::size_t batch_size = 20;
    double threshold = 0.20;
    std::size_t max_expert_per_iter = 4;
    bool retrain_every_iteration = true;
    // Share of the seed set held out to report learner accuracy; 0 disables.
    double holdout_fraction = 0.1;
    PipelineConfig learner = default_learner();
    std::uint64_t seed = 1;

    void validate() const;
    nlohmann::json to_json() const;
    static ActiveConfig from_json(const nlohmann::json& j);
    static PipelineConfig default_learner(); // calibrated SVM on unigrams
};

// |p_spam - p_ham|
double probability_gap(double p_spam, double p_ham);

enum class Provenance { Seed, Auto, Expert };
std::string_view to_string(Provenance p);

struct LabeledItem {
    ReviewRecord record;
    Label label = Label::Ham;
    Provenance provenance = Provenance::Seed;
    std::size_t iteration = 0; // 0 for seed records
    double score = 0.0;
    double p_spam = 0.0;
};

struct PendingItem {
    ReviewRecord record;
    double score = 0.0;
    double p_spam = 0.0;
    std::size_t iteration = 0;
    std::size_t pool_position = 0; // position within the drawn batch

    nlohmann::json to_json() const;
};

enum class EventAction { Auto, Expert, Requeue };
std::string_view to_string(EventAction a);

struct ActiveEvent {
    std::size_t iter = 0;
    std::string record_id;
    EventAction action = EventAction::Auto;
    double score = 0.0;
    double p_spam = 0.0;
    std::optional<Label> label; // absent for requeue
    bool forced = false;        // livelock override

    nlohmann::json to_json() const;
    static ActiveEvent from_json(const nlohmann::json& j);
};

// Returns the expert's label, or nullopt if the expert gave up; the
// iteration is then rolled back.
class Oracle {
public:
    virtual ~Oracle() = default;
    virtual std::optional<Label> label(const PendingItem& item) = 0;
};

// Answers from a ground-truth map. With flip_rate > 0 some answers are
// inverted; whether a record's answer flips depends only on (seed, id).
class SimulatedOracle final : public Oracle {
public:
    explicit SimulatedOracle(std::unordered_map<std::string, Label> truth, double flip_rate = 0.0,
                             std::uint64_t seed = 1);
    std::optional<Label> label(const PendingItem& item) override;
    std::size_t queries() const { return queries_; }

private:
    std::unordered_map<std::string, Label> truth_;
    double flip_rate_;
    std::uint64_t seed_;
    std::size_t queries_ = 0;
};

// One drawn batch awaiting expert answers. Nothing is committed until
// finish_iteration.
struct IterationPlan {
    std::size_t iteration = 0;
    std::vector<PendingItem> batch; // all drawn records, in pool order
    std::vector<std::size_t> auto_items;
    std::vector<std::size_t> expert_items;
    std::vector<std::size_t> requeue_items;
    bool forced = false;
    std::map<std::string, Label> answers;
};

struct IterationOutcome {
    std::size_t iteration = 0;
    std::size_t auto_labeled = 0;
    std::size_t expert_labeled = 0;
    std::size_t requeued = 0;
    bool forced = false;
    bool rolled_back = false;
    bool was_noop = false; // pool was already empty
};

struct SessionCounts {
    // pending: expert items still waiting for an answer; they are not counted
    // in pool_remaining.
    std::size_t seed = 0, auto_labeled = 0, expert = 0, pool_remaining = 0, pending = 0;
    nlohmann::json to_json() const;
};

struct SessionReport {
    SessionCounts counts;
    std::size_t iterations = 0;
    std::size_t expert_queries = 0;
    std::size_t forced_queries = 0;
    std::size_t rollbacks = 0;
    std::size_t pool_spam = 0, pool_ham = 0;
    std::optional<double> auto_agreement; // percent, when ground truth is known
    std::optional<double> holdout_accuracy;

    nlohmann::json to_json() const;
};

// The active-learning loop. Single-owner: callers serialize access.
class ActiveSession {
public:
    // `seed` must be fully labeled; pool labels, if any, are ignored.
    ActiveSession(const Corpus& seed, const Corpus& pool, ActiveConfig cfg, PrepConfig prep = default_prep_config());

    bool complete() const { return pool_.empty() && !plan_; }
    std::size_t iteration() const { return iteration_; }
    const ActiveConfig& config() const { return cfg_; }

    // Runs one whole iteration, asking `oracle` for the expert items.
    IterationOutcome run_iteration(Oracle& oracle);
    SessionReport run_to_completion(Oracle& oracle,
                                    const std::unordered_map<std::string, Label>* truth = nullptr);

    // Split-phase form used by the labeling service.
    // Draws and scores the next batch; returns the open plan (or nullptr if
    // the pool is empty). Calling it with a plan open returns that plan.
    const IterationPlan* begin_iteration();
    const IterationPlan* open_plan() const { return plan_ ? &*plan_ : nullptr; }
    enum class SubmitResult { Accepted, Unknown, Conflict, Duplicate };
    // Duplicate: same label submitted again. Conflict: a different label, or
    // the record is already committed.
    SubmitResult submit(const std::string& record_id, Label label);
    bool ready_to_finish() const;
    IterationOutcome finish_iteration();
    void abort_iteration();

    std::vector<PendingItem> pending() const; // unanswered expert items
    SessionCounts counts() const;
    std::span<const LabeledItem> labeled() const { return labeled_; }
    const std::deque<std::string>& pool_ids() const { return pool_; }
    std::span<const ActiveEvent> events() const { return events_; }
    std::optional<double> holdout_accuracy() const { return holdout_accuracy_; }
    std::size_t expert_queries() const { return expert_queries_; }

    // Pool records labeled so far (or everything, seed first), in original
    // pool order, with provenance recorded in meta.
    Corpus labeled_corpus(bool include_seed = false) const;

    // Appends each committed event to `path` as one JSON line.
    void set_event_log(std::filesystem::path path);

private:
    void retrain();
    std::vector<TokenizedDoc> labeled_docs(std::vector<Label>& labels) const;

    ActiveConfig cfg_;
    PrepConfig prep_;
    std::unordered_map<std::string, ReviewRecord> records_;
    std::unordered_map<std::string, TokenizedDoc> docs_;
    std::vector<std::string> pool_order_; // original pool order for export
    std::vector<std::string> seed_ids_;
    std::deque<std::string> pool_;
    std::vector<LabeledItem> labeled_;
    std::unordered_map<std::string, std::size_t> labeled_index_;
    std::vector<ActiveEvent> events_;
    std::optional<IterationPlan> plan_;
    std::unique_ptr<TextClassifier> learner_;
    std::optional<double> holdout_accuracy_;
    std::vector<std::string> holdout_ids_;
    std::size_t iteration_ = 0;
    std::size_t expert_queries_ = 0;
    std::size_t forced_ = 0;
    std::size_t rollbacks_ = 0;
    std::optional<std::filesystem::path> event_log_;
};

// Checks a committed event log against the session rules: batches are drawn
// from the pool head in order, every drawn record gets exactly one event,
// auto scores exceed the threshold, expert scores do not (unless forced),
// expert counts stay within the cap, and labeled + pool partitions the ids
// after every iteration.
struct ReplayResult {
    bool ok = true;
    std::vector<std::string> violations;
    std::size_t iterations = 0;
    std::vector<std::string> final_pool;
    std::map<std::string, Label> pool_labels;
};

ReplayResult replay_events(std::span<const std::string> seed_ids, std::span<const std::string> pool_ids,
                           std::span<const ActiveEvent> events, const ActiveConfig& cfg);

std::vector<ActiveEvent> read_event_log(const std::filesystem::path& path);

// Re-runs a fresh session against a committed event log, answering expert
// items from the log. Throws DataError if the session draws anything the log
// does not record. Returns the number of iterations restored.
std::size_t restore_from_events(ActiveSession& session, std::span<const ActiveEvent> events);

} // namespace reviewguard
