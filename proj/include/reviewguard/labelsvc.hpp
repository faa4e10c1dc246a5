#pragma once

#include <condition_variable>
#include <deque>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include <json.hpp>

#include "reviewguard/active.hpp"

namespace httplib {
class Server;
}

namespace reviewguard {

enum class SessionState { Running, AwaitingExpert, Complete, Aborted };
std::string_view to_string(SessionState s);

struct SessionView {
    std::string session_id;
    std::size_t iteration = 0;
    SessionCounts counts;
    std::optional<double> holdout_accuracy;
    SessionState state = SessionState::Running;
    std::string error; // set when Aborted

    nlohmann::json to_json() const;
};

struct LabelServiceOptions {
    // Used when a POST /session body names no corpus paths.
    std::optional<std::filesystem::path> seed_corpus;
    std::optional<std::filesystem::path> pool;
    ActiveConfig active;
    PrepConfig prep = default_prep_config();
    // Each session appends its events to <output_dir>/<id>.events.jsonl and
    // writes <output_dir>/<id>.labeled.jsonl on completion.
    std::optional<std::filesystem::path> output_dir;
    // Served at "/" when set.
    std::optional<std::filesystem::path> static_dir;
};

// HTTP facade over one ActiveSession. Handlers never touch the session;
// they post commands to a single worker thread and read the snapshot the
// worker publishes after every state change.
class LabelService {
public:
    explicit LabelService(LabelServiceOptions opts);
    ~LabelService();
    LabelService(const LabelService&) = delete;
    LabelService& operator=(const LabelService&) = delete;

    // Binds; port 0 picks a free one. Returns the bound port.
    int bind(const std::string& host, int port);
    void listen(); // blocks until stop()
    void stop();

    // Snapshot accessors, also used by the handlers.
    std::optional<SessionView> view() const;

private:
    struct Snapshot {
        SessionView view;
        nlohmann::json queue = nlohmann::json::array();
        nlohmann::json recent_events = nlohmann::json::array();
        std::string export_jsonl;
    };
    struct Command {
        std::function<void()> run;
    };

    void install_routes();
    void worker_loop();
    void post(std::function<void()> fn);
    bool advance(); // one worker step; false when idle
    void publish();
    std::shared_ptr<const Snapshot> snapshot() const;

    LabelServiceOptions opts_;
    std::unique_ptr<httplib::Server> server_;

    std::mutex queue_mu_;
    std::condition_variable queue_cv_;
    std::deque<Command> commands_;
    bool shutting_down_ = false;
    std::thread worker_;

    // Worker-owned.
    std::unique_ptr<ActiveSession> session_;
    std::string session_id_;
    std::size_t sessions_started_ = 0;
    std::string abort_reason_;

    mutable std::mutex snap_mu_;
    std::shared_ptr<const Snapshot> snap_;
};

} // namespace reviewguard
