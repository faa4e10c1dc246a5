#include "reviewguard/labelsvc.hpp"

#include "reviewguard/errors.hpp"

#include <fstream>
#include <future>

#include <fmt/core.h>
#include <httplib.h>

namespace reviewguard {

namespace {

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view code, std::string_view message) {
    send_json(res, status, {{"error", {{"code", code}, {"message", message}}}});
}

constexpr const char* kIndexPage =
    "<!doctype html><meta charset=\"utf-8\"><title>reviewguard labeling</title>"
    "<p>Labeling API at <code>/api/v1/</code>. Start the server with <code>--static-dir</code> to serve the UI.</p>";

} // namespace

std::string_view to_string(SessionState s) {
    switch (s) {
    case SessionState::Running: return "Running";
    case SessionState::AwaitingExpert: return "AwaitingExpert";
    case SessionState::Complete: return "Complete";
    case SessionState::Aborted: return "Aborted";
    }
    return "?";
}

nlohmann::json SessionView::to_json() const {
    nlohmann::json j = {{"session_id", session_id},
                        {"iteration", iteration},
                        {"counts", counts.to_json()},
                        {"holdout_accuracy", holdout_accuracy ? nlohmann::json(*holdout_accuracy) : nlohmann::json(nullptr)},
                        {"state", to_string(state)}};
    if (!error.empty()) j["error"] = error;
    return j;
}

LabelService::LabelService(LabelServiceOptions opts)
    : opts_(std::move(opts)), server_(std::make_unique<httplib::Server>()) {
    install_routes();
    worker_ = std::thread([this] { worker_loop(); });
}

LabelService::~LabelService() {
    stop();
    {
        std::lock_guard lk(queue_mu_);
        shutting_down_ = true;
    }
    queue_cv_.notify_all();
    if (worker_.joinable()) worker_.join();
}

int LabelService::bind(const std::string& host, int port) {
    if (port == 0) {
        const int p = server_->bind_to_any_port(host);
        if (p < 0) throw DataError(fmt::format("cannot bind {}", host));
        return p;
    }
    if (!server_->bind_to_port(host, port)) throw DataError(fmt::format("cannot bind {}:{}", host, port));
    return port;
}

void LabelService::listen() { server_->listen_after_bind(); }

void LabelService::stop() {
    if (server_) server_->stop();
}

void LabelService::post(std::function<void()> fn) {
    {
        std::lock_guard lk(queue_mu_);
        commands_.push_back({std::move(fn)});
    }
    queue_cv_.notify_one();
}

std::shared_ptr<const LabelService::Snapshot> LabelService::snapshot() const {
    std::lock_guard lk(snap_mu_);
    return snap_;
}

std::optional<SessionView> LabelService::view() const {
    const auto s = snapshot();
    if (!s) return std::nullopt;
    return s->view;
}

void LabelService::publish() {
    auto snap = std::make_shared<Snapshot>();
    SessionView& v = snap->view;
    v.session_id = session_id_;
    v.iteration = session_->iteration();
    v.counts = session_->counts();
    v.holdout_accuracy = session_->holdout_accuracy();
    if (!abort_reason_.empty()) {
        v.state = SessionState::Aborted;
        v.error = abort_reason_;
    } else if (session_->complete()) {
        v.state = SessionState::Complete;
    } else if (v.counts.pending > 0) {
        v.state = SessionState::AwaitingExpert;
    } else {
        v.state = SessionState::Running;
    }
    for (const auto& item : session_->pending()) snap->queue.push_back(item.to_json());
    const auto events = session_->events();
    for (std::size_t i = events.size() > 10 ? events.size() - 10 : 0; i < events.size(); ++i)
        snap->recent_events.push_back(events[i].to_json());
    if (v.state == SessionState::Complete || v.state == SessionState::Aborted) {
        const auto labeled = session_->labeled_corpus();
        for (const auto& r : labeled.records()) {
            snap->export_jsonl += record_to_json_line(r);
            snap->export_jsonl += '\n';
        }
    }
    std::lock_guard lk(snap_mu_);
    snap_ = std::move(snap);
}

bool LabelService::advance() {
    if (!session_ || !abort_reason_.empty() || session_->complete()) return false;
    try {
        if (const auto* plan = session_->open_plan()) {
            if (!session_->ready_to_finish()) return false;
            session_->finish_iteration();
        } else {
            plan = session_->begin_iteration();
            if (plan && plan->expert_items.empty()) session_->finish_iteration();
        }
        if (session_->complete() && opts_.output_dir)
            export_jsonl(session_->labeled_corpus(), *opts_.output_dir / (session_id_ + ".labeled.jsonl"), true);
    } catch (const std::exception& e) {
        abort_reason_ = e.what();
    }
    publish();
    return true;
}

void LabelService::worker_loop() {
    for (;;) {
        std::optional<Command> cmd;
        {
            std::lock_guard lk(queue_mu_);
            if (shutting_down_) return;
            if (!commands_.empty()) {
                cmd = std::move(commands_.front());
                commands_.pop_front();
            }
        }
        if (cmd) {
            cmd->run();
            continue;
        }
        if (advance()) continue;
        std::unique_lock lk(queue_mu_);
        queue_cv_.wait(lk, [this] { return shutting_down_ || !commands_.empty(); });
    }
}

void LabelService::install_routes() {
    auto& srv = *server_;
    srv.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        std::string what = "internal error";
        try {
            std::rethrow_exception(ep);
        } catch (const std::exception& e) {
            what = e.what();
        } catch (...) {
        }
        send_error(res, 500, "internal", what);
    });

    srv.Post("/api/v1/session", [this](const httplib::Request& req, httplib::Response& res) {
        nlohmann::json body = nlohmann::json::object();
        if (!req.body.empty()) {
            body = nlohmann::json::parse(req.body, nullptr, false);
            if (body.is_discarded() || !body.is_object()) return send_error(res, 400, "bad_json", "body must be a JSON object");
        }
        struct Result {
            int status;
            nlohmann::json body;
        };
        std::promise<Result> done;
        auto fut = done.get_future();
        post([this, body, &done] {
            auto fail = [&](int status, std::string_view code, std::string_view msg) {
                done.set_value({status, {{"error", {{"code", code}, {"message", msg}}}}});
            };
            if (session_ && abort_reason_.empty() && !session_->complete())
                return fail(409, "session_running", "a session is already running");
            std::optional<std::filesystem::path> seed_path = opts_.seed_corpus, pool_path = opts_.pool;
            ActiveConfig cfg = opts_.active;
            std::vector<ActiveEvent> resume;
            try {
                if (body.contains("seed_corpus")) seed_path = body.at("seed_corpus").get<std::string>();
                if (body.contains("pool")) pool_path = body.at("pool").get<std::string>();
                if (body.contains("active")) {
                    nlohmann::json merged = cfg.to_json();
                    merged.merge_patch(body.at("active"));
                    cfg = ActiveConfig::from_json(merged);
                }
                if (body.contains("resume_from")) resume = read_event_log(body.at("resume_from").get<std::string>());
            } catch (const nlohmann::json::exception& e) {
                return fail(400, "bad_config", e.what());
            } catch (const UsageError& e) {
                return fail(400, "bad_config", e.what());
            } catch (const DataError& e) {
                return fail(400, "bad_event_log", e.what());
            }
            if (!seed_path || !pool_path) return fail(400, "missing_corpus", "seed_corpus and pool paths are required");
            try {
                auto session = std::make_unique<ActiveSession>(read_corpus(*seed_path), read_corpus(*pool_path), cfg,
                                                               opts_.prep);
                if (!resume.empty()) restore_from_events(*session, resume);
                const std::string id = fmt::format("s{}", ++sessions_started_);
                if (opts_.output_dir) session->set_event_log(*opts_.output_dir / (id + ".events.jsonl"));
                session_ = std::move(session);
                session_id_ = id;
                abort_reason_.clear();
            } catch (const DataError& e) {
                return fail(400, "bad_corpus", e.what());
            } catch (const UsageError& e) {
                return fail(400, "bad_config", e.what());
            } catch (const std::exception& e) {
                return fail(500, "internal", e.what());
            }
            publish();
            done.set_value({201, snapshot()->view.to_json()});
        });
        auto r = fut.get();
        send_json(res, r.status, r.body);
    });

    srv.Get("/api/v1/session", [this](const httplib::Request&, httplib::Response& res) {
        const auto s = snapshot();
        if (!s) return send_error(res, 404, "no_session", "no session has been started");
        send_json(res, 200, s->view.to_json());
    });

    srv.Get("/api/v1/queue", [this](const httplib::Request&, httplib::Response& res) {
        const auto s = snapshot();
        if (!s) return send_error(res, 404, "no_session", "no session has been started");
        send_json(res, 200, s->queue);
    });

    srv.Post("/api/v1/labels", [this](const httplib::Request& req, httplib::Response& res) {
        const auto body = nlohmann::json::parse(req.body, nullptr, false);
        if (body.is_discarded() || !body.is_object()) return send_error(res, 400, "bad_json", "body must be a JSON object");
        if (!body.contains("record_id") || !body["record_id"].is_string() || !body.contains("label") ||
            !body["label"].is_string())
            return send_error(res, 400, "missing_field", "record_id and label are required strings");
        const auto label_text = body["label"].get<std::string>();
        if (label_text != "spam" && label_text != "ham")
            return send_error(res, 400, "bad_label", "label must be \"spam\" or \"ham\"");
        const Label label = label_text == "spam" ? Label::Spam : Label::Ham;
        const auto id = body["record_id"].get<std::string>();

        std::promise<std::optional<ActiveSession::SubmitResult>> done;
        auto fut = done.get_future();
        post([this, &done, id, label] {
            if (!session_) return done.set_value(std::nullopt);
            const auto r = session_->submit(id, label);
            publish();
            done.set_value(r);
        });
        const auto r = fut.get();
        if (!r) return send_error(res, 404, "no_session", "no session has been started");
        switch (*r) {
        case ActiveSession::SubmitResult::Accepted:
        case ActiveSession::SubmitResult::Duplicate:
            return send_json(res, 200, {{"record_id", id}, {"label", label_text}, {"duplicate", *r == ActiveSession::SubmitResult::Duplicate}});
        case ActiveSession::SubmitResult::Unknown:
            return send_error(res, 404, "unknown_record", fmt::format("'{}' is not awaiting a label", id));
        case ActiveSession::SubmitResult::Conflict:
            return send_error(res, 409, "already_labeled", fmt::format("'{}' already has a different label", id));
        }
    });

    srv.Get("/api/v1/progress", [this](const httplib::Request&, httplib::Response& res) {
        const auto s = snapshot();
        if (!s) return send_error(res, 404, "no_session", "no session has been started");
        send_json(res, 200,
                  {{"session_id", s->view.session_id},
                   {"state", to_string(s->view.state)},
                   {"iteration", s->view.iteration},
                   {"counts", s->view.counts.to_json()},
                   {"events", s->recent_events}});
    });

    srv.Get("/api/v1/export", [this](const httplib::Request&, httplib::Response& res) {
        const auto s = snapshot();
        if (!s) return send_error(res, 404, "no_session", "no session has been started");
        if (s->view.state != SessionState::Complete && s->view.state != SessionState::Aborted)
            return send_error(res, 409, "session_running", "export is available once the session ends");
        res.status = 200;
        res.set_content(s->export_jsonl, "application/x-ndjson");
    });

    if (opts_.static_dir) {
        if (!srv.set_mount_point("/", opts_.static_dir->string()))
            throw DataError(fmt::format("static directory {} does not exist", opts_.static_dir->string()));
    } else {
        srv.Get("/", [](const httplib::Request&, httplib::Response& res) { res.set_content(kIndexPage, "text/html"); });
    }
}

} // namespace reviewguard
