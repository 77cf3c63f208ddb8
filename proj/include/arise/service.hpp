#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "arise/orchestrator.hpp"
#include "arise/session_store.hpp"

namespace arise {

class UnknownSession : public std::runtime_error {
 public:
    explicit UnknownSession(const std::string& id) : std::runtime_error("unknown session " + id) {}
};

class NoReportYet : public std::runtime_error {
 public:
    NoReportYet() : std::runtime_error("session has no completed report yet") {}
};

class ServiceStopped : public std::runtime_error {
 public:
    ServiceStopped() : std::runtime_error("service is shutting down") {}
};

/// Fixed-size worker pool. Jobs still queued at stop() are discarded.
class WorkerPool {
 public:
    explicit WorkerPool(std::size_t threads);
    ~WorkerPool();
    void post(std::function<void()> job);
    void stop();

 private:
    std::mutex mu_;
    std::condition_variable cv_;
    std::deque<std::function<void()>> jobs_;
    bool stopping_ = false;
    std::vector<std::jthread> threads_;
};

struct ServiceOptions {
    std::string state_dir;
    std::size_t workers = 4;
    std::size_t snapshot_every = 32;
    double follow_up_temperature = 0.7;
    // Session defaults: multi-agent mode, RAG on, incident analysis, every catalog profile.
    PanelConfig defaults;
};

/// Teacher sessions. Each session is mutated under its own lock (one writer at a
/// time); panels run on the shared worker pool. Every mutation is appended to
/// the session's log before it becomes visible.
class Service {
 public:
    Service(Orchestrator& orchestrator, std::vector<AgentProfile> catalog, ServiceOptions options);
    ~Service();

    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    // Unknown override keys or an invalid resulting config throw InvalidConfig.
    Session create_session(const nlohmann::json& overrides = nlohmann::json::object());
    // Returns the analysis id; the panel runs in the background.
    std::string submit_incident(const std::string& session_id, const std::string& text,
                                std::optional<std::string> context);
    SessionMessage follow_up(const std::string& session_id, const std::string& question);
    Session get_session(const std::string& session_id) const;
    std::vector<std::string> session_ids() const;

    // Events with seq > after. Waits up to `wait` for new ones when none are pending.
    std::vector<AnalysisEvent> events_after(const std::string& session_id, std::uint64_t after,
                                            std::chrono::milliseconds wait = std::chrono::milliseconds(0)) const;

    // Ends open analyses with an error event, snapshots every session and stops the workers.
    void shutdown();
    bool stopping() const { return stopping_.load(); }

 private:
    struct SessionState;
    class EventSink;

    std::shared_ptr<SessionState> find(const std::string& id) const;
    void restore();
    void apply(SessionState& st, const nlohmann::json& record);
    void commit(SessionState& st, const nlohmann::json& record);
    void emit(SessionState& st, const std::string& analysis_id, EventKind kind, nlohmann::json payload);
    void run_analysis(std::shared_ptr<SessionState> st, std::string analysis_id, Incident incident);
    nlohmann::json snapshot_state(const SessionState& st) const;

    Orchestrator& orch_;
    std::vector<AgentProfile> catalog_;
    ServiceOptions options_;
    mutable std::mutex mu_;
    std::map<std::string, std::shared_ptr<SessionState>> sessions_;
    std::atomic<bool> stopping_{false};
    std::unique_ptr<WorkerPool> pool_;
};

}  // namespace arise
