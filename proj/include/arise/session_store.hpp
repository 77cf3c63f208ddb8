#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "arise/core.hpp"
#include "arise/orchestrator.hpp"

namespace arise {

struct SessionMessage {
    std::string author;  // "teacher", "system" or "agent:<agent_id>"
    std::string content;
    Timestamp timestamp{};
    std::optional<std::string> analysis_id;
};

struct SubmittedIncident {
    std::string analysis_id;
    Incident incident;
};

struct Session {
    std::string session_id;
    Timestamp created_at{};
    std::vector<SessionMessage> messages;
    std::vector<AnalysisReport> reports;
    std::vector<SubmittedIncident> incidents;
    PanelConfig config;
};

enum class EventKind { agent_started, agent_verdict, advisory_note, manager_decision, report_ready, error };
std::string to_string(EventKind k);
EventKind event_kind_from_string(std::string_view s);

struct AnalysisEvent {
    std::string session_id;
    std::string analysis_id;
    std::uint64_t seq = 0;
    EventKind kind = EventKind::error;
    nlohmann::json payload = nlohmann::json::object();

    bool terminal() const { return kind == EventKind::report_ready || kind == EventKind::error; }
};

nlohmann::json to_json(const SessionMessage& m);
nlohmann::json to_json(const Session& s);
nlohmann::json to_json(const AnalysisEvent& e);
AnalysisEvent event_from_json(const nlohmann::json& j);

// Resolves profile ids in stored configs.
PanelConfig panel_config_from_json(const nlohmann::json& j, const std::vector<AgentProfile>& catalog);

/// Durable per-session state: an append-only JSON-lines log
/// (<dir>/<session_id>.log.jsonl) plus an occasional snapshot
/// (<dir>/<session_id>.snapshot.json) holding the folded state of the first N
/// log records. Loading starts from the snapshot and replays the rest of the log.
///
/// Record types: created, message, incident, report, event.
class SessionLog {
 public:
    SessionLog(std::string dir, std::string session_id);

    void append(const nlohmann::json& record);
    std::size_t records() const { return records_; }

    void write_snapshot(const nlohmann::json& state, std::size_t records);

    struct Loaded {
        std::optional<nlohmann::json> snapshot_state;
        std::vector<nlohmann::json> tail;  // records after the snapshot
        std::size_t records = 0;
    };
    static Loaded load(const std::string& dir, const std::string& session_id);
    static std::vector<std::string> list_sessions(const std::string& dir);

    // Continue appending to an existing log.
    void resume(std::size_t records) { records_ = records; }

 private:
    std::string log_path_;
    std::string snapshot_path_;
    std::size_t records_ = 0;
};

}  // namespace arise
