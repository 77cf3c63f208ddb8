#include "arise/session_store.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <unistd.h>

namespace arise {

std::string to_string(EventKind k) {
    switch (k) {
        case EventKind::agent_started: return "agent-started";
        case EventKind::agent_verdict: return "agent-verdict";
        case EventKind::advisory_note: return "advisory-note";
        case EventKind::manager_decision: return "manager-decision";
        case EventKind::report_ready: return "report-ready";
        case EventKind::error: return "error";
    }
    return "error";
}

EventKind event_kind_from_string(std::string_view s) {
    for (EventKind k : {EventKind::agent_started, EventKind::agent_verdict, EventKind::advisory_note,
                        EventKind::manager_decision, EventKind::report_ready, EventKind::error})
        if (to_string(k) == s) return k;
    throw std::invalid_argument("unknown event kind: " + std::string(s));
}

nlohmann::json to_json(const SessionMessage& m) {
    nlohmann::json j{{"author", m.author}, {"content", m.content}, {"timestamp", format_timestamp(m.timestamp)}};
    j["analysis_id"] = m.analysis_id ? nlohmann::json(*m.analysis_id) : nlohmann::json();
    return j;
}

nlohmann::json to_json(const Session& s) {
    nlohmann::json messages = nlohmann::json::array();
    for (const auto& m : s.messages) messages.push_back(to_json(m));
    nlohmann::json reports = nlohmann::json::array();
    for (const auto& r : s.reports) reports.push_back(to_json(r));
    nlohmann::json incidents = nlohmann::json::array();
    for (const auto& i : s.incidents) incidents.push_back({{"analysis_id", i.analysis_id}, {"incident", to_json(i.incident)}});
    return {{"session_id", s.session_id},
            {"created_at", format_timestamp(s.created_at)},
            {"config", to_json(s.config)},
            {"messages", messages},
            {"reports", reports},
            {"incidents", incidents}};
}

nlohmann::json to_json(const AnalysisEvent& e) {
    return {{"session_id", e.session_id},
            {"analysis_id", e.analysis_id},
            {"seq", e.seq},
            {"kind", to_string(e.kind)},
            {"payload", e.payload}};
}

AnalysisEvent event_from_json(const nlohmann::json& j) {
    return {j.at("session_id").get<std::string>(), j.at("analysis_id").get<std::string>(),
            j.at("seq").get<std::uint64_t>(), event_kind_from_string(j.at("kind").get<std::string>()),
            j.at("payload")};
}

PanelConfig panel_config_from_json(const nlohmann::json& j, const std::vector<AgentProfile>& catalog) {
    PanelConfig c;
    c.mode = panel_mode_from_string(j.at("mode").get<std::string>());
    c.use_rag = j.at("use_rag").get<bool>();
    c.task = task_from_string(j.at("task").get<std::string>());
    c.seed = j.at("seed").get<std::uint64_t>();
    c.k = j.at("k").get<std::size_t>();
    c.manager_receives_context = j.at("manager_receives_context").get<bool>();
    for (const auto& id : j.at("profiles")) {
        auto it = std::find_if(catalog.begin(), catalog.end(),
                               [&](const AgentProfile& p) { return p.agent_id == id.get<std::string>(); });
        if (it == catalog.end()) throw InvalidConfig("unknown profile " + id.get<std::string>());
        c.profiles.push_back(*it);
    }
    return c;
}

SessionLog::SessionLog(std::string dir, std::string session_id)
    : log_path_(dir + "/" + session_id + ".log.jsonl"), snapshot_path_(dir + "/" + session_id + ".snapshot.json") {}

void SessionLog::append(const nlohmann::json& record) {
    std::string line = record.dump() + "\n";
    std::FILE* f = std::fopen(log_path_.c_str(), "ab");
    if (!f) throw std::runtime_error("cannot open " + log_path_);
    bool ok = std::fwrite(line.data(), 1, line.size(), f) == line.size();
    ok = std::fflush(f) == 0 && ok;
    ok = ::fsync(fileno(f)) == 0 && ok;
    std::fclose(f);
    if (!ok) throw std::runtime_error("write to " + log_path_ + " failed");
    ++records_;
}

void SessionLog::write_snapshot(const nlohmann::json& state, std::size_t records) {
    write_file_atomic(snapshot_path_, nlohmann::json{{"records", records}, {"state", state}}.dump() + "\n");
}

SessionLog::Loaded SessionLog::load(const std::string& dir, const std::string& session_id) {
    SessionLog paths(dir, session_id);
    Loaded out;
    std::size_t skip = 0;
    if (std::filesystem::exists(paths.snapshot_path_)) {
        auto snap = nlohmann::json::parse(read_file(paths.snapshot_path_));
        skip = snap.at("records").get<std::size_t>();
        out.snapshot_state = snap.at("state");
    }
    const std::string text = read_file(paths.log_path_);
    std::size_t n = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t nl = text.find('\n', pos);
        std::string_view line(text.data() + pos, (nl == std::string::npos ? text.size() : nl) - pos);
        std::optional<nlohmann::json> rec;
        if (nl != std::string::npos) {
            try {
                rec = nlohmann::json::parse(line);
            } catch (const nlohmann::json::parse_error&) {
            }
        }
        if (!rec) {
            // Torn final append from a crash: drop it so later appends stay readable.
            std::filesystem::resize_file(paths.log_path_, pos);
            break;
        }
        if (n++ >= skip) out.tail.push_back(std::move(*rec));
        pos = nl + 1;
    }
    if (n < skip) throw std::runtime_error(session_id + ": snapshot is ahead of the log");
    out.records = n;
    return out;
}

std::vector<std::string> SessionLog::list_sessions(const std::string& dir) {
    std::vector<std::string> ids;
    const std::string suffix = ".log.jsonl";
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        std::string name = e.path().filename().string();
        if (name.size() > suffix.size() && name.ends_with(suffix)) ids.push_back(name.substr(0, name.size() - suffix.size()));
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

}  // namespace arise
