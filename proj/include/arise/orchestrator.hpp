#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "arise/core.hpp"
#include "arise/gateway.hpp"
#include "arise/personas.hpp"
#include "arise/retrieval.hpp"

namespace arise {

enum class PanelMode { single, multi };
std::string to_string(PanelMode m);
PanelMode panel_mode_from_string(std::string_view s);

struct PanelConfig {
    PanelMode mode = PanelMode::multi;
    bool use_rag = true;
    Task task = Task::analyze_incident;
    std::vector<AgentProfile> profiles;
    std::uint64_t seed = 0;
    std::size_t k = 4;
    bool manager_receives_context = false;
};

class InvalidConfig : public std::invalid_argument {
 public:
    using std::invalid_argument::invalid_argument;
};

void validate(const PanelConfig& c);
nlohmann::json to_json(const PanelConfig& c);  // profiles by agent_id

struct TraceEntry {
    std::string stage;  // student | manager | advisor | analysis | follow-up
    std::string agent_id;
    int attempt = 0;
    std::string prompt_digest;
    std::string response_digest;
    std::chrono::milliseconds duration{0};
    std::string note;
};

nlohmann::json to_json(const TraceEntry& t, bool with_duration = true);

/// Thread-safe collector. entries() returns a canonical order
/// (stage, agent_id, attempt) that does not depend on completion order.
class Trace {
 public:
    void add(TraceEntry e);
    void note_last(const std::string& agent_id, const std::string& stage, const std::string& note);
    std::vector<TraceEntry> entries() const;

 private:
    mutable std::mutex mu_;
    std::vector<TraceEntry> entries_;
};

struct PanelResult {
    std::string incident_id;
    PanelConfig config;
    std::vector<Verdict> verdicts;  // sorted by agent_id
    Label final_label;
    std::optional<std::string> manager_rationale;
    std::vector<TraceEntry> trace;
};

// Without durations unless asked: equal for repeated runs under a scripted backend.
nlohmann::json to_json(const PanelResult& r, bool with_durations = false);
std::string trace_jsonl(std::span<const TraceEntry> trace);

class Aborted : public std::runtime_error {
 public:
    Aborted(std::string agent_id, const std::string& cause)
        : std::runtime_error("agent " + agent_id + " failed: " + cause), agent_id_(std::move(agent_id)) {}
    const std::string& agent_id() const { return agent_id_; }

 private:
    std::string agent_id_;
};

/// Progress callbacks, possibly invoked from several threads at once.
class PanelObserver {
 public:
    virtual ~PanelObserver() = default;
    virtual void agent_started(const AgentProfile&, std::string_view /*stage*/) {}
    virtual void agent_verdict(const Verdict&) {}
    virtual void advisory_note(const AgentProfile&, const std::string& /*note*/) {}
    virtual void manager_decision(const Label&, const std::string& /*rationale*/, bool /*fallback*/) {}
};

struct EscalationThresholds {
    double high = 0.85;
    double medium = 0.6;
};

/// Intervention lists keyed by class name, with "hateful" and "default" entries.
class InterventionTemplates {
 public:
    static InterventionTemplates load(const std::string& path);
    static InterventionTemplates builtin(const std::string& asset_dir = default_asset_dir());
    // Empty for benign labels.
    std::vector<std::string> for_label(const Label& l) const;

 private:
    std::map<std::string, std::vector<std::string>> by_class_;
};

EscalationRisk escalation_from_confidence(double mean_confidence, const EscalationThresholds& t);

struct OrchestratorOptions {
    std::string model = "o1-mini";
    double temperature = 0.0;
    int max_tokens = 1024;
    EscalationThresholds thresholds;
};

/// Plurality label. Ties go to the highest mean confidence among the tied
/// labels, then to the earliest class in schema order.
Label aggregate_majority(std::span<const Verdict> verdicts);

struct ManagerDecision {
    Label label;
    std::string rationale;
    bool fallback = false;
};

class Orchestrator {
 public:
    Orchestrator(Gateway& gateway, Schemas schemas, const Retriever* retriever, InterventionTemplates templates,
                 OrchestratorOptions options = {});

    Verdict analyze_single(const Incident& incident, const AgentProfile& student, bool use_rag,
                           Task task = Task::analyze_incident, std::size_t k = 4, Trace* trace = nullptr,
                           PanelObserver* observer = nullptr);

    ManagerDecision manager_aggregate(const Incident& incident, const AgentProfile& manager,
                                      std::span<const Verdict> verdicts,
                                      std::span<const RetrievedChunk> contexts = {}, Trace* trace = nullptr,
                                      PanelObserver* observer = nullptr);

    PanelResult run_panel(const Incident& incident, const PanelConfig& config, PanelObserver* observer = nullptr);

    // LLM calls made here are appended to `trace` when given.
    AnalysisReport compose_report(const PanelResult& panel, const Incident& incident,
                                  PanelObserver* observer = nullptr, Trace* trace = nullptr);

    const Schemas& schemas() const { return schemas_; }
    const OrchestratorOptions& options() const { return options_; }
    Gateway& gateway() { return gateway_; }

 private:
    std::vector<RetrievedChunk> contexts_for(const Incident& incident, bool use_rag, std::size_t k) const;
    Verdict student_verdict(const Incident& incident, const AgentProfile& student, Task task,
                            std::span<const RetrievedChunk> contexts, Trace* trace, PanelObserver* observer);
    ChatRequest request_for(const PromptBundle& b, const AgentProfile& p, std::string_view stage,
                            const Incident& incident) const;

    Gateway& gateway_;
    Schemas schemas_;
    const Retriever* retriever_;
    InterventionTemplates templates_;
    OrchestratorOptions options_;
};

}  // namespace arise
