#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "arise/core.hpp"
#include "arise/gateway.hpp"
#include "arise/retrieval.hpp"

namespace arise {

enum class AgentRole { student, manager, advisor };
std::string to_string(AgentRole r);
AgentRole agent_role_from_string(std::string_view s);

struct AgentProfile {
    std::string agent_id;
    AgentRole role = AgentRole::student;
    std::string display_name;
    std::string discipline;
    std::string backstory;
    std::optional<std::string> cultural_lens;

    friend bool operator==(const AgentProfile&, const AgentProfile&) = default;
};

class InvalidProfile : public std::invalid_argument {
 public:
    using std::invalid_argument::invalid_argument;
};

void validate(const AgentProfile& p);

/// Profile asset: front matter (agent_id, role, name, discipline, cultural_lens)
/// followed by the backstory. `{{discipline}}` and `{{cultural_lens}}` in the
/// backstory are replaced by the header values.
AgentProfile parse_profile(std::string_view text);
AgentProfile load_profile(const std::string& path);
// All *.txt files in `dir`, in file-name order.
std::vector<AgentProfile> load_profiles(const std::string& dir);

// Three students (psychology, pedagogy, cognitive science), the professor
// manager and the advisors, from <asset_dir>/personas.
std::vector<AgentProfile> builtin_profiles(const std::string& asset_dir = default_asset_dir());

std::vector<AgentProfile> with_role(std::span<const AgentProfile> profiles, AgentRole role);

// Evaluation column name of a student: discipline, lowercased, spaces to '-'.
std::string column_name(const AgentProfile& p);

enum class Task { classify_explicit, classify_implicit, analyze_incident, aggregate, advise };
std::string to_string(Task t);
Task task_from_string(std::string_view s);

// Label schema kind used by a classifying task. analyze-incident classifies
// with the explicit-detection schema.
SchemaKind schema_kind_for(Task t);

class RoleTaskMismatch : public std::invalid_argument {
 public:
    RoleTaskMismatch(AgentRole role, Task task)
        : std::invalid_argument("task " + to_string(task) + " is not available to role " + to_string(role)) {}
};

struct PromptBundle {
    std::string system_prompt;
    std::string user_prompt;
    std::optional<std::string> context_block;
    std::vector<std::string> context_ids;

    ChatRequest to_request(const std::string& model, double temperature, int max_tokens,
                           std::string request_tag) const;
};

struct PromptInputs {
    const Incident& incident;
    std::span<const RetrievedChunk> contexts = {};
    // Label schema of classifying tasks and of aggregate.
    SchemaRef schema = nullptr;
    // aggregate: the verdicts to weigh. advise: optional panel outcome.
    std::span<const Verdict> verdicts = {};
    std::optional<Label> panel_label = std::nullopt;
};

/// Persona-conditioned prompt. The system prompt carries identity and backstory;
/// everything incident-specific, including retrieved context, goes to the user prompt.
PromptBundle build_prompt(const AgentProfile& profile, Task task, const PromptInputs& in);

/// Manager answer to a teacher question about an existing report.
PromptBundle build_follow_up_prompt(const AgentProfile& manager, const Incident& incident,
                                    const AnalysisReport& report, std::string_view question);

// Delimiters around incident text inside user prompts.
inline constexpr const char* incident_open = "[incident]\n";
inline constexpr const char* incident_close = "\n[/incident]";

}  // namespace arise
