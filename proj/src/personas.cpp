#include "arise/personas.hpp"

#include <algorithm>
#include <filesystem>
#include <iomanip>
#include <sstream>

namespace arise {

std::string to_string(AgentRole r) {
    switch (r) {
        case AgentRole::student: return "student";
        case AgentRole::manager: return "manager";
        case AgentRole::advisor: return "advisor";
    }
    return "student";
}

AgentRole agent_role_from_string(std::string_view s) {
    std::string f = fold(s);
    if (f == "student") return AgentRole::student;
    if (f == "manager") return AgentRole::manager;
    if (f == "advisor") return AgentRole::advisor;
    throw InvalidProfile("unknown role: " + std::string(s));
}

void validate(const AgentProfile& p) {
    if (p.agent_id.empty()) throw InvalidProfile("profile without agent_id");
    if (trim(p.backstory).empty()) throw InvalidProfile(p.agent_id + ": empty backstory");
    switch (p.role) {
        case AgentRole::student:
            if (p.discipline.empty()) throw InvalidProfile(p.agent_id + ": student needs a discipline");
            break;
        case AgentRole::advisor:
            if (!p.cultural_lens || p.cultural_lens->empty())
                throw InvalidProfile(p.agent_id + ": advisor needs a cultural lens");
            break;
        case AgentRole::manager:
            if (p.discipline != "academic professor")
                throw InvalidProfile(p.agent_id + ": manager discipline must be 'academic professor'");
            break;
    }
}

namespace {
void replace_all(std::string& s, std::string_view from, std::string_view to) {
    for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size()))
        s.replace(pos, from.size(), to);
}
}  // namespace

AgentProfile parse_profile(std::string_view text) {
    FrontMatter fm;
    try {
        fm = parse_front_matter(text);
    } catch (const std::invalid_argument& e) {
        throw InvalidProfile(e.what());
    }
    auto field = [&](const char* key) { return fm.fields.count(key) ? fm.fields.at(key) : std::string(); };
    AgentProfile p;
    p.agent_id = field("agent_id");
    p.role = agent_role_from_string(field("role"));
    p.display_name = field("name");
    p.discipline = field("discipline");
    if (auto lens = field("cultural_lens"); !lens.empty()) p.cultural_lens = lens;
    p.backstory = fm.body;
    replace_all(p.backstory, "{{discipline}}", p.discipline);
    replace_all(p.backstory, "{{cultural_lens}}", p.cultural_lens.value_or(""));
    validate(p);
    return p;
}

AgentProfile load_profile(const std::string& path) {
    try {
        return parse_profile(read_file(path));
    } catch (const InvalidProfile& e) {
        throw InvalidProfile(path + ": " + e.what());
    }
}

std::vector<AgentProfile> load_profiles(const std::string& dir) {
    namespace fs = std::filesystem;
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".txt") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    std::vector<AgentProfile> out;
    for (const auto& f : files) out.push_back(load_profile(f.string()));
    return out;
}

std::vector<AgentProfile> builtin_profiles(const std::string& asset_dir) {
    return load_profiles(asset_dir + "/personas");
}

std::vector<AgentProfile> with_role(std::span<const AgentProfile> profiles, AgentRole role) {
    std::vector<AgentProfile> out;
    for (const auto& p : profiles)
        if (p.role == role) out.push_back(p);
    return out;
}

std::string column_name(const AgentProfile& p) {
    std::string s = fold(p.discipline);
    std::replace(s.begin(), s.end(), ' ', '-');
    return s;
}

std::string to_string(Task t) {
    switch (t) {
        case Task::classify_explicit: return "classify-explicit";
        case Task::classify_implicit: return "classify-implicit";
        case Task::analyze_incident: return "analyze-incident";
        case Task::aggregate: return "aggregate";
        case Task::advise: return "advise";
    }
    return "analyze-incident";
}

Task task_from_string(std::string_view s) {
    for (Task t : {Task::classify_explicit, Task::classify_implicit, Task::analyze_incident, Task::aggregate,
                   Task::advise})
        if (to_string(t) == s) return t;
    throw std::invalid_argument("unknown task: " + std::string(s));
}

SchemaKind schema_kind_for(Task t) {
    return t == Task::classify_implicit ? SchemaKind::implicit_7way : SchemaKind::explicit_detection;
}

ChatRequest PromptBundle::to_request(const std::string& model, double temperature, int max_tokens,
                                     std::string request_tag) const {
    ChatRequest r;
    r.model = model;
    r.temperature = temperature;
    r.max_tokens = max_tokens;
    r.request_tag = std::move(request_tag);
    r.messages.push_back({Role::system, system_prompt});
    r.messages.push_back({Role::user, user_prompt});
    return r;
}

namespace {

bool allowed(AgentRole role, Task task) {
    switch (task) {
        case Task::aggregate: return role == AgentRole::manager;
        case Task::advise: return role == AgentRole::advisor;
        default: return role != AgentRole::advisor;
    }
}

std::string role_directive(const AgentProfile& p) {
    switch (p.role) {
        case AgentRole::student:
            return "You are a university student of " + p.discipline +
                   " taking part in a panel that analyses reported hate incidents in schools. "
                   "Judge each case from your own disciplinary perspective.";
        case AgentRole::manager:
            return "You are an academic professor supervising a panel of student analysts. You weigh their "
                   "judgments, resolve disagreements between them and refine the recommendations given to "
                   "teachers. You may overrule the students when their reasoning is weak.";
        case AgentRole::advisor:
            return "You are a cultural advisor. You review incidents through the following lens: " +
                   p.cultural_lens.value_or("") +
                   ". Point out how different backgrounds and lived experiences may change how the content is "
                   "received.";
    }
    return {};
}

std::string system_prompt_for(const AgentProfile& p) {
    std::ostringstream ss;
    ss << "Agent id: " << p.agent_id << "\n";
    if (!p.display_name.empty()) ss << "Name: " << p.display_name << "\n";
    ss << "\n" << role_directive(p) << "\n\nBackstory:\n" << p.backstory << "\n";
    return ss.str();
}

std::string class_list(const LabelSchema& s) { return join(s.classes(), ", "); }

std::string verdict_format(const LabelSchema& s) {
    return "Answer with exactly these three lines and nothing else:\n"
           "label: <one of: " + class_list(s) + ">\n"
           "confidence: <number between 0 and 1>\n"
           "rationale: <two or three sentences>";
}

std::string task_instruction(Task task, const LabelSchema* schema) {
    switch (task) {
        case Task::classify_explicit:
            return "Decide whether the post below is hate speech. Offensive language that does not attack a "
                   "group for a protected characteristic is not hate speech.";
        case Task::classify_implicit:
            return "The post below contains implicit hate speech. Decide which kind of implicit hate it is: " +
                   (schema ? class_list(*schema) : std::string()) + ".";
        case Task::analyze_incident:
            return "A teacher reported the incident below. Decide whether it constitutes hate speech and explain "
                   "its nature from your perspective.";
        case Task::aggregate:
            return "Your students analysed the incident below independently. Weigh their judgments, resolve any "
                   "conflict and give the panel's final decision.";
        case Task::advise:
            return "Review the incident below through your cultural lens and write a short advisory note for the "
                   "teacher (at most four sentences).";
    }
    return {};
}

std::string format_confidence(double c) {
    std::ostringstream ss;
    ss << std::fixed << std::setprecision(2) << c;
    return ss.str();
}

}  // namespace

PromptBundle build_prompt(const AgentProfile& profile, Task task, const PromptInputs& in) {
    if (!allowed(profile.role, task)) throw RoleTaskMismatch(profile.role, task);
    const bool manager_analysis = task == Task::analyze_incident && profile.role == AgentRole::manager;
    const bool needs_schema = task != Task::advise && !manager_analysis;
    if (needs_schema && !in.schema) throw std::invalid_argument("task " + to_string(task) + " needs a label schema");

    PromptBundle b;
    b.system_prompt = system_prompt_for(profile);

    std::ostringstream u;
    u << "Task: " << task_instruction(task, in.schema.get()) << "\n\n";
    u << incident_open << in.incident.text << incident_close << "\n";
    if (in.incident.context && !in.incident.context->empty())
        u << "Circumstances: " << *in.incident.context << "\n";

    if (!in.contexts.empty()) {
        std::ostringstream c;
        c << "[reference material]\n";
        for (const auto& chunk : in.contexts) {
            c << "(" << chunk.rank << ") " << chunk.title << " [" << chunk.chunk_id << "]\n" << chunk.text << "\n";
            b.context_ids.push_back(chunk.chunk_id);
        }
        c << "[/reference material]";
        b.context_block = c.str();
        u << "\nUse the reference material below where it is relevant.\n" << *b.context_block << "\n";
    }

    if (task == Task::aggregate || (task == Task::advise && !in.verdicts.empty())) {
        u << "\nStudent judgments:\n";
        for (const auto& v : in.verdicts) {
            u << "- " << v.agent_id << ": label " << v.label.name() << ", confidence "
              << format_confidence(v.confidence) << ". " << v.rationale << "\n";
        }
    }
    if (task == Task::advise && in.panel_label) u << "Panel decision: " << in.panel_label->name() << "\n";

    u << "\n";
    if (manager_analysis) {
        u << "Assess how the situation may develop and what the teacher should do. Answer in this format:\n"
             "escalation: <low, medium or high>\n"
             "interventions:\n"
             "- <first concrete step>\n"
             "- <further steps, one per line>";
    } else if (task == Task::advise) {
        u << "Write the note as plain text.";
    } else {
        u << verdict_format(*in.schema);
    }
    b.user_prompt = u.str();
    return b;
}

PromptBundle build_follow_up_prompt(const AgentProfile& manager, const Incident& incident,
                                    const AnalysisReport& report, std::string_view question) {
    if (manager.role != AgentRole::manager) throw RoleTaskMismatch(manager.role, Task::aggregate);
    PromptBundle b;
    b.system_prompt = system_prompt_for(manager);
    std::ostringstream u;
    u << "A teacher asks a follow-up question about an incident your panel analysed.\n\n"
      << incident_open << incident.text << incident_close << "\n"
      << "Panel decision: " << report.final_label.name() << "\n"
      << "Escalation risk: " << to_string(report.escalation_risk) << "\n";
    if (report.manager_rationale) u << "Your rationale: " << *report.manager_rationale << "\n";
    if (!report.interventions.empty()) {
        u << "Recommended interventions:\n";
        for (const auto& i : report.interventions) u << "- " << i << "\n";
    }
    for (const auto& v : report.agent_verdicts) u << "Student " << v.agent_id << ": " << v.rationale << "\n";
    for (const auto& n : report.advisory_notes) u << "Advisory note: " << n << "\n";
    u << "\nQuestion: " << question << "\n\nAnswer the teacher directly and practically.";
    b.user_prompt = u.str();
    return b;
}

}  // namespace arise
