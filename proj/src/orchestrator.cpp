#include "arise/orchestrator.hpp"

#include <algorithm>
#include <future>
#include <tuple>

namespace arise {

std::string to_string(PanelMode m) { return m == PanelMode::single ? "single" : "multi"; }

PanelMode panel_mode_from_string(std::string_view s) {
    if (s == "single") return PanelMode::single;
    if (s == "multi") return PanelMode::multi;
    throw InvalidConfig("unknown mode: " + std::string(s));
}

void validate(const PanelConfig& c) {
    std::size_t students = 0, managers = 0;
    for (const auto& p : c.profiles) {
        try {
            validate(p);
        } catch (const InvalidProfile& e) {
            throw InvalidConfig(e.what());
        }
        students += p.role == AgentRole::student;
        managers += p.role == AgentRole::manager;
    }
    if (students == 0) throw InvalidConfig("panel needs at least one student");
    if (c.mode == PanelMode::multi && managers != 1)
        throw InvalidConfig("multi-agent mode needs exactly one manager, got " + std::to_string(managers));
    if (c.task == Task::aggregate || c.task == Task::advise)
        throw InvalidConfig("panel task must be a classification or analysis task");
    if (c.k == 0) throw InvalidConfig("k must be positive");
}

nlohmann::json to_json(const PanelConfig& c) {
    std::vector<std::string> ids;
    for (const auto& p : c.profiles) ids.push_back(p.agent_id);
    return {{"mode", to_string(c.mode)},
            {"use_rag", c.use_rag},
            {"task", to_string(c.task)},
            {"profiles", ids},
            {"seed", c.seed},
            {"k", c.k},
            {"manager_receives_context", c.manager_receives_context}};
}

nlohmann::json to_json(const TraceEntry& t, bool with_duration) {
    nlohmann::json j{{"stage", t.stage},
                     {"agent_id", t.agent_id},
                     {"attempt", t.attempt},
                     {"prompt_digest", t.prompt_digest},
                     {"response_digest", t.response_digest},
                     {"note", t.note}};
    if (with_duration) j["duration_ms"] = t.duration.count();
    return j;
}

namespace {
int stage_rank(const std::string& s) {
    static const std::vector<std::string> order{"student", "manager", "advisor", "analysis", "follow-up"};
    auto it = std::find(order.begin(), order.end(), s);
    return static_cast<int>(it - order.begin());
}
}  // namespace

void Trace::add(TraceEntry e) {
    std::lock_guard lock(mu_);
    entries_.push_back(std::move(e));
}

void Trace::note_last(const std::string& agent_id, const std::string& stage, const std::string& note) {
    std::lock_guard lock(mu_);
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
        if (it->agent_id == agent_id && it->stage == stage) {
            it->note = it->note.empty() ? note : it->note + "; " + note;
            return;
        }
    }
}

std::vector<TraceEntry> Trace::entries() const {
    std::lock_guard lock(mu_);
    auto out = entries_;
    std::stable_sort(out.begin(), out.end(), [](const TraceEntry& a, const TraceEntry& b) {
        return std::forward_as_tuple(stage_rank(a.stage), a.agent_id, a.attempt) <
               std::forward_as_tuple(stage_rank(b.stage), b.agent_id, b.attempt);
    });
    return out;
}

nlohmann::json to_json(const PanelResult& r, bool with_durations) {
    nlohmann::json verdicts = nlohmann::json::array();
    for (const auto& v : r.verdicts) verdicts.push_back(to_json(v));
    nlohmann::json trace = nlohmann::json::array();
    for (const auto& t : r.trace) trace.push_back(to_json(t, with_durations));
    return {{"incident_id", r.incident_id},
            {"config", to_json(r.config)},
            {"verdicts", verdicts},
            {"final_label", r.final_label.name()},
            {"manager_rationale", r.manager_rationale ? nlohmann::json(*r.manager_rationale) : nlohmann::json()},
            {"trace", trace}};
}

std::string trace_jsonl(std::span<const TraceEntry> trace) {
    std::string out;
    for (const auto& t : trace) {
        out += to_json(t).dump();
        out += '\n';
    }
    return out;
}

InterventionTemplates InterventionTemplates::load(const std::string& path) {
    InterventionTemplates t;
    auto j = nlohmann::json::parse(read_file(path));
    for (const auto& [k, v] : j.items()) t.by_class_[fold(k)] = v.get<std::vector<std::string>>();
    if (!t.by_class_.count("default")) throw std::invalid_argument(path + ": missing 'default' interventions");
    return t;
}

InterventionTemplates InterventionTemplates::builtin(const std::string& asset_dir) {
    return load(asset_dir + "/interventions.json");
}

std::vector<std::string> InterventionTemplates::for_label(const Label& l) const {
    if (!l.hateful()) return {};
    if (auto it = by_class_.find(l.name()); it != by_class_.end() && !it->second.empty()) return it->second;
    return by_class_.at("default");
}

EscalationRisk escalation_from_confidence(double mean_confidence, const EscalationThresholds& t) {
    if (mean_confidence >= t.high) return EscalationRisk::high;
    if (mean_confidence >= t.medium) return EscalationRisk::medium;
    return EscalationRisk::low;
}

Label aggregate_majority(std::span<const Verdict> verdicts) {
    if (verdicts.empty()) throw std::invalid_argument("aggregate_majority needs at least one verdict");
    const SchemaRef& schema = verdicts.front().label.schema;
    std::vector<std::size_t> count(schema->size(), 0);
    std::vector<double> conf_sum(schema->size(), 0.0);
    for (const auto& v : verdicts) {
        if (v.label.schema->name() != schema->name()) throw std::invalid_argument("verdicts mix label schemas");
        ++count[v.label.class_index];
        conf_sum[v.label.class_index] += v.confidence;
    }
    std::size_t best = 0;
    for (std::size_t c = 1; c < count.size(); ++c) {
        if (count[c] > count[best]) {
            best = c;
        } else if (count[c] == count[best] && count[c] > 0) {
            double mean_c = conf_sum[c] / static_cast<double>(count[c]);
            double mean_b = conf_sum[best] / static_cast<double>(count[best]);
            if (mean_c > mean_b) best = c;
        }
    }
    return Label::of(schema, best);
}

Orchestrator::Orchestrator(Gateway& gateway, Schemas schemas, const Retriever* retriever,
                           InterventionTemplates templates, OrchestratorOptions options)
    : gateway_(gateway),
      schemas_(std::move(schemas)),
      retriever_(retriever),
      templates_(std::move(templates)),
      options_(std::move(options)) {}

std::vector<RetrievedChunk> Orchestrator::contexts_for(const Incident& incident, bool use_rag, std::size_t k) const {
    if (!use_rag || !retriever_) return {};
    return retriever_->retrieve(incident_query(incident), k);
}

ChatRequest Orchestrator::request_for(const PromptBundle& b, const AgentProfile& p, std::string_view stage,
                                      const Incident& incident) const {
    return b.to_request(options_.model, options_.temperature, options_.max_tokens,
                        incident.id + "/" + std::string(stage) + "/" + p.agent_id);
}

namespace {

void record_calls(Trace* trace, std::string_view stage, const std::string& agent_id, const VerdictCall& vc,
                  int first_attempt = 0) {
    if (!trace) return;
    int attempt = first_attempt;
    for (const auto& [req, resp] : vc.calls) {
        TraceEntry e{std::string(stage), agent_id, attempt, digest_hex(render_prompt(req)), digest_hex(resp.content),
                     resp.latency, attempt > first_attempt ? "re-ask" : ""};
        for (const auto& n : resp.notes) e.note += (e.note.empty() ? "" : "; ") + n;
        trace->add(std::move(e));
        ++attempt;
    }
}

void record_call(Trace* trace, std::string_view stage, const std::string& agent_id, int attempt,
                 const ChatRequest& req, const ChatResponse& resp, std::string note = {}) {
    if (!trace) return;
    for (const auto& n : resp.notes) note += (note.empty() ? "" : "; ") + n;
    trace->add({std::string(stage), agent_id, attempt, digest_hex(render_prompt(req)), digest_hex(resp.content),
                resp.latency, std::move(note)});
}

}  // namespace

Verdict Orchestrator::student_verdict(const Incident& incident, const AgentProfile& student, Task task,
                                      std::span<const RetrievedChunk> contexts, Trace* trace,
                                      PanelObserver* observer) {
    if (student.role != AgentRole::student) throw RoleTaskMismatch(student.role, task);
    if (observer) observer->agent_started(student, "student");
    const SchemaRef& schema = schemas_.for_kind(schema_kind_for(task));
    PromptBundle b = build_prompt(student, task, {incident, contexts, schema});
    VerdictCall vc = complete_verdict(gateway_, request_for(b, student, "student", incident), schema);
    record_calls(trace, "student", student.agent_id, vc);
    if (vc.defaulted && trace) trace->note_last(student.agent_id, "student", "defaulted to fallback class");
    Verdict v{student.agent_id, vc.verdict.label, vc.verdict.confidence, vc.verdict.rationale, b.context_ids};
    if (observer) observer->agent_verdict(v);
    return v;
}

Verdict Orchestrator::analyze_single(const Incident& incident, const AgentProfile& student, bool use_rag, Task task,
                                     std::size_t k, Trace* trace, PanelObserver* observer) {
    auto contexts = contexts_for(incident, use_rag, k);
    return student_verdict(incident, student, task, contexts, trace, observer);
}

ManagerDecision Orchestrator::manager_aggregate(const Incident& incident, const AgentProfile& manager,
                                                std::span<const Verdict> verdicts,
                                                std::span<const RetrievedChunk> contexts, Trace* trace,
                                                PanelObserver* observer) {
    if (verdicts.empty()) throw std::invalid_argument("manager_aggregate needs verdicts");
    if (observer) observer->agent_started(manager, "manager");
    const SchemaRef& schema = verdicts.front().label.schema;
    PromptBundle b = build_prompt(manager, Task::aggregate, {incident, contexts, schema, verdicts});
    VerdictCall vc = complete_verdict(gateway_, request_for(b, manager, "manager", incident), schema);
    record_calls(trace, "manager", manager.agent_id, vc);

    ManagerDecision d;
    if (vc.defaulted) {
        d.label = aggregate_majority(verdicts);
        d.rationale = "Manager reply could not be parsed; majority vote of the students used.";
        d.fallback = true;
        if (trace) trace->note_last(manager.agent_id, "manager", "fallback to majority vote");
    } else {
        d.label = vc.verdict.label;
        d.rationale = vc.verdict.rationale;
    }
    if (observer) observer->manager_decision(d.label, d.rationale, d.fallback);
    return d;
}

PanelResult Orchestrator::run_panel(const Incident& incident, const PanelConfig& config, PanelObserver* observer) {
    validate(config);
    auto contexts = contexts_for(incident, config.use_rag, config.k);
    auto students = with_role(config.profiles, AgentRole::student);
    Trace trace;

    std::vector<std::future<Verdict>> pending;
    pending.reserve(students.size());
    for (const auto& s : students) {
        pending.push_back(std::async(std::launch::async, [&, s] {
            return student_verdict(incident, s, config.task, contexts, &trace, observer);
        }));
    }
    std::vector<Verdict> verdicts;
    std::optional<Aborted> failure;
    for (std::size_t i = 0; i < pending.size(); ++i) {
        try {
            verdicts.push_back(pending[i].get());
        } catch (const std::exception& e) {
            if (!failure) failure.emplace(students[i].agent_id, e.what());
        }
    }
    if (failure) throw *failure;
    std::sort(verdicts.begin(), verdicts.end(),
              [](const Verdict& a, const Verdict& b) { return a.agent_id < b.agent_id; });

    PanelResult r;
    r.incident_id = incident.id;
    r.config = config;
    if (config.mode == PanelMode::single) {
        r.final_label = aggregate_majority(verdicts);
    } else {
        const AgentProfile manager = with_role(config.profiles, AgentRole::manager).front();
        std::span<const RetrievedChunk> manager_ctx =
            config.manager_receives_context ? std::span<const RetrievedChunk>(contexts) : std::span<const RetrievedChunk>();
        try {
            auto d = manager_aggregate(incident, manager, verdicts, manager_ctx, &trace, observer);
            r.final_label = d.label;
            r.manager_rationale = d.rationale;
        } catch (const std::exception& e) {
            throw Aborted(manager.agent_id, e.what());
        }
    }
    r.verdicts = std::move(verdicts);
    r.trace = trace.entries();
    return r;
}

AnalysisReport Orchestrator::compose_report(const PanelResult& panel, const Incident& incident,
                                            PanelObserver* observer, Trace* trace) {
    AnalysisReport rep;
    rep.incident_id = panel.incident_id;
    rep.final_label = panel.final_label;
    rep.agent_verdicts = panel.verdicts;
    rep.manager_rationale = panel.manager_rationale;

    auto contexts = contexts_for(incident, panel.config.use_rag, panel.config.k);

    // Advisors run concurrently; notes keep profile order.
    auto advisors = with_role(panel.config.profiles, AgentRole::advisor);
    std::vector<std::future<std::string>> notes;
    for (const auto& a : advisors) {
        notes.push_back(std::async(std::launch::async, [&, a]() -> std::string {
            if (observer) observer->agent_started(a, "advisor");
            PromptBundle b = build_prompt(a, Task::advise, {incident, contexts, nullptr, panel.verdicts, panel.final_label});
            ChatRequest req = request_for(b, a, "advisor", incident);
            std::string note;
            try {
                ChatResponse resp = gateway_.complete(req);
                std::string_view content = trim(resp.content);
                bool ok = resp.finish_reason != FinishReason::error && !content.empty();
                record_call(trace, "advisor", a.agent_id, 0, req, resp, ok ? "" : "advisor unavailable");
                note = ok ? std::string(content) : "advisor unavailable";
            } catch (const std::exception& e) {
                if (trace)
                    trace->add({"advisor", a.agent_id, 0, digest_hex(render_prompt(req)), "", {},
                                std::string("advisor unavailable: ") + e.what()});
                note = "advisor unavailable";
            }
            if (observer) observer->advisory_note(a, note);
            return note;
        }));
    }
    for (auto& f : notes) rep.advisory_notes.push_back(f.get());

    // Template path, also the fallback of the manager's analysis.
    auto apply_template = [&] {
        if (!rep.final_label.hateful()) {
            rep.escalation_risk = EscalationRisk::low;
            rep.interventions.clear();
            return;
        }
        double sum = 0.0;
        std::size_t n = 0;
        for (const auto& v : rep.agent_verdicts) {
            if (v.label == rep.final_label) {
                sum += v.confidence;
                ++n;
            }
        }
        double mean = n ? sum / static_cast<double>(n) : 0.0;
        rep.escalation_risk = escalation_from_confidence(mean, options_.thresholds);
        rep.interventions = templates_.for_label(rep.final_label);
    };

    if (panel.config.mode == PanelMode::multi) {
        const AgentProfile manager = with_role(panel.config.profiles, AgentRole::manager).front();
        PromptBundle b = build_prompt(manager, Task::analyze_incident,
                                      {incident, panel.config.manager_receives_context
                                                     ? std::span<const RetrievedChunk>(contexts)
                                                     : std::span<const RetrievedChunk>()});
        ChatRequest req = request_for(b, manager, "analysis", incident);
        bool parsed = false;
        try {
            for (int attempt = 0; attempt < 2 && !parsed; ++attempt) {
                ChatResponse resp = gateway_.complete(req);
                try {
                    IncidentAnalysis a = parse_incident_analysis(resp.content);
                    rep.escalation_risk = a.escalation;
                    rep.interventions = std::move(a.interventions);
                    parsed = true;
                    record_call(trace, "analysis", manager.agent_id, attempt, req, resp, attempt ? "re-ask" : "");
                } catch (const MalformedVerdict&) {
                    record_call(trace, "analysis", manager.agent_id, attempt, req, resp, attempt ? "re-ask" : "");
                    req.messages.push_back({Role::assistant, resp.content});
                    req.messages.push_back({Role::user,
                                            "Reply in the requested format: an 'escalation:' line followed by "
                                            "an 'interventions:' list."});
                }
            }
        } catch (const std::exception& e) {
            if (trace) trace->add({"analysis", manager.agent_id, 0, digest_hex(render_prompt(req)), "", {}, e.what()});
        }
        if (!parsed) {
            apply_template();
            if (trace) trace->note_last(manager.agent_id, "analysis", "template escalation and interventions used");
        } else if (rep.final_label.hateful() && rep.interventions.empty()) {
            rep.interventions = templates_.for_label(rep.final_label);
        }
    } else {
        apply_template();
    }
    check_report(rep, panel.config.mode == PanelMode::multi);
    return rep;
}

}  // namespace arise
