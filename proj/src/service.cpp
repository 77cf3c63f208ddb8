#include "arise/service.hpp"

#include <algorithm>
#include <filesystem>

namespace arise {

WorkerPool::WorkerPool(std::size_t threads) {
    for (std::size_t i = 0; i < std::max<std::size_t>(1, threads); ++i) {
        threads_.emplace_back([this] {
            for (;;) {
                std::function<void()> job;
                {
                    std::unique_lock lock(mu_);
                    cv_.wait(lock, [&] { return stopping_ || !jobs_.empty(); });
                    if (stopping_) return;
                    job = std::move(jobs_.front());
                    jobs_.pop_front();
                }
                job();
            }
        });
    }
}

WorkerPool::~WorkerPool() { stop(); }

void WorkerPool::post(std::function<void()> job) {
    {
        std::lock_guard lock(mu_);
        if (stopping_) throw ServiceStopped();
        jobs_.push_back(std::move(job));
    }
    cv_.notify_one();
}

void WorkerPool::stop() {
    {
        std::lock_guard lock(mu_);
        stopping_ = true;
        jobs_.clear();
    }
    cv_.notify_all();
    for (auto& t : threads_)
        if (t.joinable()) t.join();
}

struct Service::SessionState {
    mutable std::mutex mu;
    mutable std::condition_variable cv;
    Session session;
    std::vector<AnalysisEvent> events;
    std::uint64_t next_seq = 1;
    std::set<std::string> open_analyses;
    std::unique_ptr<SessionLog> log;
};

/// Turns orchestrator progress into session events.
class Service::EventSink : public PanelObserver {
 public:
    EventSink(Service& svc, SessionState& st, std::string analysis_id)
        : svc_(svc), st_(st), analysis_id_(std::move(analysis_id)) {}

    void agent_started(const AgentProfile& p, std::string_view stage) override {
        emit(EventKind::agent_started, {{"agent_id", p.agent_id}, {"role", to_string(p.role)}, {"stage", stage}});
    }
    void agent_verdict(const Verdict& v) override { emit(EventKind::agent_verdict, to_json(v)); }
    void advisory_note(const AgentProfile& p, const std::string& note) override {
        emit(EventKind::advisory_note, {{"agent_id", p.agent_id}, {"note", note}});
    }
    void manager_decision(const Label& l, const std::string& rationale, bool fallback) override {
        emit(EventKind::manager_decision, {{"label", l.name()}, {"rationale", rationale}, {"fallback", fallback}});
    }

 private:
    void emit(EventKind kind, nlohmann::json payload) {
        std::lock_guard lock(st_.mu);
        if (!st_.open_analyses.count(analysis_id_)) return;
        svc_.emit(st_, analysis_id_, kind, std::move(payload));
    }
    Service& svc_;
    SessionState& st_;
    std::string analysis_id_;
};

Service::Service(Orchestrator& orchestrator, std::vector<AgentProfile> catalog, ServiceOptions options)
    : orch_(orchestrator), catalog_(std::move(catalog)), options_(std::move(options)) {
    if (options_.state_dir.empty()) throw std::invalid_argument("service needs a state directory");
    std::filesystem::create_directories(options_.state_dir);
    if (options_.defaults.profiles.empty()) options_.defaults.profiles = catalog_;
    validate(options_.defaults);
    restore();
    pool_ = std::make_unique<WorkerPool>(options_.workers);
}

Service::~Service() { shutdown(); }

std::shared_ptr<Service::SessionState> Service::find(const std::string& id) const {
    std::lock_guard lock(mu_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw UnknownSession(id);
    return it->second;
}

// Folds one log record into the in-memory state. Caller holds st.mu (or owns st exclusively).
void Service::apply(SessionState& st, const nlohmann::json& rec) {
    const std::string type = rec.at("type").get<std::string>();
    const auto& schemas = orch_.schemas();
    if (type == "created") {
        st.session.session_id = rec.at("session_id").get<std::string>();
        st.session.created_at = parse_timestamp(rec.at("created_at").get<std::string>());
        st.session.config = panel_config_from_json(rec.at("config"), catalog_);
    } else if (type == "message") {
        const auto& m = rec.at("message");
        SessionMessage msg{m.at("author").get<std::string>(), m.at("content").get<std::string>(),
                           parse_timestamp(m.at("timestamp").get<std::string>()), std::nullopt};
        if (!m.at("analysis_id").is_null()) msg.analysis_id = m.at("analysis_id").get<std::string>();
        st.session.messages.push_back(std::move(msg));
    } else if (type == "incident") {
        std::string aid = rec.at("analysis_id").get<std::string>();
        st.session.incidents.push_back({aid, incident_from_json(rec.at("incident"))});
        st.open_analyses.insert(aid);
    } else if (type == "report") {
        st.session.reports.push_back(report_from_json(rec.at("report"), schemas));
    } else if (type == "event") {
        AnalysisEvent e = event_from_json(rec.at("event"));
        st.next_seq = e.seq + 1;
        if (e.terminal()) st.open_analyses.erase(e.analysis_id);
        st.events.push_back(std::move(e));
    } else {
        throw std::runtime_error("unknown session record type " + type);
    }
}

nlohmann::json Service::snapshot_state(const SessionState& st) const {
    nlohmann::json events = nlohmann::json::array();
    for (const auto& e : st.events) events.push_back(to_json(e));
    return {{"session", to_json(st.session)}, {"events", events}, {"open_analyses", st.open_analyses}};
}

void Service::commit(SessionState& st, const nlohmann::json& record) {
    st.log->append(record);
    apply(st, record);
    if (options_.snapshot_every && st.log->records() % options_.snapshot_every == 0)
        st.log->write_snapshot(snapshot_state(st), st.log->records());
}

void Service::emit(SessionState& st, const std::string& analysis_id, EventKind kind, nlohmann::json payload) {
    AnalysisEvent e{st.session.session_id, analysis_id, st.next_seq, kind, std::move(payload)};
    commit(st, {{"type", "event"}, {"event", to_json(e)}});
    st.cv.notify_all();
}

void Service::restore() {
    const auto& schemas = orch_.schemas();
    for (const auto& id : SessionLog::list_sessions(options_.state_dir)) {
        auto loaded = SessionLog::load(options_.state_dir, id);
        auto st = std::make_shared<SessionState>();
        if (loaded.snapshot_state) {
            const auto& snap = *loaded.snapshot_state;
            const auto& s = snap.at("session");
            st->session.session_id = s.at("session_id").get<std::string>();
            st->session.created_at = parse_timestamp(s.at("created_at").get<std::string>());
            st->session.config = panel_config_from_json(s.at("config"), catalog_);
            for (const auto& m : s.at("messages")) apply(*st, {{"type", "message"}, {"message", m}});
            for (const auto& r : s.at("reports")) st->session.reports.push_back(report_from_json(r, schemas));
            for (const auto& i : s.at("incidents"))
                st->session.incidents.push_back(
                    {i.at("analysis_id").get<std::string>(), incident_from_json(i.at("incident"))});
            for (const auto& e : snap.at("events")) apply(*st, {{"type", "event"}, {"event", e}});
            st->open_analyses = snap.at("open_analyses").get<std::set<std::string>>();
        }
        for (const auto& rec : loaded.tail) apply(*st, rec);
        st->log = std::make_unique<SessionLog>(options_.state_dir, id);
        st->log->resume(loaded.records);
        // Analyses cut off by the previous shutdown or crash get their terminal event now.
        auto open = st->open_analyses;
        for (const auto& aid : open)
            emit(*st, aid, EventKind::error, {{"message", "analysis interrupted by service restart"}});
        sessions_.emplace(id, std::move(st));
    }
}

Session Service::create_session(const nlohmann::json& overrides) {
    if (stopping_) throw ServiceStopped();
    if (!overrides.is_object()) throw InvalidConfig("config overrides must be a JSON object");
    PanelConfig cfg = options_.defaults;
    for (const auto& [key, value] : overrides.items()) {
        try {
            if (key == "mode") {
                cfg.mode = panel_mode_from_string(value.get<std::string>());
            } else if (key == "use_rag") {
                cfg.use_rag = value.get<bool>();
            } else if (key == "task") {
                cfg.task = task_from_string(value.get<std::string>());
            } else if (key == "k") {
                cfg.k = value.get<std::size_t>();
            } else if (key == "seed") {
                cfg.seed = value.get<std::uint64_t>();
            } else if (key == "manager_receives_context") {
                cfg.manager_receives_context = value.get<bool>();
            } else if (key == "profiles") {
                cfg = panel_config_from_json(
                    [&] {
                        auto j = to_json(cfg);
                        j["profiles"] = value;
                        return j;
                    }(),
                    catalog_);
            } else {
                throw InvalidConfig("unknown config field '" + key + "'");
            }
        } catch (const nlohmann::json::exception& e) {
            throw InvalidConfig("bad value for '" + key + "': " + e.what());
        } catch (const std::invalid_argument& e) {
            throw InvalidConfig(e.what());
        }
    }
    validate(cfg);

    auto st = std::make_shared<SessionState>();
    const std::string id = random_id_128();
    st->log = std::make_unique<SessionLog>(options_.state_dir, id);
    {
        std::lock_guard lock(st->mu);
        commit(*st, {{"type", "created"},
                     {"session_id", id},
                     {"created_at", format_timestamp(now_utc())},
                     {"config", to_json(cfg)}});
    }
    Session copy = st->session;
    std::lock_guard lock(mu_);
    sessions_.emplace(id, std::move(st));
    return copy;
}

std::string Service::submit_incident(const std::string& session_id, const std::string& text,
                                     std::optional<std::string> context) {
    auto st = find(session_id);
    if (stopping_) throw ServiceStopped();
    Incident incident = validate_incident(text, std::move(context));
    const std::string analysis_id = random_id_128();
    {
        std::lock_guard lock(st->mu);
        SessionMessage m{"teacher", incident.text, incident.timestamp, analysis_id};
        commit(*st, {{"type", "message"}, {"message", to_json(m)}});
        commit(*st, {{"type", "incident"}, {"analysis_id", analysis_id}, {"incident", to_json(incident)}});
    }
    try {
        pool_->post([this, st, analysis_id, incident] { run_analysis(st, analysis_id, incident); });
    } catch (const ServiceStopped&) {
        std::lock_guard lock(st->mu);
        if (st->open_analyses.count(analysis_id))
            emit(*st, analysis_id, EventKind::error, {{"message", "service is shutting down"}});
        throw;
    }
    return analysis_id;
}

void Service::run_analysis(std::shared_ptr<SessionState> st, std::string analysis_id, Incident incident) {
    PanelConfig cfg;
    {
        std::lock_guard lock(st->mu);
        if (!st->open_analyses.count(analysis_id)) return;
        cfg = st->session.config;
    }
    EventSink sink(*this, *st, analysis_id);
    try {
        PanelResult panel = orch_.run_panel(incident, cfg, &sink);
        AnalysisReport report = orch_.compose_report(panel, incident, &sink);
        std::lock_guard lock(st->mu);
        if (!st->open_analyses.count(analysis_id)) return;
        commit(*st, {{"type", "report"}, {"analysis_id", analysis_id}, {"report", to_json(report)}});
        std::string summary = "Final label: " + report.final_label.name() +
                              ". Escalation risk: " + to_string(report.escalation_risk) + ".";
        SessionMessage m{"system", summary, now_utc(), analysis_id};
        commit(*st, {{"type", "message"}, {"message", to_json(m)}});
        emit(*st, analysis_id, EventKind::report_ready, {{"report", to_json(report)}});
    } catch (const std::exception& e) {
        std::lock_guard lock(st->mu);
        if (st->open_analyses.count(analysis_id)) emit(*st, analysis_id, EventKind::error, {{"message", e.what()}});
    }
}

SessionMessage Service::follow_up(const std::string& session_id, const std::string& question) {
    auto st = find(session_id);
    if (stopping_) throw ServiceStopped();
    std::string_view q = trim(question);
    if (q.empty()) throw std::invalid_argument("question is empty");

    AnalysisReport report;
    Incident incident;
    PanelConfig cfg;
    {
        std::lock_guard lock(st->mu);
        if (st->session.reports.empty()) throw NoReportYet();
        report = st->session.reports.back();
        cfg = st->session.config;
        for (const auto& i : st->session.incidents)
            if (i.incident.id == report.incident_id) incident = i.incident;
        SessionMessage m{"teacher", std::string(q), now_utc(), std::nullopt};
        commit(*st, {{"type", "message"}, {"message", to_json(m)}});
    }

    auto managers = with_role(cfg.profiles, AgentRole::manager);
    if (managers.empty()) managers = with_role(catalog_, AgentRole::manager);
    if (managers.empty()) throw InvalidConfig("no manager profile available for follow-up questions");
    const AgentProfile& manager = managers.front();
    PromptBundle b = build_follow_up_prompt(manager, incident, report, q);
    ChatRequest req = b.to_request(orch_.options().model, options_.follow_up_temperature, orch_.options().max_tokens,
                                   session_id + "/follow-up/" + manager.agent_id);
    ChatResponse resp = orch_.gateway().complete(req);
    std::string answer(trim(resp.content));
    if (resp.finish_reason == FinishReason::error || answer.empty())
        throw TransportError(0, "manager gave no answer", false);

    SessionMessage m{"agent:" + manager.agent_id, answer, now_utc(), std::nullopt};
    std::lock_guard lock(st->mu);
    commit(*st, {{"type", "message"}, {"message", to_json(m)}});
    return m;
}

Session Service::get_session(const std::string& session_id) const {
    auto st = find(session_id);
    std::lock_guard lock(st->mu);
    return st->session;
}

std::vector<std::string> Service::session_ids() const {
    std::lock_guard lock(mu_);
    std::vector<std::string> ids;
    for (const auto& [id, st] : sessions_) ids.push_back(id);
    return ids;
}

std::vector<AnalysisEvent> Service::events_after(const std::string& session_id, std::uint64_t after,
                                                 std::chrono::milliseconds wait) const {
    auto st = find(session_id);
    std::unique_lock lock(st->mu);
    auto pending = [&] { return !st->events.empty() && st->events.back().seq > after; };
    if (!pending() && wait.count() > 0)
        st->cv.wait_for(lock, wait, [&] { return pending() || stopping_.load(); });
    std::vector<AnalysisEvent> out;
    // seq is 1-based and gap-free, so event seq s sits at index s-1.
    for (std::size_t i = static_cast<std::size_t>(std::min<std::uint64_t>(after, st->events.size()));
         i < st->events.size(); ++i)
        out.push_back(st->events[i]);
    return out;
}

void Service::shutdown() {
    if (stopping_.exchange(true)) return;
    std::vector<std::shared_ptr<SessionState>> all;
    {
        std::lock_guard lock(mu_);
        for (const auto& [id, st] : sessions_) all.push_back(st);
    }
    for (const auto& st : all) {
        std::lock_guard lock(st->mu);
        auto open = st->open_analyses;
        for (const auto& aid : open)
            emit(*st, aid, EventKind::error, {{"message", "analysis aborted by service shutdown"}});
        st->cv.notify_all();
    }
    if (pool_) pool_->stop();
    for (const auto& st : all) {
        std::lock_guard lock(st->mu);
        st->log->write_snapshot(snapshot_state(*st), st->log->records());
    }
}

}  // namespace arise
