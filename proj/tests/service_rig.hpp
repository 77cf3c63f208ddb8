#pragma once

// Scripted orchestrator + Service over a state directory, for service-level tests.

#include <chrono>
#include <memory>
#include <set>
#include <string>
#include <thread>

#include "arise/service.hpp"

namespace rig {

inline bool has(const std::string& p, const std::string& needle) { return p.find(needle) != std::string::npos; }

// Students: hateful except cognitive science; manager keeps hateful; analysis,
// advisors and follow-up answers are fixed strings.
inline void script_panel(arise::ScriptedBackend& b) {
    using P = const std::string&;
    b.register_script([](P p) { return has(p, "escalation: <low"); },
                      "escalation: medium\ninterventions:\n- talk with the pupils involved\n- follow up with parents");
    b.register_script([](P p) { return has(p, "A teacher asks a follow-up question"); },
                      arise::ScriptedBackend::Responder([](P p) {
                          auto q = p.find("Question: ");
                          return "Answer to: " + p.substr(q + 10, p.find('\n', q) - q - 10);
                      }));
    b.register_script([](P p) { return has(p, "Student judgments:") && has(p, "label: <one of"); },
                      "label: hateful\nconfidence: 0.85\nrationale: the remark targets a protected group");
    b.register_script([](P p) { return has(p, "Agent id: advisor-"); }, "Consider the family's background.");
    b.register_script([](P p) { return has(p, "Agent id: student-cognitive-science\n"); },
                      "label: not-hateful\nconfidence: 0.55\nrationale: could be playground banter");
    b.register_script([](P p) { return has(p, "Agent id: student-"); },
                      "label: hateful\nconfidence: 0.9\nrationale: a slur aimed at a classmate");
}

// Holds every call until release() so analyses stay open.
class GateBackend : public arise::ChatBackend {
 public:
    explicit GateBackend(std::shared_ptr<arise::ChatBackend> inner) : inner_(std::move(inner)) {}
    arise::ChatResponse send(const arise::ChatRequest& r) override {
        std::unique_lock lk(mu_);
        cv_.wait(lk, [&] { return open_; });
        lk.unlock();
        return inner_->send(r);
    }
    void release() {
        std::lock_guard lk(mu_);
        open_ = true;
        cv_.notify_all();
    }

 private:
    std::shared_ptr<arise::ChatBackend> inner_;
    std::mutex mu_;
    std::condition_variable cv_;
    bool open_ = false;
};

struct Stack {
    std::shared_ptr<arise::ScriptedBackend> scripted = std::make_shared<arise::ScriptedBackend>();
    std::shared_ptr<arise::ChatBackend> backend;
    std::unique_ptr<arise::Gateway> gateway;
    std::unique_ptr<arise::Orchestrator> orch;
    std::unique_ptr<arise::Service> service;

    explicit Stack(const std::string& state_dir, std::size_t snapshot_every = 32,
                   std::shared_ptr<arise::ChatBackend> wrap = nullptr) {
        script_panel(*scripted);
        backend = wrap ? wrap : scripted;
        arise::BackendConfig cfg;
        cfg.requests_per_minute = 1'000'000;
        gateway = std::make_unique<arise::Gateway>(backend, cfg);
        orch = std::make_unique<arise::Orchestrator>(*gateway, arise::Schemas::load(), nullptr,
                                                     arise::InterventionTemplates::builtin());
        arise::ServiceOptions so;
        so.state_dir = state_dir;
        so.workers = 4;
        so.snapshot_every = snapshot_every;
        service = std::make_unique<arise::Service>(*orch, arise::builtin_profiles(), so);
    }
};

// Waits for the terminal event of one analysis; returns it, or nullopt on timeout.
inline std::optional<arise::AnalysisEvent> wait_terminal(const arise::Service& svc, const std::string& session,
                                                         const std::string& analysis,
                                                         std::chrono::milliseconds timeout = std::chrono::seconds(20)) {
    auto deadline = std::chrono::steady_clock::now() + timeout;
    while (std::chrono::steady_clock::now() < deadline) {
        for (const auto& e : svc.events_after(session, 0))
            if (e.analysis_id == analysis && e.terminal()) return e;
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    return std::nullopt;
}

// Seqs 1..n with no gap or repeat.
inline bool gap_free(const std::vector<arise::AnalysisEvent>& events) {
    for (std::size_t i = 0; i < events.size(); ++i)
        if (events[i].seq != i + 1) return false;
    return true;
}

}  // namespace rig
