#pragma once

#include <filesystem>
#include <random>
#include <string>

#include <doctest.h>

#include "arise/core.hpp"
#include "arise/gateway.hpp"
#include "arise/orchestrator.hpp"
#include "arise/personas.hpp"

namespace test {

inline std::string fixture(const std::string& rel) { return std::string(ARISE_FIXTURE_DIR) + "/" + rel; }

inline const arise::Schemas& schemas() {
    static const arise::Schemas s = arise::Schemas::load();
    return s;
}

inline arise::Verdict verdict(const std::string& agent, const arise::SchemaRef& s, const std::string& label,
                              double conf = 0.8, std::string rationale = "because") {
    return {agent, arise::Label::named(s, label), conf, std::move(rationale), {}};
}

inline std::string wire(const std::string& label, double conf = 0.8, const std::string& why = "scripted") {
    return "label: " + label + "\nconfidence: " + std::to_string(conf) + "\nrationale: " + why;
}

// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
    std::filesystem::path path;
    TempDir() {
        std::random_device rd;
        path = std::filesystem::temp_directory_path() / ("arise-test-" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    std::string str() const { return path.string(); }
};

// Prompt predicates for scripted backends.
inline bool from_agent(const std::string& prompt, const std::string& agent_id) {
    return prompt.find("Agent id: " + agent_id + "\n") != std::string::npos;
}
inline bool is_aggregate(const std::string& p) { return p.find("Student judgments:") != std::string::npos &&
                                                        p.find("label: <one of") != std::string::npos; }
inline bool is_analysis(const std::string& p) { return p.find("escalation: <low") != std::string::npos; }

inline void script_student(arise::ScriptedBackend& b, const std::string& agent_id, std::string response) {
    b.register_script(
        [agent_id](const std::string& p) { return from_agent(p, agent_id) && !is_aggregate(p) && !is_analysis(p); },
        std::move(response));
}
inline void script_aggregate(arise::ScriptedBackend& b, std::string response) {
    b.register_script([](const std::string& p) { return is_aggregate(p); }, std::move(response));
}
inline void script_analysis(arise::ScriptedBackend& b, std::string response) {
    b.register_script([](const std::string& p) { return is_analysis(p); }, std::move(response));
}

inline arise::BackendConfig fast_config() {
    arise::BackendConfig c;
    c.requests_per_minute = 1'000'000;
    c.backoff_base = std::chrono::milliseconds(1);
    return c;
}

inline std::vector<arise::AgentProfile> students() {
    return arise::with_role(arise::builtin_profiles(), arise::AgentRole::student);
}
inline arise::AgentProfile manager() { return arise::with_role(arise::builtin_profiles(), arise::AgentRole::manager).at(0); }

}  // namespace test
