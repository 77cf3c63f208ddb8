#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "arise/core.hpp"

namespace arise {

enum class Role { system, user, assistant };
std::string to_string(Role r);

struct ChatMessage {
    Role role = Role::user;
    std::string content;
};

struct ChatRequest {
    std::string model;
    std::vector<ChatMessage> messages;
    double temperature = 0.0;
    int max_tokens = 1024;
    std::string request_tag;
    std::optional<std::uint64_t> seed;
};

enum class FinishReason { stop, length, error };
std::string to_string(FinishReason f);

struct Usage {
    int prompt_tokens = 0;
    int completion_tokens = 0;
};

struct ChatResponse {
    std::string content;
    FinishReason finish_reason = FinishReason::stop;
    Usage usage;
    std::chrono::milliseconds latency{0};
    // Parameters the provider refused and that were dropped on retry.
    std::vector<std::string> notes;
};

struct BackendConfig {
    std::string endpoint_url = "https://api.openai.com/v1/chat/completions";
    std::string api_key_env = "ARISE_API_KEY";
    int max_retries = 3;
    std::chrono::milliseconds backoff_base{500};
    int requests_per_minute = 60;
    // Throw RateLimited instead of waiting for a slot.
    bool fail_fast = false;
    std::chrono::seconds timeout{120};
};

void validate(const BackendConfig& c);

class TransportError : public std::runtime_error {
 public:
    TransportError(int status, std::string what, bool transient)
        : std::runtime_error(std::move(what)), status_(status), transient_(transient) {}
    int status() const { return status_; }
    bool transient() const { return transient_; }

 private:
    int status_;
    bool transient_;
};

class RateLimited : public std::runtime_error {
 public:
    RateLimited() : std::runtime_error("local rate limit reached") {}
};

class MalformedVerdict : public std::runtime_error {
 public:
    using std::runtime_error::runtime_error;
};

// "role: content" lines, one message after another. This is what script matchers see.
std::string render_prompt(const ChatRequest& req);

/// One attempt against a provider. Throws TransportError on failure.
class ChatBackend {
 public:
    virtual ~ChatBackend() = default;
    virtual ChatResponse send(const ChatRequest& req) = 0;
};

/// Deterministic offline backend. Scripts are matched against render_prompt(req)
/// in registration order; register everything before concurrent use.
class ScriptedBackend : public ChatBackend {
 public:
    using Matcher = std::function<bool(const std::string& prompt)>;
    using Responder = std::function<std::string(const std::string& prompt)>;

    static constexpr const char* unscripted = "UNSCRIPTED";

    void register_script(Matcher matcher, std::string response);
    void register_script(Matcher matcher, Responder responder);
    void register_substring(std::string needle, std::string response);

    ChatResponse send(const ChatRequest& req) override;

 private:
    struct Rule {
        Matcher matcher;
        Responder responder;
    };
    std::vector<Rule> rules_;
};

/// Fair FIFO limiter: callers get consecutive slots spaced 60s/rpm apart, in
/// arrival order.
class RateLimiter {
 public:
    explicit RateLimiter(int requests_per_minute);
    // Blocks until the caller's slot. With fail_fast, throws RateLimited instead
    // of waiting.
    void acquire(bool fail_fast);

 private:
    using Clock = std::chrono::steady_clock;
    std::mutex mu_;
    Clock::duration interval_;
    Clock::time_point next_slot_{};
};

/// Retry + rate-limit policy around a backend. Safe for concurrent complete().
class Gateway {
 public:
    Gateway(std::shared_ptr<ChatBackend> backend, BackendConfig config);

    ChatResponse complete(const ChatRequest& req);

    const BackendConfig& config() const { return config_; }
    // Test hook; sleeps for backoff by default.
    void set_sleeper(std::function<void(std::chrono::milliseconds)> sleeper) { sleep_ = std::move(sleeper); }

 private:
    std::shared_ptr<ChatBackend> backend_;
    BackendConfig config_;
    RateLimiter limiter_;
    std::function<void(std::chrono::milliseconds)> sleep_;
};

struct StructuredVerdict {
    Label label;
    double confidence = 0.0;
    std::string rationale;
};

/// Parses the three-line wire format
///   label: <class>
///   confidence: <0..1>
///   rationale: <text, may continue on following lines>
/// The label must be a canonical class name of `schema`.
StructuredVerdict parse_structured_verdict(const std::string& content, const SchemaRef& schema);

struct IncidentAnalysis {
    EscalationRisk escalation = EscalationRisk::low;
    std::vector<std::string> interventions;
};

/// Parses
///   escalation: low|medium|high
///   interventions:
///   - first
///   - second
IncidentAnalysis parse_incident_analysis(const std::string& content);

extern const char* const verdict_format_reminder;

struct VerdictCall {
    StructuredVerdict verdict;
    bool defaulted = false;  // both attempts malformed; fallback class assigned
    std::vector<std::pair<ChatRequest, ChatResponse>> calls;
};

/// Asks once; on a malformed reply asks again with a format reminder appended;
/// if that also fails, assigns the schema's fallback class with confidence 0.
VerdictCall complete_verdict(Gateway& gw, const ChatRequest& req, const SchemaRef& schema);

}  // namespace arise
