#include "arise/gateway.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <thread>

namespace arise {

std::string to_string(Role r) {
    switch (r) {
        case Role::system: return "system";
        case Role::user: return "user";
        case Role::assistant: return "assistant";
    }
    return "user";
}

std::string to_string(FinishReason f) {
    switch (f) {
        case FinishReason::stop: return "stop";
        case FinishReason::length: return "length";
        case FinishReason::error: return "error";
    }
    return "error";
}

void validate(const BackendConfig& c) {
    if (c.max_retries < 0) throw std::invalid_argument("max_retries must be >= 0");
    if (c.requests_per_minute <= 0) throw std::invalid_argument("requests_per_minute must be > 0");
}

std::string render_prompt(const ChatRequest& req) {
    std::string out;
    for (const auto& m : req.messages) {
        out += to_string(m.role);
        out += ": ";
        out += m.content;
        out += '\n';
    }
    return out;
}

void ScriptedBackend::register_script(Matcher matcher, std::string response) {
    rules_.push_back({std::move(matcher), [r = std::move(response)](const std::string&) { return r; }});
}

void ScriptedBackend::register_script(Matcher matcher, Responder responder) {
    rules_.push_back({std::move(matcher), std::move(responder)});
}

void ScriptedBackend::register_substring(std::string needle, std::string response) {
    register_script([n = std::move(needle)](const std::string& p) { return p.find(n) != std::string::npos; },
                    std::move(response));
}

ChatResponse ScriptedBackend::send(const ChatRequest& req) {
    const std::string prompt = render_prompt(req);
    ChatResponse resp;
    resp.usage.prompt_tokens = static_cast<int>(split_whitespace(prompt).size());
    for (const auto& rule : rules_) {
        if (rule.matcher(prompt)) {
            resp.content = rule.responder(prompt);
            resp.finish_reason = resp.content.empty() ? FinishReason::error : FinishReason::stop;
            resp.usage.completion_tokens = static_cast<int>(split_whitespace(resp.content).size());
            return resp;
        }
    }
    resp.content = unscripted;
    resp.finish_reason = FinishReason::error;
    return resp;
}

RateLimiter::RateLimiter(int requests_per_minute)
    : interval_(std::chrono::duration_cast<Clock::duration>(std::chrono::minutes(1)) /
                std::max(1, requests_per_minute)) {}

void RateLimiter::acquire(bool fail_fast) {
    Clock::time_point slot;
    {
        std::lock_guard lock(mu_);
        auto now = Clock::now();
        slot = std::max(now, next_slot_);
        if (fail_fast && slot > now) throw RateLimited();
        next_slot_ = slot + interval_;
    }
    std::this_thread::sleep_until(slot);
}

Gateway::Gateway(std::shared_ptr<ChatBackend> backend, BackendConfig config)
    : backend_(std::move(backend)),
      config_(std::move(config)),
      limiter_((validate(config_), config_.requests_per_minute)),
      sleep_([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }) {}

ChatResponse Gateway::complete(const ChatRequest& req) {
    if (req.messages.empty()) throw std::invalid_argument("chat request without messages");
    for (int attempt = 0;; ++attempt) {
        limiter_.acquire(config_.fail_fast);
        auto start = std::chrono::steady_clock::now();
        try {
            ChatResponse r = backend_->send(req);
            r.latency = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start);
            return r;
        } catch (const TransportError& e) {
            if (!e.transient() || attempt >= config_.max_retries) throw;
        }
        sleep_(config_.backoff_base * (1LL << std::min(attempt, 16)));
    }
}

namespace {

struct Fields {
    std::optional<std::string> label;
    std::optional<std::string> confidence;
    std::optional<std::string> rationale;
};

std::optional<std::string_view> field_value(std::string_view line, std::string_view key) {
    std::string_view t = trim(line);
    if (!starts_with_ci(t, key)) return std::nullopt;
    std::string_view rest = t.substr(key.size());
    rest = trim(rest);
    if (rest.empty() || rest.front() != ':') return std::nullopt;
    return trim(rest.substr(1));
}

}  // namespace

StructuredVerdict parse_structured_verdict(const std::string& content, const SchemaRef& schema) {
    Fields f;
    bool in_rationale = false;
    for (const auto& line : split_lines(content)) {
        if (auto v = field_value(line, "label")) {
            f.label = std::string(*v);
            in_rationale = false;
        } else if (auto v = field_value(line, "confidence")) {
            f.confidence = std::string(*v);
            in_rationale = false;
        } else if (auto v = field_value(line, "rationale")) {
            f.rationale = std::string(*v);
            in_rationale = true;
        } else if (in_rationale) {
            *f.rationale += '\n';
            *f.rationale += line;
        }
    }
    if (!f.label || !f.confidence || !f.rationale)
        throw MalformedVerdict("verdict is missing label, confidence or rationale");

    StructuredVerdict out;
    try {
        out.label = parse_label(schema, *f.label);
    } catch (const UnknownLabel& e) {
        throw MalformedVerdict(e.what());
    }
    if (out.label.name() != fold(*f.label))
        throw MalformedVerdict("label '" + *f.label + "' is not a canonical class name");

    const std::string& c = *f.confidence;
    double conf = 0.0;
    auto [ptr, ec] = std::from_chars(c.data(), c.data() + c.size(), conf);
    if (ec != std::errc() || ptr != c.data() + c.size() || !std::isfinite(conf) || conf < 0.0 || conf > 1.0)
        throw MalformedVerdict("confidence '" + c + "' is not a number in [0,1]");
    out.confidence = conf;
    out.rationale = std::string(trim(*f.rationale));
    if (out.rationale.empty()) throw MalformedVerdict("empty rationale");
    return out;
}

IncidentAnalysis parse_incident_analysis(const std::string& content) {
    IncidentAnalysis out;
    bool have_escalation = false;
    bool in_list = false;
    for (const auto& line : split_lines(content)) {
        std::string_view t = trim(line);
        if (auto v = field_value(t, "escalation")) {
            try {
                out.escalation = escalation_from_string(*v);
            } catch (const std::invalid_argument& e) {
                throw MalformedVerdict(e.what());
            }
            have_escalation = true;
            in_list = false;
        } else if (auto v = field_value(t, "interventions")) {
            in_list = true;
            if (!v->empty()) out.interventions.emplace_back(*v);
        } else if (in_list && !t.empty() && (t.front() == '-' || t.front() == '*')) {
            std::string_view item = trim(t.substr(1));
            if (!item.empty()) out.interventions.emplace_back(item);
        }
    }
    if (!have_escalation) throw MalformedVerdict("analysis is missing escalation");
    return out;
}

const char* const verdict_format_reminder =
    "Your previous reply could not be parsed. Reply with exactly three lines:\n"
    "label: <one class name from the list>\n"
    "confidence: <number between 0 and 1>\n"
    "rationale: <one or two sentences>";

VerdictCall complete_verdict(Gateway& gw, const ChatRequest& req, const SchemaRef& schema) {
    VerdictCall out;
    ChatRequest current = req;
    for (int attempt = 0; attempt < 2; ++attempt) {
        ChatResponse resp = gw.complete(current);
        out.calls.emplace_back(current, resp);
        if (resp.finish_reason != FinishReason::error) {
            try {
                out.verdict = parse_structured_verdict(resp.content, schema);
                return out;
            } catch (const MalformedVerdict&) {
            }
        }
        current.messages.push_back({Role::assistant, resp.content});
        current.messages.push_back({Role::user, verdict_format_reminder});
    }
    out.defaulted = true;
    out.verdict.label = Label::of(schema, schema->fallback_index());
    out.verdict.confidence = 0.0;
    out.verdict.rationale = "no parsable verdict after re-ask";
    return out;
}

}  // namespace arise
