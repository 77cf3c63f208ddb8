#include "arise/http_backend.hpp"

#include <cstdlib>

#include <httplib.h>

namespace arise {

ParsedUrl parse_url(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw std::invalid_argument("endpoint url needs a scheme: " + url);
    auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

nlohmann::json chat_request_body(const ChatRequest& req) {
    nlohmann::json messages = nlohmann::json::array();
    for (const auto& m : req.messages) messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
    nlohmann::json body{{"model", req.model},
                        {"messages", messages},
                        {"temperature", req.temperature},
                        {"max_tokens", req.max_tokens}};
    if (req.seed) body["seed"] = *req.seed;
    return body;
}

ChatResponse chat_response_from_body(const nlohmann::json& body) {
    ChatResponse r;
    const auto& choice = body.at("choices").at(0);
    const auto& content = choice.at("message").at("content");
    r.content = content.is_null() ? "" : content.get<std::string>();
    std::string finish = choice.value("finish_reason", "stop");
    r.finish_reason = finish == "length" ? FinishReason::length
                      : finish == "stop" ? FinishReason::stop
                                         : FinishReason::error;
    if (r.finish_reason == FinishReason::stop && r.content.empty()) r.finish_reason = FinishReason::error;
    if (body.contains("usage")) {
        r.usage.prompt_tokens = body["usage"].value("prompt_tokens", 0);
        r.usage.completion_tokens = body["usage"].value("completion_tokens", 0);
    }
    return r;
}

HttpBackend::HttpBackend(BackendConfig config) : config_(std::move(config)), url_(parse_url(config_.endpoint_url)) {
    validate(config_);
    if (const char* key = std::getenv(config_.api_key_env.c_str())) api_key_ = key;
}

ChatResponse HttpBackend::send(const ChatRequest& req) {
    httplib::Client cli(url_.scheme_host_port);
    cli.set_connection_timeout(std::chrono::seconds(10));
    cli.set_read_timeout(config_.timeout);
    cli.set_write_timeout(std::chrono::seconds(30));
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

    nlohmann::json body = chat_request_body(req);
    std::vector<std::string> notes;
    for (int param_retry = 0;; ++param_retry) {
        auto res = cli.Post(url_.path, headers, body.dump(), "application/json");
        if (!res) throw TransportError(0, "connection failed: " + httplib::to_string(res.error()), true);
        if (res->status == 200) {
            ChatResponse out;
            try {
                out = chat_response_from_body(nlohmann::json::parse(res->body));
            } catch (const nlohmann::json::exception& e) {
                throw TransportError(200, std::string("unreadable provider response: ") + e.what(), true);
            }
            out.notes = std::move(notes);
            return out;
        }
        if (res->status == 400 && param_retry < 2) {
            bool dropped = false;
            for (const char* param : {"temperature", "max_tokens"}) {
                if (body.contains(param) && res->body.find(param) != std::string::npos) {
                    body.erase(param);
                    notes.push_back(std::string("dropped unsupported parameter ") + param);
                    dropped = true;
                }
            }
            if (dropped) continue;
        }
        bool transient = res->status == 429 || res->status >= 500;
        throw TransportError(res->status, "provider returned HTTP " + std::to_string(res->status), transient);
    }
}

}  // namespace arise
