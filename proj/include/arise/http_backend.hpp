#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "arise/gateway.hpp"

namespace arise {

struct ParsedUrl {
    std::string scheme_host_port;  // "https://api.example.com:443"
    std::string path;              // "/v1/chat/completions"
};

ParsedUrl parse_url(const std::string& url);

nlohmann::json chat_request_body(const ChatRequest& req);
ChatResponse chat_response_from_body(const nlohmann::json& body);

/// Chat-completions client. Sends {model, messages[], temperature, max_tokens}
/// and maps choices[0] back. 429 and 5xx are transient; other 4xx are not,
/// except a 400 naming `temperature` or `max_tokens`, which is retried once
/// without that parameter and recorded in ChatResponse::notes.
class HttpBackend : public ChatBackend {
 public:
    explicit HttpBackend(BackendConfig config);
    ChatResponse send(const ChatRequest& req) override;

 private:
    BackendConfig config_;
    ParsedUrl url_;
    std::string api_key_;
};

}  // namespace arise
