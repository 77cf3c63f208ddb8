#pragma once

#include <memory>
#include <string>

#include "arise/service.hpp"

namespace arise {

/// HTTP+JSON front end of Service:
///   POST /sessions                  -> 201 session
///   POST /sessions/{id}/incidents   -> 202 {"analysis_id"}
///   GET  /sessions/{id}/events      -> text/event-stream (?after=<seq>, Last-Event-ID, ?follow=0)
///   POST /sessions/{id}/follow-up   -> 200 message
///   GET  /sessions/{id}             -> 200 session
///   GET  /healthz                   -> 200 {"status":"ok"}
/// Errors are {"code", "message"} with 400/404/409/422/502/503.
class HttpService {
 public:
    explicit HttpService(Service& service);
    ~HttpService();

    // Returns false when the address cannot be bound.
    bool bind(const std::string& host, int port);
    // Binds an ephemeral port and returns it, or -1.
    int bind_any(const std::string& host);
    // Blocks until stop().
    bool serve();
    void stop();
    bool running() const;

 private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// One server-sent event frame.
std::string sse_frame(const AnalysisEvent& e);

}  // namespace arise
