#include "arise/http_service.hpp"

#include <httplib.h>

namespace arise {

std::string sse_frame(const AnalysisEvent& e) {
    return "id: " + std::to_string(e.seq) + "\nevent: " + to_string(e.kind) + "\ndata: " + to_json(e).dump() + "\n\n";
}

namespace {

void problem(httplib::Response& res, int status, const std::string& code, const std::string& message) {
    res.status = status;
    res.set_content(nlohmann::json{{"code", code}, {"message", message}}.dump(), "application/json");
}

void reply(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

nlohmann::json parse_body(const httplib::Request& req, bool allow_empty) {
    if (req.body.empty()) {
        if (allow_empty) return nlohmann::json::object();
        throw std::invalid_argument("request body is empty");
    }
    auto j = nlohmann::json::parse(req.body);
    if (!j.is_object()) throw std::invalid_argument("request body must be a JSON object");
    return j;
}

// Maps service exceptions onto problem responses.
template <typename F>
void guarded(httplib::Response& res, F&& f) {
    try {
        f();
    } catch (const UnknownSession& e) {
        problem(res, 404, "unknown_session", e.what());
    } catch (const NoReportYet& e) {
        problem(res, 409, "no_report_yet", e.what());
    } catch (const EmptyIncident& e) {
        problem(res, 422, "empty_incident", e.what());
    } catch (const InvalidConfig& e) {
        problem(res, 422, "invalid_config", e.what());
    } catch (const ServiceStopped& e) {
        problem(res, 503, "shutting_down", e.what());
    } catch (const TransportError& e) {
        problem(res, 502, "backend_failure", e.what());
    } catch (const RateLimited& e) {
        problem(res, 502, "backend_failure", e.what());
    } catch (const nlohmann::json::exception& e) {
        problem(res, 400, "bad_request", e.what());
    } catch (const std::invalid_argument& e) {
        problem(res, 400, "bad_request", e.what());
    } catch (const std::exception& e) {
        problem(res, 500, "internal", e.what());
    }
}

}  // namespace

struct HttpService::Impl {
    Service& service;
    httplib::Server server;
    explicit Impl(Service& s) : service(s) {}
};

HttpService::HttpService(Service& service) : impl_(std::make_unique<Impl>(service)) {
    auto& svr = impl_->server;
    Service& svc = service;
    // Event streams hold a worker each.
    svr.new_task_queue = [] { return new httplib::ThreadPool(64); };
    // No SO_REUSEPORT: a second server on a busy port must fail to bind.
    svr.set_socket_options([](socket_t sock) {
        int yes = 1;
        setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
    });

    svr.Get("/healthz", [](const httplib::Request&, httplib::Response& res) { reply(res, 200, {{"status", "ok"}}); });

    svr.Post("/sessions", [&svc](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            nlohmann::json overrides;
            try {
                overrides = parse_body(req, true);
            } catch (const std::exception& e) {
                throw InvalidConfig(e.what());
            }
            reply(res, 201, to_json(svc.create_session(overrides)));
        });
    });

    svr.Get(R"(/sessions/([^/]+))", [&svc](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { reply(res, 200, to_json(svc.get_session(req.matches[1]))); });
    });

    svr.Post(R"(/sessions/([^/]+)/incidents)", [&svc](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            auto body = parse_body(req, false);
            std::optional<std::string> context;
            if (body.contains("context") && !body["context"].is_null()) context = body["context"].get<std::string>();
            std::string id = svc.submit_incident(req.matches[1], body.value("text", std::string()), context);
            reply(res, 202, {{"analysis_id", id}});
        });
    });

    svr.Post(R"(/sessions/([^/]+)/follow-up)", [&svc](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            auto body = parse_body(req, false);
            reply(res, 200, to_json(svc.follow_up(req.matches[1], body.at("question").get<std::string>())));
        });
    });

    svr.Get(R"(/sessions/([^/]+)/events)", [&svc](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const std::string id = req.matches[1];
            svc.get_session(id);  // 404 before the stream starts
            std::uint64_t after = 0;
            if (req.has_param("after")) after = std::stoull(req.get_param_value("after"));
            else if (req.has_header("Last-Event-ID")) after = std::stoull(req.get_header_value("Last-Event-ID"));
            const bool follow = req.get_param_value("follow") != "0";
            auto cursor = std::make_shared<std::uint64_t>(after);
            res.set_header("Cache-Control", "no-cache");
            res.set_chunked_content_provider(
                "text/event-stream", [&svc, id, follow, cursor](std::size_t, httplib::DataSink& sink) {
                    auto events = svc.events_after(id, *cursor, follow ? std::chrono::milliseconds(500)
                                                                       : std::chrono::milliseconds(0));
                    for (const auto& e : events) {
                        std::string frame = sse_frame(e);
                        if (!sink.write(frame.data(), frame.size())) return false;
                        *cursor = e.seq;
                    }
                    if (!follow || svc.stopping()) {
                        sink.done();
                    } else if (events.empty()) {
                        static const std::string keepalive = ": keep-alive\n\n";
                        if (!sink.write(keepalive.data(), keepalive.size())) return false;
                    }
                    return true;
                });
        });
    });
}

HttpService::~HttpService() { stop(); }

bool HttpService::bind(const std::string& host, int port) { return impl_->server.bind_to_port(host, port); }

int HttpService::bind_any(const std::string& host) { return impl_->server.bind_to_any_port(host); }

bool HttpService::serve() { return impl_->server.listen_after_bind(); }

void HttpService::stop() {
    if (impl_->server.is_running()) impl_->server.stop();
}

bool HttpService::running() const { return impl_->server.is_running(); }

}  // namespace arise
