#include <atomic>
#include <thread>

#include <httplib.h>

#include "arise/gateway.hpp"
#include "arise/http_backend.hpp"
#include "support.hpp"

using namespace arise;

namespace {

ChatRequest request(const std::string& user) {
    ChatRequest r;
    r.model = "m";
    r.messages = {{Role::system, "Agent id: a\n"}, {Role::user, user}};
    return r;
}

// Backend failing with the given statuses before answering "ok".
class FlakyBackend : public ChatBackend {
 public:
    explicit FlakyBackend(std::vector<int> failures) : failures_(std::move(failures)) {}
    ChatResponse send(const ChatRequest&) override {
        std::size_t n = attempts++;
        if (n < failures_.size())
            throw TransportError(failures_[n], "boom", failures_[n] == 429 || failures_[n] >= 500);
        return {"ok", FinishReason::stop, {}, {}, {}};
    }
    std::atomic<std::size_t> attempts{0};

 private:
    std::vector<int> failures_;
};

// Local chat-completions stub answering with a scripted list of statuses.
struct StubServer {
    httplib::Server svr;
    std::thread th;
    int port = -1;
    std::atomic<int> hits{0};
    std::vector<nlohmann::json> bodies;
    std::mutex mu;

    explicit StubServer(std::function<void(int, const nlohmann::json&, httplib::Response&)> reply) {
        svr.Post("/v1/chat/completions", [this, reply](const httplib::Request& req, httplib::Response& res) {
            auto body = nlohmann::json::parse(req.body);
            {
                std::lock_guard lk(mu);
                bodies.push_back(body);
            }
            reply(hits++, body, res);
        });
        port = svr.bind_to_any_port("127.0.0.1");
        th = std::thread([this] { svr.listen_after_bind(); });
        svr.wait_until_ready();
    }
    ~StubServer() {
        svr.stop();
        th.join();
    }
    std::string url() const { return "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions"; }
};

std::string ok_body(const std::string& content) {
    return nlohmann::json{{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}, {"finish_reason", "stop"}}}},
                          {"usage", {{"prompt_tokens", 11}, {"completion_tokens", 5}}}}
        .dump();
}

}  // namespace

TEST_CASE("scripted backend echoes and is deterministic") {
    auto b = std::make_shared<ScriptedBackend>();
    b->register_substring("slur", "hateful|0.9|slur targets group");
    Gateway gw(b, test::fast_config());
    auto r1 = gw.complete(request("a slur was used"));
    auto r2 = gw.complete(request("a slur was used"));
    CHECK(r1.content == "hateful|0.9|slur targets group");
    CHECK(r1.content == r2.content);
    CHECK(r1.finish_reason == FinishReason::stop);
}

TEST_CASE("scripted matching order and fallback") {
    ScriptedBackend b;
    b.register_substring("psychology", "first");
    b.register_substring("psych", "second");
    CHECK(b.send(request("student of psychology")).content == "first");
    CHECK(b.send(request("psychiatrist")).content == "second");
    auto miss = b.send(request("nothing matches"));
    CHECK(miss.content == "UNSCRIPTED");
    CHECK(miss.finish_reason == FinishReason::error);
}

TEST_CASE("retries transient errors with exponential backoff") {
    auto flaky = std::make_shared<FlakyBackend>(std::vector<int>{500, 503});
    auto cfg = test::fast_config();
    cfg.max_retries = 3;
    cfg.backoff_base = std::chrono::milliseconds(100);
    Gateway gw(flaky, cfg);
    std::vector<std::chrono::milliseconds> sleeps;
    gw.set_sleeper([&](std::chrono::milliseconds d) { sleeps.push_back(d); });
    CHECK(gw.complete(request("x")).content == "ok");
    CHECK(flaky->attempts == 3);
    CHECK(sleeps == std::vector<std::chrono::milliseconds>{std::chrono::milliseconds(100), std::chrono::milliseconds(200)});
}

TEST_CASE("attempts never exceed 1 + max_retries") {
    for (int max_retries = 0; max_retries <= 4; ++max_retries) {
        auto flaky = std::make_shared<FlakyBackend>(std::vector<int>(10, 502));
        auto cfg = test::fast_config();
        cfg.max_retries = max_retries;
        Gateway gw(flaky, cfg);
        gw.set_sleeper([](auto) {});
        try {
            gw.complete(request("x"));
            FAIL("expected TransportError");
        } catch (const TransportError& e) {
            CHECK(e.status() == 502);
        }
        CHECK(flaky->attempts == static_cast<std::size_t>(max_retries + 1));
    }
}

TEST_CASE("non-transient errors are not retried") {
    auto flaky = std::make_shared<FlakyBackend>(std::vector<int>{401});
    Gateway gw(flaky, test::fast_config());
    gw.set_sleeper([](auto) {});
    CHECK_THROWS_AS(gw.complete(request("x")), TransportError);
    CHECK(flaky->attempts == 1);
}

TEST_CASE("rate limiter") {
    SUBCASE("fail fast once the budget is used") {
        RateLimiter rl(1);
        CHECK_NOTHROW(rl.acquire(true));
        CHECK_THROWS_AS(rl.acquire(true), RateLimited);
    }
    SUBCASE("waiting callers are spaced by 60s/rpm") {
        RateLimiter rl(1200);  // 50 ms apart
        auto t0 = std::chrono::steady_clock::now();
        for (int i = 0; i < 4; ++i) rl.acquire(false);
        auto elapsed = std::chrono::steady_clock::now() - t0;
        CHECK(elapsed >= std::chrono::milliseconds(150));
    }
    SUBCASE("config validation") {
        BackendConfig c;
        c.requests_per_minute = 0;
        CHECK_THROWS_AS(validate(c), std::invalid_argument);
        c.requests_per_minute = 1;
        c.max_retries = -1;
        CHECK_THROWS_AS(validate(c), std::invalid_argument);
    }
}

TEST_CASE("parse_structured_verdict") {
    const auto& s = test::schemas();
    auto v = parse_structured_verdict("label: irony\nconfidence: 0.7\nrationale: mock", s.implicit_7way);
    CHECK(v.label.name() == "irony");
    CHECK(v.confidence == doctest::Approx(0.7));
    CHECK(v.rationale == "mock");
    CHECK_THROWS_AS(parse_structured_verdict("label: sarcasm\nconfidence: 0.7\nrationale: x", s.implicit_7way),
                    MalformedVerdict);
    CHECK_THROWS_AS(parse_structured_verdict("rationale only", s.implicit_7way), MalformedVerdict);
    CHECK_THROWS_AS(parse_structured_verdict("label: irony\nconfidence: 1.5\nrationale: x", s.implicit_7way),
                    MalformedVerdict);
    CHECK_THROWS_AS(parse_structured_verdict("label: irony\nconfidence: high\nrationale: x", s.implicit_7way),
                    MalformedVerdict);
    // Aliases are a dataset vocabulary; agents must name the class itself.
    CHECK_THROWS_AS(parse_structured_verdict("label: threatening\nconfidence: 0.5\nrationale: x", s.implicit_7way),
                    MalformedVerdict);
    auto multi = parse_structured_verdict("Label: HATEFUL\nconfidence: 1\nrationale: line one\nline two",
                                          s.explicit_detection);
    CHECK(multi.label.name() == "hateful");
    CHECK(multi.rationale == "line one\nline two");
}

TEST_CASE("parse_structured_verdict only accepts label strings that round-trip") {
    const auto& s = test::schemas();
    for (const auto& schema : {s.explicit_detection, s.implicit_7way}) {
        for (const auto& raw : {std::string("hate"), std::string("stereotype"), std::string("irony!"),
                                std::string("not hateful")}) {
            try {
                auto v = parse_structured_verdict("label: " + raw + "\nconfidence: 0.5\nrationale: r", schema);
                CHECK(v.label.name() == fold(raw));
            } catch (const MalformedVerdict&) {
            }
        }
    }
}

TEST_CASE("parse_incident_analysis") {
    auto a = parse_incident_analysis("escalation: High\ninterventions:\n- talk to both pupils\n- inform parents\n");
    CHECK(a.escalation == EscalationRisk::high);
    CHECK(a.interventions == std::vector<std::string>{"talk to both pupils", "inform parents"});
    CHECK_THROWS_AS(parse_incident_analysis("escalation: extreme\ninterventions:\n- x"), MalformedVerdict);
    // An empty list parses; compose_report fills it from templates when the label needs it.
    CHECK(parse_incident_analysis("escalation: low\n").interventions.empty());
    CHECK_THROWS_AS(parse_incident_analysis("interventions:\n- x"), MalformedVerdict);
}

TEST_CASE("complete_verdict re-asks once, then falls back") {
    const auto& s = test::schemas();
    SUBCASE("good second answer") {
        auto b = std::make_shared<ScriptedBackend>();
        b->register_script([](const std::string& p) { return p.find("could not be parsed") != std::string::npos; },
                           test::wire("irony", 0.6));
        b->register_substring("classify", "I think it is irony");
        Gateway gw(b, test::fast_config());
        auto vc = complete_verdict(gw, request("classify this"), s.implicit_7way);
        CHECK_FALSE(vc.defaulted);
        CHECK(vc.calls.size() == 2);
        CHECK(vc.verdict.label.name() == "irony");
    }
    SUBCASE("malformed twice") {
        auto b = std::make_shared<ScriptedBackend>();
        b->register_substring("classify", "no idea");
        Gateway gw(b, test::fast_config());
        auto vc = complete_verdict(gw, request("classify this"), s.implicit_7way);
        CHECK(vc.defaulted);
        CHECK(vc.calls.size() == 2);
        CHECK(vc.verdict.label.name() == "other");
        auto vx = complete_verdict(gw, request("classify this"), s.explicit_detection);
        CHECK(vx.verdict.label.name() == "not-hateful");
    }
}

TEST_CASE("http backend: 500, 500, 200 with max_retries=3 succeeds after 2 retries") {
    StubServer stub([](int hit, const nlohmann::json&, httplib::Response& res) {
        if (hit < 2) {
            res.status = 500;
            res.set_content("{}", "application/json");
        } else {
            res.set_content(ok_body(test::wire("hateful", 0.9)), "application/json");
        }
    });
    auto cfg = test::fast_config();
    cfg.endpoint_url = stub.url();
    cfg.max_retries = 3;
    Gateway gw(std::make_shared<HttpBackend>(cfg), cfg);
    auto r = gw.complete(request("x"));
    CHECK(stub.hits == 3);
    CHECK(r.content == test::wire("hateful", 0.9));
    CHECK(r.usage.prompt_tokens == 11);
    CHECK(r.usage.completion_tokens == 5);
    std::lock_guard lk(stub.mu);
    CHECK(stub.bodies.at(0).at("model") == "m");
    CHECK(stub.bodies.at(0).at("messages").size() == 2);
    CHECK(stub.bodies.at(0).at("messages")[0].at("role") == "system");
}

TEST_CASE("http backend: retries exhausted") {
    StubServer stub([](int, const nlohmann::json&, httplib::Response& res) { res.status = 503; });
    auto cfg = test::fast_config();
    cfg.endpoint_url = stub.url();
    cfg.max_retries = 2;
    Gateway gw(std::make_shared<HttpBackend>(cfg), cfg);
    try {
        gw.complete(request("x"));
        FAIL("expected TransportError");
    } catch (const TransportError& e) {
        CHECK(e.status() == 503);
    }
    CHECK(stub.hits == 3);
}

TEST_CASE("http backend drops a refused sampling parameter and records it") {
    StubServer stub([](int, const nlohmann::json& body, httplib::Response& res) {
        if (body.contains("temperature")) {
            res.status = 400;
            res.set_content(R"({"error":{"message":"Unsupported parameter: 'temperature'"}})", "application/json");
        } else {
            res.set_content(ok_body("fine"), "application/json");
        }
    });
    auto cfg = test::fast_config();
    cfg.endpoint_url = stub.url();
    HttpBackend backend(cfg);
    auto r = backend.send(request("x"));
    CHECK(r.content == "fine");
    REQUIRE(r.notes.size() == 1);
    CHECK(r.notes[0].find("temperature") != std::string::npos);
    CHECK(stub.hits == 2);
}

TEST_CASE("http backend: unreachable endpoint is a transient transport error") {
    auto cfg = test::fast_config();
    cfg.endpoint_url = "http://127.0.0.1:1/v1/chat/completions";
    HttpBackend backend(cfg);
    try {
        backend.send(request("x"));
        FAIL("expected TransportError");
    } catch (const TransportError& e) {
        CHECK(e.transient());
        CHECK(e.status() == 0);
    }
}

TEST_CASE("wire format helpers") {
    CHECK(parse_url("https://api.example.com/v1/chat/completions").scheme_host_port == "https://api.example.com");
    CHECK(parse_url("http://localhost:8080/x").path == "/x");
    auto req = request("hello");
    req.seed = 7;
    auto body = chat_request_body(req);
    CHECK(body.at("seed") == 7);
    CHECK(body.at("temperature") == 0.0);
    auto resp = chat_response_from_body(nlohmann::json::parse(ok_body("")));
    CHECK(resp.finish_reason == FinishReason::error);
}
