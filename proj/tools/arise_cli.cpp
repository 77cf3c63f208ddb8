// arise: ingest | eval | analyze | serve
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.
// Settings precedence: flags > --config file > environment > defaults.

#include <atomic>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <thread>

#include <CLI11.hpp>

#include "arise/eval.hpp"
#include "arise/http_backend.hpp"
#include "arise/http_service.hpp"
#include "arise/orchestrator.hpp"
#include "arise/personas.hpp"
#include "arise/retrieval.hpp"
#include "arise/service.hpp"

namespace {

using namespace arise;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct BackendFlags {
    std::optional<std::string> config;
    std::optional<std::string> assets;
    std::optional<std::string> backend;
    std::optional<std::string> script;
    std::optional<std::string> endpoint;
    std::optional<std::string> model;
    std::optional<std::string> api_key_env;
    std::optional<int> max_retries;
    std::optional<int> rpm;
    std::optional<std::string> index;
    std::optional<std::string> corpus;
};

void add_backend_flags(CLI::App* cmd, BackendFlags& f) {
    cmd->add_option("--config", f.config, "JSON settings file");
    cmd->add_option("--assets", f.assets, "asset directory (schemas, personas, interventions)");
    cmd->add_option("--backend", f.backend, "http | scripted")->check(CLI::IsMember({"http", "scripted"}));
    cmd->add_option("--script", f.script, "scripted backend rules (JSON), or 'oracle' for eval");
    cmd->add_option("--endpoint", f.endpoint, "chat-completions URL");
    cmd->add_option("--model", f.model, "model name sent to the provider");
    cmd->add_option("--api-key-env", f.api_key_env, "environment variable holding the API key");
    cmd->add_option("--max-retries", f.max_retries)->check(CLI::NonNegativeNumber);
    cmd->add_option("--rpm", f.rpm, "requests per minute")->check(CLI::PositiveNumber);
    cmd->add_option("--index", f.index, "persisted retrieval index");
    cmd->add_option("--corpus", f.corpus, "corpus directory, indexed on the fly");
}

/// Resolved settings.
struct Settings {
    std::string assets;
    std::string backend;
    std::string script;
    std::string endpoint;
    std::string model;
    std::string api_key_env;
    int max_retries = 3;
    int rpm = 60;
    std::string index;
    std::string corpus;
};

template <typename T>
T pick(const std::optional<T>& flag, const nlohmann::json& file, const char* key, const char* env, T fallback) {
    if (flag) return *flag;
    if (file.contains(key)) return file.at(key).get<T>();
    if (const char* v = std::getenv(env); v && *v) {
        if constexpr (std::is_same_v<T, int>)
            return std::stoi(v);
        else
            return T(v);
    }
    return fallback;
}

Settings resolve(const BackendFlags& f) {
    nlohmann::json file = nlohmann::json::object();
    if (f.config) {
        try {
            file = nlohmann::json::parse(read_file(*f.config));
        } catch (const std::exception& e) {
            throw UsageError("cannot read --config: " + std::string(e.what()));
        }
        static const std::set<std::string> known{"assets", "backend", "script", "endpoint", "model", "api_key_env",
                                                 "max_retries", "requests_per_minute", "index", "corpus"};
        for (const auto& [k, v] : file.items())
            if (!known.count(k)) throw UsageError("unknown setting '" + k + "' in " + *f.config);
    }
    Settings s;
    BackendConfig defaults;
    s.assets = pick<std::string>(f.assets, file, "assets", "ARISE_ASSETS", default_asset_dir());
    s.backend = pick<std::string>(f.backend, file, "backend", "ARISE_BACKEND", "http");
    s.script = pick<std::string>(f.script, file, "script", "ARISE_SCRIPT", "");
    s.endpoint = pick<std::string>(f.endpoint, file, "endpoint", "ARISE_ENDPOINT", defaults.endpoint_url);
    s.model = pick<std::string>(f.model, file, "model", "ARISE_MODEL", "o1-mini");
    s.api_key_env = pick<std::string>(f.api_key_env, file, "api_key_env", "ARISE_API_KEY_ENV", defaults.api_key_env);
    s.max_retries = pick<int>(f.max_retries, file, "max_retries", "ARISE_MAX_RETRIES", defaults.max_retries);
    s.rpm = pick<int>(f.rpm, file, "requests_per_minute", "ARISE_RPM", defaults.requests_per_minute);
    s.index = pick<std::string>(f.index, file, "index", "ARISE_INDEX", "");
    s.corpus = pick<std::string>(f.corpus, file, "corpus", "ARISE_CORPUS", "");
    if (s.backend != "http" && s.backend != "scripted") throw UsageError("backend must be http or scripted");
    return s;
}

// Rules file: {"rules": [{"contains": "..." | ["...", ...], "response": "..."}]}
void load_script(ScriptedBackend& backend, const std::string& path) {
    auto j = nlohmann::json::parse(read_file(path));
    for (const auto& rule : j.at("rules")) {
        std::vector<std::string> needles;
        if (rule.at("contains").is_array())
            needles = rule.at("contains").get<std::vector<std::string>>();
        else
            needles.push_back(rule.at("contains").get<std::string>());
        backend.register_script(
            [needles](const std::string& prompt) {
                return std::all_of(needles.begin(), needles.end(),
                                   [&](const std::string& n) { return prompt.find(n) != std::string::npos; });
            },
            rule.at("response").get<std::string>());
    }
}

struct Runtime {
    Schemas schemas;
    std::vector<AgentProfile> profiles;
    std::shared_ptr<ScriptedBackend> scripted;
    std::unique_ptr<Gateway> gateway;
    std::unique_ptr<Bm25Index> index;
    std::unique_ptr<Orchestrator> orchestrator;
};

Runtime make_runtime(const Settings& s, double temperature, std::span<const DatasetExample> oracle_examples = {}) {
    Runtime rt;
    rt.schemas = Schemas::load(s.assets);
    rt.profiles = builtin_profiles(s.assets);

    BackendConfig bc;
    bc.endpoint_url = s.endpoint;
    bc.api_key_env = s.api_key_env;
    bc.max_retries = s.max_retries;
    bc.requests_per_minute = s.rpm;
    std::shared_ptr<ChatBackend> backend;
    if (s.backend == "scripted") {
        rt.scripted = std::make_shared<ScriptedBackend>();
        if (s.script == "oracle") {
            if (oracle_examples.empty()) throw UsageError("--script oracle is only available for eval");
            register_oracle(*rt.scripted, oracle_examples);
        } else if (!s.script.empty()) {
            load_script(*rt.scripted, s.script);
        }
        bc.requests_per_minute = std::max(bc.requests_per_minute, 1'000'000);
        backend = rt.scripted;
    } else {
        if (!std::getenv(bc.api_key_env.c_str()))
            std::cerr << "warning: " << bc.api_key_env << " is not set; sending requests without a key\n";
        backend = std::make_shared<HttpBackend>(bc);
    }
    rt.gateway = std::make_unique<Gateway>(backend, bc);

    if (!s.index.empty()) {
        rt.index = std::make_unique<Bm25Index>(Bm25Index::load(s.index));
    } else if (!s.corpus.empty()) {
        rt.index = std::make_unique<Bm25Index>();
        for (auto& d : load_corpus_dir(s.corpus)) rt.index->ingest(std::move(d));
        rt.index->publish();
    }
    OrchestratorOptions oo;
    oo.model = s.model;
    oo.temperature = temperature;
    rt.orchestrator = std::make_unique<Orchestrator>(*rt.gateway, rt.schemas, rt.index.get(),
                                                     InterventionTemplates::builtin(s.assets), oo);
    return rt;
}

bool parse_on_off(const std::string& v) { return v == "on"; }

// ---- ingest ----

int run_ingest(const std::string& corpus, const std::string& index_path, std::size_t chunk_size, std::size_t overlap) {
    if (overlap >= chunk_size) throw UsageError("--overlap must be smaller than --chunk-size");
    std::vector<Document> docs;
    try {
        docs = load_corpus_dir(corpus);
    } catch (const CorpusError& e) {
        std::cerr << "error: " << e.what() << "\n";
        for (const auto& o : e.offenders()) std::cerr << "  " << o << "\n";
        return 1;
    }
    if (docs.empty()) {
        std::cerr << "error: no documents in " << corpus << "\n";
        return 1;
    }
    Bm25Index idx({chunk_size, overlap, {}});
    for (auto& d : docs) idx.ingest(std::move(d));
    idx.publish();
    idx.save(index_path);
    auto st = idx.stats();
    std::cout << "num_docs=" << st.num_docs << " num_chunks=" << st.num_chunks
              << " avg_chunk_len_tokens=" << st.avg_chunk_len_tokens << " vocabulary_size=" << st.vocabulary_size
              << "\n";
    return 0;
}

// ---- eval ----

struct EvalFlags {
    std::string dataset;
    std::string kind;
    std::string mode = "multi";
    std::string rag = "on";
    long long n = 100;
    std::uint64_t seed = 42;
    std::string out = "eval-out";
    std::optional<std::string> split_file;
    std::string split = "test";
    std::size_t parallelism = 4;
    bool stratified = false;
};

int run_eval_cmd(const EvalFlags& f, const BackendFlags& bf) {
    Settings s = resolve(bf);
    Schemas schemas = Schemas::load(s.assets);
    DatasetKind kind = dataset_kind_from_string(f.kind);
    LoadedDataset data;
    if (kind == DatasetKind::hatexplain) {
        std::optional<std::set<std::string>> split;
        if (f.split_file) split = load_hatexplain_split(*f.split_file, f.split);
        data = load_hatexplain(f.dataset, schemas.explicit_detection, split ? &*split : nullptr);
        if (data.dropped) std::cerr << "note: dropped " << data.dropped << " posts without annotator majority\n";
    } else {
        data = load_latent_hatred(f.dataset, schemas.implicit_7way);
        for (const auto& w : data.warnings) std::cerr << "warning: " << w << "\n";
    }
    if (data.examples.empty()) {
        std::cerr << "error: dataset " << f.dataset << " has no usable examples\n";
        return 1;
    }

    Runtime rt = make_runtime(s, 0.0, data.examples);
    EvalConfig cfg;
    cfg.dataset = kind;
    cfg.sample_size = static_cast<std::size_t>(f.n);
    cfg.seed = f.seed;
    cfg.mode = panel_mode_from_string(f.mode);
    cfg.use_rag = parse_on_off(f.rag);
    cfg.parallelism = f.parallelism;
    cfg.stratified = f.stratified;
    if (cfg.use_rag && !rt.index) std::cerr << "warning: RAG is on but no --index or --corpus was given\n";

    EvalRunResult r = run_eval(cfg, data.examples, *rt.orchestrator, rt.profiles);
    write_eval_outputs(f.out, r);
    if (!r.complete) {
        std::cerr << "error: evaluation stopped early (" << r.error << "); partial predictions saved in " << f.out
                  << "\n";
        return 1;
    }
    std::vector<EvalRunResult> one{r};
    std::cout << render_table(one, s.model).text;
    return 0;
}

// ---- analyze ----

struct AnalyzeFlags {
    std::string text;
    std::optional<std::string> context;
    std::string mode = "multi";
    std::string rag = "on";
    std::string task = "analyze-incident";
    bool json = false;
    std::optional<std::string> out;
};

std::string format_report(const AnalysisReport& r) {
    std::ostringstream ss;
    ss << "Final label:      " << r.final_label.name() << "\n"
       << "Escalation risk:  " << to_string(r.escalation_risk) << "\n";
    if (r.manager_rationale) ss << "Manager:          " << *r.manager_rationale << "\n";
    ss << "\nPerspectives:\n";
    for (const auto& v : r.agent_verdicts) {
        ss << "  [" << v.agent_id << "] " << v.label.name() << " (" << v.confidence << ")\n    " << v.rationale << "\n";
        if (!v.context_ids.empty()) ss << "    sources: " << join(v.context_ids, ", ") << "\n";
    }
    if (!r.interventions.empty()) {
        ss << "\nSuggested interventions:\n";
        for (std::size_t i = 0; i < r.interventions.size(); ++i) ss << "  " << i + 1 << ". " << r.interventions[i] << "\n";
    }
    if (!r.advisory_notes.empty()) {
        ss << "\nAdvisory notes:\n";
        for (const auto& n : r.advisory_notes) ss << "  - " << n << "\n";
    }
    return ss.str();
}

int run_analyze(const AnalyzeFlags& f, const BackendFlags& bf) {
    if (trim(f.text).empty()) throw UsageError("--text must not be empty");
    Settings s = resolve(bf);
    Runtime rt = make_runtime(s, 0.7);
    PanelConfig cfg;
    cfg.mode = panel_mode_from_string(f.mode);
    cfg.use_rag = parse_on_off(f.rag);
    cfg.task = task_from_string(f.task);
    for (const auto& p : rt.profiles)
        if (p.role != AgentRole::manager || cfg.mode == PanelMode::multi) cfg.profiles.push_back(p);

    Incident inc = validate_incident(f.text, f.context);
    PanelResult panel = rt.orchestrator->run_panel(inc, cfg);
    AnalysisReport report = rt.orchestrator->compose_report(panel, inc);
    nlohmann::json j = to_json(report);
    if (f.out) write_file_atomic(*f.out, j.dump(2) + "\n");
    if (f.json)
        std::cout << j.dump(2) << "\n";
    else
        std::cout << format_report(report);
    return 0;
}

// ---- serve ----

std::atomic<bool> g_interrupted{false};
extern "C" void on_signal(int) { g_interrupted.store(true); }

int run_serve(const std::string& addr, const std::string& state, std::size_t workers, const BackendFlags& bf) {
    auto colon = addr.rfind(':');
    if (colon == std::string::npos) throw UsageError("--addr must be host:port");
    std::string host = addr.substr(0, colon);
    int port = 0;
    try {
        port = std::stoi(addr.substr(colon + 1));
    } catch (const std::exception&) {
        throw UsageError("--addr must be host:port");
    }
    Settings s = resolve(bf);
    Runtime rt = make_runtime(s, 0.7);
    ServiceOptions so;
    so.state_dir = state;
    so.workers = workers;
    Service service(*rt.orchestrator, rt.profiles, so);
    HttpService http(service);
    if (!http.bind(host, port)) {
        std::cerr << "error: cannot bind " << addr << "\n";
        return 1;
    }
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::jthread watcher([&http](std::stop_token st) {
        while (!st.stop_requested()) {
            if (g_interrupted.load()) {
                http.stop();
                return;
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(100));
        }
    });
    std::cout << "listening on " << addr << " (state in " << state << ")" << std::endl;
    http.serve();
    watcher.request_stop();
    service.shutdown();
    std::cout << "stopped; session logs flushed" << std::endl;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-agent hate-incident analysis: ingest, eval, analyze, serve"};
    app.require_subcommand(1);

    BackendFlags bf;

    auto* ingest = app.add_subcommand("ingest", "build a retrieval index from a corpus directory");
    std::string corpus, index_path;
    std::size_t chunk_size = 400, overlap = 50;
    ingest->add_option("--corpus", corpus, "directory of front-matter text files")->required();
    ingest->add_option("--index", index_path, "output index file")->required();
    ingest->add_option("--chunk-size", chunk_size)->check(CLI::PositiveNumber);
    ingest->add_option("--overlap", overlap)->check(CLI::NonNegativeNumber);

    auto* eval = app.add_subcommand("eval", "run one evaluation cell");
    EvalFlags ef;
    eval->add_option("--dataset", ef.dataset, "dataset file")->required()->check(CLI::ExistingFile);
    eval->add_option("--kind", ef.kind)->required()->check(CLI::IsMember({"hatexplain", "latent-hatred"}));
    eval->add_option("--mode", ef.mode)->check(CLI::IsMember({"single", "multi"}));
    eval->add_option("--rag", ef.rag)->check(CLI::IsMember({"on", "off"}));
    eval->add_option("--n", ef.n, "sample size")->check(CLI::PositiveNumber);
    eval->add_option("--seed", ef.seed);
    eval->add_option("--out", ef.out, "output directory");
    eval->add_option("--split-file", ef.split_file, "HateXplain post_id_divisions.json");
    eval->add_option("--split", ef.split)->check(CLI::IsMember({"train", "val", "test"}));
    eval->add_option("--parallelism", ef.parallelism)->check(CLI::PositiveNumber);
    eval->add_flag("--stratified", ef.stratified, "sample proportionally per gold class");
    add_backend_flags(eval, bf);

    auto* analyze = app.add_subcommand("analyze", "analyse one incident and print the report");
    AnalyzeFlags af;
    analyze->add_option("--text", af.text, "incident description")->required();
    analyze->add_option("--context", af.context, "surrounding circumstances");
    analyze->add_option("--mode", af.mode)->check(CLI::IsMember({"single", "multi"}));
    analyze->add_option("--rag", af.rag)->check(CLI::IsMember({"on", "off"}));
    analyze->add_option("--task", af.task)
        ->check(CLI::IsMember({"analyze-incident", "classify-explicit", "classify-implicit"}));
    analyze->add_flag("--json", af.json, "print the report as JSON");
    analyze->add_option("--out", af.out, "also write the JSON report here");
    add_backend_flags(analyze, bf);

    auto* serve = app.add_subcommand("serve", "run the HTTP service");
    std::string addr = "127.0.0.1:8080", state = "arise-state";
    std::size_t workers = 4;
    serve->add_option("--addr", addr, "host:port");
    serve->add_option("--state", state, "session state directory");
    serve->add_option("--workers", workers)->check(CLI::PositiveNumber);
    add_backend_flags(serve, bf);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (ingest->parsed()) return run_ingest(corpus, index_path, chunk_size, overlap);
        if (eval->parsed()) return run_eval_cmd(ef, bf);
        if (analyze->parsed()) return run_analyze(af, bf);
        if (serve->parsed()) return run_serve(addr, state, workers, bf);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
