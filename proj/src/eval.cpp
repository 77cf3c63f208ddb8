#include "arise/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

namespace arise {

std::string to_string(DatasetKind d) { return d == DatasetKind::hatexplain ? "hatexplain" : "latent-hatred"; }

DatasetKind dataset_kind_from_string(std::string_view s) {
    if (s == "hatexplain") return DatasetKind::hatexplain;
    if (s == "latent-hatred") return DatasetKind::latent_hatred;
    throw std::invalid_argument("unknown dataset kind: " + std::string(s));
}

SchemaKind schema_kind_for(DatasetKind d) {
    return d == DatasetKind::hatexplain ? SchemaKind::explicit_detection : SchemaKind::implicit_7way;
}

Task task_for(DatasetKind d) {
    return d == DatasetKind::hatexplain ? Task::classify_explicit : Task::classify_implicit;
}

LoadedDataset load_hatexplain(const std::string& path, const SchemaRef& schema,
                              const std::set<std::string>* split_ids) {
    nlohmann::json root;
    try {
        root = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(path + ": " + e.what());
    }
    if (!root.is_object()) throw ParseError(path + ": expected an object keyed by post id");

    LoadedDataset out;
    for (const auto& [post_id, post] : root.items()) {
        if (split_ids && !split_ids->count(post_id)) continue;
        std::vector<std::string> raw;
        std::vector<std::string> tokens;
        try {
            for (const auto& a : post.at("annotators")) raw.push_back(fold(a.at("label").get<std::string>()));
            tokens = post.at("post_tokens").get<std::vector<std::string>>();
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("post " + post_id + ": " + e.what());
        }
        if (raw.empty()) throw ParseError("post " + post_id + ": no annotators");

        std::map<std::string, std::size_t> counts;
        for (const auto& r : raw) ++counts[r];
        std::optional<std::string> majority;
        for (const auto& [label, n] : counts)
            if (2 * n > raw.size()) majority = label;
        if (!majority) {
            ++out.dropped;
            continue;
        }
        Label gold;
        try {
            gold = parse_label(schema, *majority);
        } catch (const UnknownLabel& e) {
            throw ParseError("post " + post_id + ": " + e.what());
        }
        out.examples.push_back({post_id, join(tokens, " "), gold, DatasetKind::hatexplain});
    }
    return out;
}

std::set<std::string> load_hatexplain_split(const std::string& path, const std::string& split) {
    try {
        auto j = nlohmann::json::parse(read_file(path));
        auto ids = j.at(split).get<std::vector<std::string>>();
        return {ids.begin(), ids.end()};
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
}

namespace {
std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        auto tab = line.find('\t', start);
        out.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
        if (tab == std::string::npos) break;
        start = tab + 1;
    }
    return out;
}
}  // namespace

LoadedDataset load_latent_hatred(const std::string& path, const SchemaRef& schema) {
    auto lines = split_lines(read_file(path));
    LoadedDataset out;
    std::size_t text_col = 0, class_col = 1, first = 0;
    if (!lines.empty()) {
        auto header = split_tabs(lines[0]);
        for (auto& h : header) h = fold(h);
        auto pos = [&](const char* name) { return std::find(header.begin(), header.end(), name) - header.begin(); };
        if (static_cast<std::size_t>(pos("implicit_class")) < header.size()) {
            class_col = static_cast<std::size_t>(pos("implicit_class"));
            auto p = static_cast<std::size_t>(pos("post"));
            if (p >= header.size()) throw ParseError(path + ":1: header has no 'post' column");
            text_col = p;
            first = 1;
        }
    }
    for (std::size_t i = first; i < lines.size(); ++i) {
        const std::size_t line_no = i + 1;
        if (trim(lines[i]).empty()) continue;
        auto fields = split_tabs(lines[i]);
        if (fields.size() <= std::max(text_col, class_col))
            throw ParseError(path + ":" + std::to_string(line_no) + ": expected post and class columns");
        std::string text(trim(fields[text_col]));
        if (text.empty()) throw ParseError(path + ":" + std::to_string(line_no) + ": empty post");
        const std::string& cls = fields[class_col];
        Label gold;
        try {
            gold = parse_label(schema, cls);
        } catch (const UnknownLabel&) {
            gold = Label::of(schema, schema->fallback_index());
            out.warnings.push_back(path + ":" + std::to_string(line_no) + ": unknown class '" + cls + "' mapped to " +
                                   gold.name());
        }
        out.examples.push_back({"lh-" + std::to_string(line_no), std::move(text), gold, DatasetKind::latent_hatred});
    }
    return out;
}

namespace {

bool by_id(const DatasetExample& a, const DatasetExample& b) { return a.example_id < b.example_id; }

// Knuth's algorithm S over `sorted`, appending to `out`.
void select(const std::vector<DatasetExample>& sorted, std::size_t n, std::mt19937_64& rng,
            std::vector<DatasetExample>& out) {
    const std::size_t total = sorted.size();
    std::size_t taken = 0;
    for (std::size_t t = 0; t < total && taken < n; ++t) {
        const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        if (static_cast<double>(total - t) * u < static_cast<double>(n - taken)) {
            out.push_back(sorted[t]);
            ++taken;
        }
    }
}

}  // namespace

std::vector<DatasetExample> sample(std::span<const DatasetExample> examples, std::size_t n, std::uint64_t seed) {
    if (n >= examples.size()) return {examples.begin(), examples.end()};
    std::vector<DatasetExample> sorted(examples.begin(), examples.end());
    std::sort(sorted.begin(), sorted.end(), by_id);
    std::mt19937_64 rng(seed);
    std::vector<DatasetExample> out;
    out.reserve(n);
    select(sorted, n, rng, out);
    return out;
}

std::vector<DatasetExample> sample_stratified(std::span<const DatasetExample> examples, std::size_t n,
                                              std::uint64_t seed) {
    if (n >= examples.size()) return {examples.begin(), examples.end()};
    std::map<std::size_t, std::vector<DatasetExample>> strata;
    for (const auto& e : examples) strata[e.gold.class_index].push_back(e);
    const std::size_t total = examples.size();
    std::vector<std::size_t> classes, quota;
    std::vector<std::pair<std::size_t, std::size_t>> remainders;  // (remainder, position)
    std::size_t assigned = 0;
    for (auto& [cls, members] : strata) {
        std::sort(members.begin(), members.end(), by_id);
        classes.push_back(cls);
        quota.push_back(n * members.size() / total);
        remainders.push_back({n * members.size() % total, remainders.size()});
        assigned += quota.back();
    }
    std::stable_sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t i = 0; assigned < n; ++i, ++assigned) ++quota[remainders[i].second];

    std::mt19937_64 rng(seed);
    std::vector<DatasetExample> out;
    out.reserve(n);
    for (std::size_t i = 0; i < classes.size(); ++i) select(strata[classes[i]], quota[i], rng, out);
    std::sort(out.begin(), out.end(), by_id);
    return out;
}

double accuracy(std::span<const std::pair<Label, Label>> predicted_gold) {
    if (predicted_gold.empty()) throw EmptyPredictions();
    std::size_t hits = 0;
    for (const auto& [p, g] : predicted_gold) {
        if (p.schema->name() != g.schema->name()) throw std::invalid_argument("predictions mix label schemas");
        hits += p == g;
    }
    return static_cast<double>(hits) / static_cast<double>(predicted_gold.size());
}

void validate(const EvalConfig& c) {
    if (c.sample_size < 1) throw InvalidConfig("sample_size must be at least 1");
    if (c.columns.empty()) throw InvalidConfig("no evaluation columns");
    if (c.parallelism < 1) throw InvalidConfig("parallelism must be at least 1");
}

nlohmann::json to_json(const EvalConfig& c) {
    return {{"dataset", to_string(c.dataset)}, {"sample_size", c.sample_size}, {"seed", c.seed},
            {"mode", to_string(c.mode)},       {"use_rag", c.use_rag},         {"columns", c.columns},
            {"k", c.k},                        {"stratified", c.stratified}};
}

EvalConfig eval_config_from_json(const nlohmann::json& j) {
    EvalConfig c;
    c.dataset = dataset_kind_from_string(j.at("dataset").get<std::string>());
    c.sample_size = j.at("sample_size").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.mode = panel_mode_from_string(j.at("mode").get<std::string>());
    c.use_rag = j.at("use_rag").get<bool>();
    c.columns = j.at("columns").get<std::vector<std::string>>();
    c.k = j.value("k", std::size_t{4});
    c.stratified = j.value("stratified", false);
    return c;
}

nlohmann::json to_json(const Prediction& p) {
    return {{"example_id", p.example_id},
            {"evaluand", p.evaluand},
            {"predicted", p.predicted.name()},
            {"gold", p.gold.name()},
            {"schema", p.gold.schema->name()}};
}

Prediction prediction_from_json(const nlohmann::json& j, const Schemas& schemas) {
    const SchemaRef& s = schemas.by_name(j.at("schema").get<std::string>());
    return {j.at("example_id").get<std::string>(), j.at("evaluand").get<std::string>(),
            parse_label(s, j.at("predicted").get<std::string>()), parse_label(s, j.at("gold").get<std::string>())};
}

EvalRunResult result_from_predictions(const EvalConfig& config, std::vector<Prediction> predictions) {
    EvalRunResult r;
    r.config = config;
    std::map<std::string, std::vector<std::pair<Label, Label>>> by_column;
    std::map<std::string, ColumnCounts> by_class;
    const std::string class_column =
        std::find(config.columns.begin(), config.columns.end(), mixture_column) != config.columns.end()
            ? mixture_column
            : config.columns.back();
    for (const auto& p : predictions) {
        by_column[p.evaluand].emplace_back(p.predicted, p.gold);
        auto& counts = r.per_column_counts[p.evaluand];
        ++counts.total;
        counts.correct += p.predicted == p.gold;
        if (p.evaluand == class_column) {
            auto& c = by_class[p.gold.name()];
            ++c.total;
            c.correct += p.predicted == p.gold;
        }
    }
    for (const auto& [col, pairs] : by_column) r.per_column_accuracy[col] = accuracy(pairs);
    for (const auto& [cls, c] : by_class)
        r.per_class_accuracy[cls] = static_cast<double>(c.correct) / static_cast<double>(c.total);
    r.predictions = std::move(predictions);
    return r;
}

nlohmann::json to_json(const EvalRunResult& r) {
    nlohmann::json counts = nlohmann::json::object();
    for (const auto& [col, c] : r.per_column_counts) counts[col] = {{"correct", c.correct}, {"total", c.total}};
    return {{"config", to_json(r.config)},
            {"per_column_accuracy", r.per_column_accuracy},
            {"per_column_counts", counts},
            {"per_class_accuracy", r.per_class_accuracy},
            {"num_predictions", r.predictions.size()},
            {"complete", r.complete},
            {"error", r.error}};
}

namespace {

bool same_setup(const EvalConfig& a, const EvalConfig& b) {
    return a.dataset == b.dataset && a.mode == b.mode && a.columns == b.columns;
}

// Percentage-point difference; exact when both sides have counts.
double delta_pp(const EvalRunResult& a, const EvalRunResult& b, const std::string& col) {
    auto ca = a.per_column_counts.find(col);
    auto cb = b.per_column_counts.find(col);
    if (ca != a.per_column_counts.end() && cb != b.per_column_counts.end() && ca->second.total && cb->second.total) {
        const double num = 100.0 * (static_cast<double>(ca->second.correct) * static_cast<double>(cb->second.total) -
                                    static_cast<double>(cb->second.correct) * static_cast<double>(ca->second.total));
        return num / (static_cast<double>(ca->second.total) * static_cast<double>(cb->second.total));
    }
    return 100.0 * (a.per_column_accuracy.at(col) - b.per_column_accuracy.at(col));
}

}  // namespace

RagDelta rag_delta(const EvalRunResult& with_rag, const EvalRunResult& without_rag) {
    if (!same_setup(with_rag.config, without_rag.config))
        throw ConfigMismatch("rag_delta needs results with the same dataset, mode and columns");
    RagDelta d;
    double sum = 0.0;
    for (const auto& col : with_rag.config.columns) {
        if (!with_rag.per_column_accuracy.count(col) || !without_rag.per_column_accuracy.count(col))
            throw ConfigMismatch("column " + col + " missing from a result");
        d.per_column[col] = delta_pp(with_rag, without_rag, col);
        sum += d.per_column[col];
    }
    d.mean = sum / static_cast<double>(d.per_column.size());
    return d;
}

double mean_delta(std::span<const RagDelta> deltas) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& d : deltas) {
        for (const auto& [col, v] : d.per_column) {
            sum += v;
            ++n;
        }
    }
    if (n == 0) throw std::invalid_argument("mean_delta of nothing");
    return sum / static_cast<double>(n);
}

EvalRunResult run_eval(const EvalConfig& config, std::span<const DatasetExample> examples, Orchestrator& orch,
                       std::span<const AgentProfile> profiles) {
    validate(config);
    const auto start = std::chrono::steady_clock::now();

    PanelConfig panel;
    panel.mode = config.mode;
    panel.use_rag = config.use_rag;
    panel.task = task_for(config.dataset);
    panel.seed = config.seed;
    panel.k = config.k;
    for (const auto& p : profiles) {
        if (p.role == AgentRole::student || (p.role == AgentRole::manager && config.mode == PanelMode::multi))
            panel.profiles.push_back(p);
    }
    validate(panel);
    for (const auto& col : config.columns) {
        if (col == mixture_column) continue;
        bool found = std::any_of(panel.profiles.begin(), panel.profiles.end(), [&](const AgentProfile& p) {
            return p.role == AgentRole::student && column_name(p) == col;
        });
        if (!found) throw InvalidConfig("no student profile for column " + col);
    }

    auto chosen = config.stratified ? sample_stratified(examples, config.sample_size, config.seed)
                                    : sample(examples, config.sample_size, config.seed);
    const auto n = static_cast<std::ptrdiff_t>(chosen.size());
    std::vector<std::optional<std::vector<Prediction>>> rows(chosen.size());
    std::atomic<bool> failed{false};
    std::string error;

#pragma omp parallel for schedule(dynamic, 1) num_threads(static_cast<int>(config.parallelism))
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        if (failed.load()) continue;
        const auto& ex = chosen[static_cast<std::size_t>(i)];
        Incident inc{ex.example_id, ex.text, std::nullopt, IncidentSource::dataset, Timestamp{}};
        try {
            PanelResult pr = orch.run_panel(inc, panel);
            std::vector<Prediction> row;
            for (const auto& col : config.columns) {
                if (col == mixture_column) {
                    row.push_back({ex.example_id, col, pr.final_label, ex.gold});
                    continue;
                }
                for (const auto& v : pr.verdicts) {
                    const auto* prof = &*std::find_if(panel.profiles.begin(), panel.profiles.end(),
                                                      [&](const AgentProfile& p) { return p.agent_id == v.agent_id; });
                    if (column_name(*prof) == col) row.push_back({ex.example_id, col, v.label, ex.gold});
                }
            }
            rows[static_cast<std::size_t>(i)] = std::move(row);
        } catch (const std::exception& e) {
            if (!failed.exchange(true)) {
#pragma omp critical(arise_eval_error)
                error = ex.example_id + ": " + e.what();
            }
        }
    }

    std::vector<Prediction> predictions;
    for (auto& row : rows)
        if (row) predictions.insert(predictions.end(), row->begin(), row->end());
    EvalRunResult r = result_from_predictions(config, std::move(predictions));
    r.complete = !failed.load();
    r.error = error;
    r.wall_time =
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start);
    return r;
}

int percent_half_up(double fraction) { return static_cast<int>(std::floor(fraction * 100.0 + 0.5 + 1e-9)); }

int percent_half_up(const ColumnCounts& c) {
    if (c.total == 0) return 0;
    return static_cast<int>((200 * c.correct + c.total) / (2 * c.total));
}

namespace {

std::string column_title(const std::string& col) {
    if (col == mixture_column) return "Mixture of agents";
    std::string t = col;
    std::replace(t.begin(), t.end(), '-', ' ');
    if (!t.empty() && t[0] >= 'a' && t[0] <= 'z') t[0] = static_cast<char>(t[0] - 'a' + 'A');
    return t + " student";
}

std::string row_title(const EvalConfig& c) {
    return std::string(c.dataset == DatasetKind::hatexplain ? "HateXplain" : "Implicit-Hate") +
           (c.use_rag ? " w/ RAG" : " w/o RAG");
}

int cell_percent(const EvalRunResult& r, const std::string& col) {
    if (auto it = r.per_column_counts.find(col); it != r.per_column_counts.end() && it->second.total)
        return percent_half_up(it->second);
    return percent_half_up(r.per_column_accuracy.at(col));
}

}  // namespace

RenderedTable render_table(std::span<const EvalRunResult> results, const std::string& corner) {
    if (results.empty()) throw InconsistentColumns("no results to render");
    const auto& columns = results.front().config.columns;
    for (const auto& r : results) {
        if (r.config.columns != columns) throw InconsistentColumns("results have different column sets");
        for (const auto& c : columns)
            if (!r.per_column_accuracy.count(c)) throw InconsistentColumns("result lacks column " + c);
    }

    std::vector<std::vector<std::string>> grid;
    std::vector<std::string> header{corner};
    for (const auto& c : columns) header.push_back(column_title(c));
    grid.push_back(header);
    std::ostringstream csv;
    csv << "setup";
    for (const auto& c : columns) csv << "," << c;
    csv << "\n";
    for (const auto& r : results) {
        std::vector<std::string> row{row_title(r.config)};
        csv << row.front();
        for (const auto& c : columns) {
            int pct = cell_percent(r, c);
            row.push_back(std::to_string(pct) + "%");
            csv << "," << pct;
        }
        csv << "\n";
        grid.push_back(row);
    }

    std::vector<std::size_t> width(header.size(), 0);
    for (const auto& row : grid)
        for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], row[i].size());
    std::ostringstream txt;
    auto rule = [&] {
        txt << "+";
        for (auto w : width) txt << std::string(w + 2, '-') << "+";
        txt << "\n";
    };
    rule();
    for (std::size_t r = 0; r < grid.size(); ++r) {
        txt << "|";
        for (std::size_t i = 0; i < grid[r].size(); ++i) {
            const auto& cell = grid[r][i];
            std::string pad(width[i] - cell.size(), ' ');
            txt << " " << (i == 0 ? cell + pad : pad + cell) << " |";
        }
        txt << "\n";
        if (r == 0) rule();
    }
    rule();
    return {txt.str(), csv.str()};
}

std::string predictions_jsonl(std::span<const Prediction> predictions) {
    std::string out;
    for (const auto& p : predictions) {
        out += to_json(p).dump();
        out += '\n';
    }
    return out;
}

std::vector<Prediction> load_predictions(const std::string& path, const Schemas& schemas) {
    std::vector<Prediction> out;
    std::size_t line_no = 0;
    for (const auto& line : split_lines(read_file(path))) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            out.push_back(prediction_from_json(nlohmann::json::parse(line), schemas));
        } catch (const std::exception& e) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

std::optional<std::string> incident_text_in(const std::string& prompt) {
    auto open = prompt.find(incident_open);
    if (open == std::string::npos) return std::nullopt;
    open += std::string_view(incident_open).size();
    auto close = prompt.find(incident_close, open);
    if (close == std::string::npos) return std::nullopt;
    return prompt.substr(open, close - open);
}

void register_oracle(ScriptedBackend& backend, std::span<const DatasetExample> examples) {
    auto gold = std::make_shared<std::map<std::string, std::string>>();
    for (const auto& ex : examples) gold->emplace(ex.text, ex.gold.name());
    backend.register_script(
        [gold](const std::string& prompt) {
            auto text = incident_text_in(prompt);
            return text && gold->count(*text);
        },
        ScriptedBackend::Responder([gold](const std::string& prompt) {
            return "label: " + gold->at(*incident_text_in(prompt)) + "\nconfidence: 1\nrationale: oracle";
        }));
}

void write_eval_outputs(const std::string& dir, const EvalRunResult& result) {
    std::filesystem::create_directories(dir);
    write_file_atomic(dir + "/predictions.jsonl", predictions_jsonl(result.predictions));
    write_file_atomic(dir + "/result.json", to_json(result).dump(2) + "\n");
    write_file_atomic(dir + "/timing.json",
                      nlohmann::json{{"wall_time_ms", result.wall_time.count()},
                                     {"finished_at", format_timestamp(now_utc())}}
                              .dump(2) +
                          "\n");
    if (!result.per_column_accuracy.empty() && result.per_column_accuracy.size() == result.config.columns.size()) {
        std::vector<EvalRunResult> one{result};
        auto table = render_table(one);
        write_file_atomic(dir + "/table.txt", table.text);
        write_file_atomic(dir + "/table.csv", table.csv);
    }
}

}  // namespace arise
