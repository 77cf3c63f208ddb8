#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "arise/core.hpp"
#include "arise/orchestrator.hpp"

namespace arise {

enum class DatasetKind { hatexplain, latent_hatred };
std::string to_string(DatasetKind d);
DatasetKind dataset_kind_from_string(std::string_view s);
SchemaKind schema_kind_for(DatasetKind d);
Task task_for(DatasetKind d);

struct DatasetExample {
    std::string example_id;
    std::string text;
    Label gold;
    DatasetKind dataset = DatasetKind::hatexplain;
};

class ParseError : public std::runtime_error {
 public:
    using std::runtime_error::runtime_error;
};

struct LoadedDataset {
    std::vector<DatasetExample> examples;
    std::size_t dropped = 0;  // no annotator majority
    std::vector<std::string> warnings;
};

/// HateXplain release layout: {post_id: {"post_tokens": [...], "annotators": [{"label": ...}]}}.
/// Gold is the strict majority of the raw annotator labels, mapped through the
/// schema aliases. When `split_ids` is given only those posts are kept.
LoadedDataset load_hatexplain(const std::string& path, const SchemaRef& schema,
                              const std::set<std::string>* split_ids = nullptr);

// Ids of one split ("train", "val", "test") from post_id_divisions.json.
std::set<std::string> load_hatexplain_split(const std::string& path, const std::string& split);

/// Latent Hatred stage-2 TSV: a header naming `post` and `implicit_class`
/// columns, or headerless (post, class) rows. Unknown classes map to the
/// schema's fallback class with a warning.
LoadedDataset load_latent_hatred(const std::string& path, const SchemaRef& schema);

/// Uniform sample without replacement (Knuth's selection sampling driven by
/// mt19937_64(seed), uniforms from the top 53 bits). Input is canonicalised by
/// example_id first, so the selection does not depend on input order; the
/// result is in example_id order. n >= size returns everything in input order.
std::vector<DatasetExample> sample(std::span<const DatasetExample> examples, std::size_t n, std::uint64_t seed);

/// Per-class sample: each gold class gets floor(n * share) slots, leftover
/// slots go to the largest remainders (earlier class on ties), then each
/// class is drawn as in sample() from one generator, classes in schema order.
/// Result is in example_id order.
std::vector<DatasetExample> sample_stratified(std::span<const DatasetExample> examples, std::size_t n,
                                              std::uint64_t seed);

class EmptyPredictions : public std::invalid_argument {
 public:
    EmptyPredictions() : std::invalid_argument("no predictions to score") {}
};

double accuracy(std::span<const std::pair<Label, Label>> predicted_gold);

inline constexpr const char* mixture_column = "mixture";

struct EvalConfig {
    DatasetKind dataset = DatasetKind::hatexplain;
    std::size_t sample_size = 100;
    std::uint64_t seed = 42;
    // single: mixture is the majority vote; multi: mixture is the manager's decision.
    PanelMode mode = PanelMode::multi;
    bool use_rag = true;
    bool stratified = false;
    std::vector<std::string> columns{"psychology", "pedagogy", "cognitive-science", mixture_column};
    std::size_t parallelism = 4;
    std::size_t k = 4;
};

void validate(const EvalConfig& c);
nlohmann::json to_json(const EvalConfig& c);
EvalConfig eval_config_from_json(const nlohmann::json& j);

struct Prediction {
    std::string example_id;
    std::string evaluand;
    Label predicted;
    Label gold;
};

nlohmann::json to_json(const Prediction& p);
Prediction prediction_from_json(const nlohmann::json& j, const Schemas& schemas);

struct ColumnCounts {
    std::size_t correct = 0;
    std::size_t total = 0;
};

struct EvalRunResult {
    EvalConfig config;
    std::map<std::string, double> per_column_accuracy;
    std::map<std::string, ColumnCounts> per_column_counts;
    // Recall per gold class, over the mixture column.
    std::map<std::string, double> per_class_accuracy;
    std::vector<Prediction> predictions;
    std::chrono::milliseconds wall_time{0};
    bool complete = true;
    std::string error;
};

/// Metrics recomputed from predictions alone.
EvalRunResult result_from_predictions(const EvalConfig& config, std::vector<Prediction> predictions);

// result.json content; wall_time is kept out so identical runs give identical bytes.
nlohmann::json to_json(const EvalRunResult& r);

class ConfigMismatch : public std::invalid_argument {
 public:
    using std::invalid_argument::invalid_argument;
};

struct RagDelta {
    std::map<std::string, double> per_column;  // percentage points, with - without
    double mean = 0.0;
};

RagDelta rag_delta(const EvalRunResult& with_rag, const EvalRunResult& without_rag);
// Mean over every column of every delta.
double mean_delta(std::span<const RagDelta> deltas);

/// Runs the panel over each sampled example. Student columns take the students'
/// own (pre-facilitation) verdicts; the mixture column takes the panel label.
/// A gateway failure stops the run: the result is marked incomplete and keeps
/// the predictions of examples that finished.
EvalRunResult run_eval(const EvalConfig& config, std::span<const DatasetExample> examples, Orchestrator& orch,
                       std::span<const AgentProfile> profiles);

class InconsistentColumns : public std::invalid_argument {
 public:
    using std::invalid_argument::invalid_argument;
};

struct RenderedTable {
    std::string text;
    std::string csv;
};

// Integer percentage, rounding halves up.
int percent_half_up(double fraction);
int percent_half_up(const ColumnCounts& c);

/// One row per result ("<dataset> w/ RAG" / "w/o RAG"), one column per evaluand.
RenderedTable render_table(std::span<const EvalRunResult> results, const std::string& corner = "model");

std::string predictions_jsonl(std::span<const Prediction> predictions);
std::vector<Prediction> load_predictions(const std::string& path, const Schemas& schemas);

// Text between the incident delimiters of a rendered prompt, if any.
std::optional<std::string> incident_text_in(const std::string& prompt);

/// Scripted rule answering every classification prompt about one of `examples`
/// with its gold label (confidence 1).
void register_oracle(ScriptedBackend& backend, std::span<const DatasetExample> examples);

// predictions.jsonl, result.json, table.txt, table.csv and timing.json.
void write_eval_outputs(const std::string& dir, const EvalRunResult& result);

}  // namespace arise
