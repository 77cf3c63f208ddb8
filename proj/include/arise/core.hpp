#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "arise/text.hpp"

namespace arise {

// Root directory for schema, persona and intervention assets.
// ARISE_ASSETS overrides the compiled-in default.
std::string default_asset_dir();

enum class SchemaKind { explicit_detection, implicit_7way };

std::string to_string(SchemaKind k);
SchemaKind schema_kind_from_string(std::string_view s);

class InvalidSchema : public std::runtime_error {
 public:
    using std::runtime_error::runtime_error;
};

class UnknownLabel : public std::runtime_error {
 public:
    UnknownLabel(std::string raw, std::string schema)
        : std::runtime_error("unknown label '" + raw + "' for schema " + schema),
          raw_(std::move(raw)), schema_(std::move(schema)) {}
    const std::string& raw() const { return raw_; }
    const std::string& schema() const { return schema_; }

 private:
    std::string raw_;
    std::string schema_;
};

class EmptyIncident : public std::invalid_argument {
 public:
    EmptyIncident() : std::invalid_argument("incident text is empty") {}
};

/// An ordered class list plus alias table, loaded from a schema definition file:
///   {"name", "kind", "classes": [...], "aliases": {raw: class},
///    "benign": [...], "fallback": class}
/// `benign` lists classes that do not count as hateful; `fallback` is the class
/// assigned when an agent never produces a parsable verdict (default: last class).
class LabelSchema {
 public:
    static LabelSchema from_json(const nlohmann::json& j);
    static std::shared_ptr<const LabelSchema> load(const std::string& path);

    const std::string& name() const { return name_; }
    SchemaKind kind() const { return kind_; }
    const std::vector<std::string>& classes() const { return classes_; }
    const std::map<std::string, std::string>& aliases() const { return aliases_; }
    std::size_t size() const { return classes_.size(); }
    std::size_t fallback_index() const { return fallback_; }
    bool is_benign(std::size_t class_index) const;

    // Exact (already folded) lookup against classes, then aliases.
    std::optional<std::size_t> lookup(std::string_view folded) const;

    nlohmann::json to_json() const;

 private:
    std::string name_;
    SchemaKind kind_ = SchemaKind::explicit_detection;
    std::vector<std::string> classes_;
    std::map<std::string, std::string> aliases_;
    std::vector<bool> benign_;
    std::size_t fallback_ = 0;
};

using SchemaRef = std::shared_ptr<const LabelSchema>;

struct Label {
    SchemaRef schema;
    std::size_t class_index = 0;

    static Label of(SchemaRef schema, std::size_t class_index);
    static Label named(SchemaRef schema, std::string_view class_name);

    const std::string& name() const { return schema->classes()[class_index]; }
    bool hateful() const { return !schema->is_benign(class_index); }

    friend bool operator==(const Label& a, const Label& b) {
        return a.class_index == b.class_index &&
               (a.schema == b.schema || a.schema->name() == b.schema->name());
    }
};

Label parse_label(const SchemaRef& schema, std::string_view raw);

/// Both built-in schemas, loaded from <asset_dir>/schemas.
struct Schemas {
    SchemaRef explicit_detection;
    SchemaRef implicit_7way;

    static Schemas load(const std::string& asset_dir = default_asset_dir());
    const SchemaRef& for_kind(SchemaKind k) const;
    const SchemaRef& by_name(std::string_view name) const;
};

enum class IncidentSource { teacher_session, dataset };

struct Incident {
    std::string id;
    std::string text;
    std::optional<std::string> context;
    IncidentSource source = IncidentSource::teacher_session;
    Timestamp timestamp{};
};

Incident validate_incident(std::string_view raw_text, std::optional<std::string> context,
                           IncidentSource source = IncidentSource::teacher_session);

struct Verdict {
    std::string agent_id;
    Label label;
    double confidence = 0.0;
    std::string rationale;
    std::vector<std::string> context_ids;
};

enum class EscalationRisk { low, medium, high };

std::string to_string(EscalationRisk r);
EscalationRisk escalation_from_string(std::string_view s);

struct AnalysisReport {
    std::string incident_id;
    Label final_label;
    EscalationRisk escalation_risk = EscalationRisk::low;
    std::vector<std::string> interventions;
    std::vector<Verdict> agent_verdicts;
    std::vector<std::string> advisory_notes;
    std::optional<std::string> manager_rationale;
};

// Throws std::logic_error naming the violated invariant.
void check_report(const AnalysisReport& r, bool multi_mode);

nlohmann::json to_json(const Label& l);
nlohmann::json to_json(const Verdict& v);
nlohmann::json to_json(const AnalysisReport& r);
nlohmann::json to_json(const Incident& i);
Label label_from_json(const nlohmann::json& j, const Schemas& schemas);
Verdict verdict_from_json(const nlohmann::json& j, const Schemas& schemas);
AnalysisReport report_from_json(const nlohmann::json& j, const Schemas& schemas);
Incident incident_from_json(const nlohmann::json& j);

}  // namespace arise
