#include "arise/core.hpp"

#include <algorithm>
#include <cstdlib>
#include <set>

namespace arise {

std::string default_asset_dir() {
    if (const char* env = std::getenv("ARISE_ASSETS"); env && *env) return env;
    return ARISE_ASSET_DIR;
}

std::string to_string(SchemaKind k) {
    return k == SchemaKind::explicit_detection ? "explicit-detection" : "implicit-7way";
}

SchemaKind schema_kind_from_string(std::string_view s) {
    if (s == "explicit-detection") return SchemaKind::explicit_detection;
    if (s == "implicit-7way") return SchemaKind::implicit_7way;
    throw InvalidSchema("unknown schema kind: " + std::string(s));
}

LabelSchema LabelSchema::from_json(const nlohmann::json& j) {
    LabelSchema s;
    try {
        s.name_ = j.at("name").get<std::string>();
        s.kind_ = schema_kind_from_string(j.at("kind").get<std::string>());
        for (const auto& c : j.at("classes")) s.classes_.push_back(fold(c.get<std::string>()));
    } catch (const nlohmann::json::exception& e) {
        throw InvalidSchema(std::string("malformed schema: ") + e.what());
    }
    if (s.name_.empty()) throw InvalidSchema("schema name is empty");
    std::set<std::string> seen;
    for (const auto& c : s.classes_) {
        if (c.empty()) throw InvalidSchema(s.name_ + ": empty class name");
        if (!seen.insert(c).second) throw InvalidSchema(s.name_ + ": duplicate class " + c);
    }
    std::size_t want = s.kind_ == SchemaKind::implicit_7way ? 7 : 2;
    if (s.classes_.size() != want)
        throw InvalidSchema(s.name_ + ": " + to_string(s.kind_) + " needs " + std::to_string(want) +
                            " classes, got " + std::to_string(s.classes_.size()));

    auto index_of_class = [&](const std::string& c) -> std::size_t {
        auto it = std::find(s.classes_.begin(), s.classes_.end(), fold(c));
        if (it == s.classes_.end()) throw InvalidSchema(s.name_ + ": unknown class " + c);
        return static_cast<std::size_t>(it - s.classes_.begin());
    };

    if (j.contains("aliases")) {
        for (const auto& [raw, target] : j.at("aliases").items()) {
            index_of_class(target.get<std::string>());
            s.aliases_[fold(raw)] = fold(target.get<std::string>());
        }
    }
    s.benign_.assign(s.classes_.size(), false);
    if (j.contains("benign")) {
        for (const auto& c : j.at("benign")) s.benign_[index_of_class(c.get<std::string>())] = true;
    }
    s.fallback_ = j.contains("fallback") ? index_of_class(j.at("fallback").get<std::string>())
                                         : s.classes_.size() - 1;
    return s;
}

std::shared_ptr<const LabelSchema> LabelSchema::load(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw InvalidSchema(path + ": " + e.what());
    }
    return std::make_shared<const LabelSchema>(from_json(j));
}

bool LabelSchema::is_benign(std::size_t class_index) const {
    return class_index < benign_.size() && benign_[class_index];
}

std::optional<std::size_t> LabelSchema::lookup(std::string_view folded) const {
    auto it = std::find(classes_.begin(), classes_.end(), folded);
    if (it != classes_.end()) return static_cast<std::size_t>(it - classes_.begin());
    auto a = aliases_.find(std::string(folded));
    if (a != aliases_.end()) {
        auto c = std::find(classes_.begin(), classes_.end(), a->second);
        return static_cast<std::size_t>(c - classes_.begin());
    }
    return std::nullopt;
}

nlohmann::json LabelSchema::to_json() const {
    nlohmann::json benign = nlohmann::json::array();
    for (std::size_t i = 0; i < classes_.size(); ++i)
        if (benign_[i]) benign.push_back(classes_[i]);
    return {{"name", name_},       {"kind", arise::to_string(kind_)}, {"classes", classes_},
            {"aliases", aliases_}, {"benign", benign},                {"fallback", classes_[fallback_]}};
}

Label Label::of(SchemaRef schema, std::size_t class_index) {
    if (!schema) throw std::invalid_argument("label without schema");
    if (class_index >= schema->size())
        throw std::out_of_range("class index " + std::to_string(class_index) + " out of range for " +
                                schema->name());
    return Label{std::move(schema), class_index};
}

Label Label::named(SchemaRef schema, std::string_view class_name) {
    return parse_label(schema, class_name);
}

Label parse_label(const SchemaRef& schema, std::string_view raw) {
    auto idx = schema->lookup(fold(raw));
    if (!idx) throw UnknownLabel(std::string(raw), schema->name());
    return Label{schema, *idx};
}

Schemas Schemas::load(const std::string& asset_dir) {
    Schemas s;
    s.explicit_detection = LabelSchema::load(asset_dir + "/schemas/explicit-detection.json");
    s.implicit_7way = LabelSchema::load(asset_dir + "/schemas/implicit-7way.json");
    if (s.explicit_detection->kind() != SchemaKind::explicit_detection ||
        s.implicit_7way->kind() != SchemaKind::implicit_7way)
        throw InvalidSchema("built-in schema files have the wrong kind");
    return s;
}

const SchemaRef& Schemas::for_kind(SchemaKind k) const {
    return k == SchemaKind::explicit_detection ? explicit_detection : implicit_7way;
}

const SchemaRef& Schemas::by_name(std::string_view name) const {
    if (explicit_detection->name() == name) return explicit_detection;
    if (implicit_7way->name() == name) return implicit_7way;
    throw InvalidSchema("no schema named " + std::string(name));
}

Incident validate_incident(std::string_view raw_text, std::optional<std::string> context,
                           IncidentSource source) {
    std::string_view text = trim(raw_text);
    if (text.empty()) throw EmptyIncident();
    Incident inc;
    inc.id = random_id_128();
    inc.text = std::string(text);
    inc.context = std::move(context);
    inc.source = source;
    inc.timestamp = now_utc();
    return inc;
}

std::string to_string(EscalationRisk r) {
    switch (r) {
        case EscalationRisk::low: return "low";
        case EscalationRisk::medium: return "medium";
        case EscalationRisk::high: return "high";
    }
    return "low";
}

EscalationRisk escalation_from_string(std::string_view s) {
    std::string f = fold(s);
    if (f == "low") return EscalationRisk::low;
    if (f == "medium") return EscalationRisk::medium;
    if (f == "high") return EscalationRisk::high;
    throw std::invalid_argument("unknown escalation risk: " + std::string(s));
}

void check_report(const AnalysisReport& r, bool multi_mode) {
    if (r.agent_verdicts.empty()) throw std::logic_error("report has no agent verdicts");
    for (const auto& v : r.agent_verdicts) {
        if (v.label.schema->name() != r.final_label.schema->name())
            throw std::logic_error("verdict schema differs from final label schema");
    }
    if (r.final_label.hateful() && r.interventions.empty())
        throw std::logic_error("hateful report without interventions");
    if (multi_mode != r.manager_rationale.has_value())
        throw std::logic_error("manager rationale must be present exactly in multi-agent mode");
}

nlohmann::json to_json(const Label& l) {
    return {{"schema", l.schema->name()}, {"class", l.name()}};
}

nlohmann::json to_json(const Verdict& v) {
    return {{"agent_id", v.agent_id},
            {"label", v.label.name()},
            {"schema", v.label.schema->name()},
            {"confidence", v.confidence},
            {"rationale", v.rationale},
            {"context_ids", v.context_ids}};
}

nlohmann::json to_json(const AnalysisReport& r) {
    nlohmann::json verdicts = nlohmann::json::array();
    for (const auto& v : r.agent_verdicts) verdicts.push_back(to_json(v));
    nlohmann::json j{{"incident_id", r.incident_id},
                     {"final_label", r.final_label.name()},
                     {"schema", r.final_label.schema->name()},
                     {"escalation_risk", to_string(r.escalation_risk)},
                     {"interventions", r.interventions},
                     {"agent_verdicts", verdicts},
                     {"advisory_notes", r.advisory_notes}};
    j["manager_rationale"] = r.manager_rationale ? nlohmann::json(*r.manager_rationale) : nlohmann::json();
    return j;
}

nlohmann::json to_json(const Incident& i) {
    return {{"id", i.id},
            {"text", i.text},
            {"context", i.context ? nlohmann::json(*i.context) : nlohmann::json()},
            {"source", i.source == IncidentSource::dataset ? "dataset" : "teacher-session"},
            {"timestamp", format_timestamp(i.timestamp)}};
}

Label label_from_json(const nlohmann::json& j, const Schemas& schemas) {
    return parse_label(schemas.by_name(j.at("schema").get<std::string>()), j.at("class").get<std::string>());
}

Verdict verdict_from_json(const nlohmann::json& j, const Schemas& schemas) {
    Verdict v;
    v.agent_id = j.at("agent_id").get<std::string>();
    v.label = parse_label(schemas.by_name(j.at("schema").get<std::string>()), j.at("label").get<std::string>());
    v.confidence = j.at("confidence").get<double>();
    v.rationale = j.at("rationale").get<std::string>();
    v.context_ids = j.at("context_ids").get<std::vector<std::string>>();
    return v;
}

AnalysisReport report_from_json(const nlohmann::json& j, const Schemas& schemas) {
    AnalysisReport r;
    r.incident_id = j.at("incident_id").get<std::string>();
    r.final_label = parse_label(schemas.by_name(j.at("schema").get<std::string>()),
                                j.at("final_label").get<std::string>());
    r.escalation_risk = escalation_from_string(j.at("escalation_risk").get<std::string>());
    r.interventions = j.at("interventions").get<std::vector<std::string>>();
    for (const auto& v : j.at("agent_verdicts")) r.agent_verdicts.push_back(verdict_from_json(v, schemas));
    r.advisory_notes = j.at("advisory_notes").get<std::vector<std::string>>();
    if (!j.at("manager_rationale").is_null()) r.manager_rationale = j.at("manager_rationale").get<std::string>();
    return r;
}

Incident incident_from_json(const nlohmann::json& j) {
    Incident i;
    i.id = j.at("id").get<std::string>();
    i.text = j.at("text").get<std::string>();
    if (!j.at("context").is_null()) i.context = j.at("context").get<std::string>();
    i.source = j.at("source").get<std::string>() == "dataset" ? IncidentSource::dataset
                                                              : IncidentSource::teacher_session;
    i.timestamp = parse_timestamp(j.at("timestamp").get<std::string>());
    return i;
}

}  // namespace arise
