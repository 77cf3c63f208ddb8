#include <set>

#include "arise/core.hpp"
#include "support.hpp"

using namespace arise;

TEST_CASE("parse_label examples") {
    const auto& s = test::schemas();
    CHECK(parse_label(s.implicit_7way, "irony").name() == "irony");
    CHECK(parse_label(s.explicit_detection, "HATEFUL ").name() == "hateful");
    CHECK_THROWS_AS(parse_label(s.implicit_7way, "sarcasm"), UnknownLabel);
    try {
        parse_label(s.implicit_7way, "sarcasm");
    } catch (const UnknownLabel& e) {
        CHECK(e.raw() == "sarcasm");
        CHECK(e.schema() == "implicit-7way");
    }
}

TEST_CASE("aliases come from the schema files") {
    const auto& s = test::schemas();
    CHECK(parse_label(s.explicit_detection, "hatespeech").name() == "hateful");
    CHECK(parse_label(s.explicit_detection, "offensive").name() == "not-hateful");
    CHECK(parse_label(s.explicit_detection, "Normal").name() == "not-hateful");
    CHECK(parse_label(s.implicit_7way, "white_grievance").name() == "grievance");
    CHECK(parse_label(s.implicit_7way, "stereotypical").name() == "stereotypes");
    CHECK(parse_label(s.implicit_7way, "threatening").name() == "threats");
}

TEST_CASE("parse_label round-trips every class of every schema") {
    for (const auto* s : {&test::schemas().explicit_detection, &test::schemas().implicit_7way}) {
        for (std::size_t i = 0; i < (*s)->size(); ++i) {
            Label l = Label::of(*s, i);
            CHECK(parse_label(*s, l.name()) == l);
        }
    }
}

TEST_CASE("built-in schema class order") {
    const auto& s = test::schemas();
    CHECK(s.implicit_7way->classes() ==
          std::vector<std::string>{"grievance", "incitement", "stereotypes", "inferiority", "irony", "threats",
                                   "other"});
    CHECK(s.explicit_detection->classes() == std::vector<std::string>{"hateful", "not-hateful"});
    CHECK(s.explicit_detection->fallback_index() == 1);
    CHECK(s.implicit_7way->fallback_index() == 6);
    CHECK_FALSE(Label::named(s.explicit_detection, "not-hateful").hateful());
    CHECK(Label::named(s.implicit_7way, "other").hateful());
}

TEST_CASE("schema validation") {
    nlohmann::json ok{{"name", "x"}, {"kind", "explicit-detection"}, {"classes", {"a", "b"}}};
    CHECK_NOTHROW(LabelSchema::from_json(ok));
    auto bad = ok;
    bad["classes"] = {"a", "a"};
    CHECK_THROWS_AS(LabelSchema::from_json(bad), InvalidSchema);
    bad["classes"] = {"a", "b", "c"};
    CHECK_THROWS_AS(LabelSchema::from_json(bad), InvalidSchema);
    bad["classes"] = {"a", ""};
    CHECK_THROWS_AS(LabelSchema::from_json(bad), InvalidSchema);
    bad = ok;
    bad["kind"] = "implicit-7way";
    CHECK_THROWS_AS(LabelSchema::from_json(bad), InvalidSchema);
    bad = ok;
    bad["aliases"] = {{"z", "nope"}};
    CHECK_THROWS_AS(LabelSchema::from_json(bad), InvalidSchema);
    CHECK_THROWS_AS(Label::of(test::schemas().explicit_detection, 2), std::out_of_range);
}

TEST_CASE("validate_incident") {
    Incident a = validate_incident("  you people don't belong here ", std::nullopt);
    CHECK(a.text == "you people don't belong here");
    CHECK_FALSE(a.context);
    CHECK_FALSE(a.id.empty());
    CHECK_THROWS_AS(validate_incident("", std::nullopt), EmptyIncident);
    CHECK_THROWS_AS(validate_incident(" \n\t ", std::nullopt), EmptyIncident);
    Incident c = validate_incident("x", std::string("said during recess"));
    CHECK(c.context == std::optional<std::string>("said during recess"));
}

TEST_CASE("incident ids are pairwise distinct") {
    std::set<std::string> ids;
    for (int i = 0; i < 10000; ++i) ids.insert(validate_incident("x", std::nullopt).id);
    CHECK(ids.size() == 10000);
}

TEST_CASE("report invariants") {
    const auto& s = test::schemas();
    AnalysisReport r;
    r.incident_id = "i";
    r.final_label = Label::named(s.explicit_detection, "hateful");
    CHECK_THROWS_AS(check_report(r, false), std::logic_error);  // no verdicts
    r.agent_verdicts.push_back(test::verdict("a", s.explicit_detection, "hateful"));
    CHECK_THROWS_AS(check_report(r, false), std::logic_error);  // hateful without interventions
    r.interventions.push_back("talk to the class");
    CHECK_NOTHROW(check_report(r, false));
    CHECK_THROWS_AS(check_report(r, true), std::logic_error);  // multi needs a rationale
    r.manager_rationale = "agreed";
    CHECK_NOTHROW(check_report(r, true));
    CHECK_THROWS_AS(check_report(r, false), std::logic_error);
    r.agent_verdicts.push_back(test::verdict("b", s.implicit_7way, "irony"));
    CHECK_THROWS_AS(check_report(r, true), std::logic_error);  // mixed schemas
}

TEST_CASE("report json round trip") {
    const auto& s = test::schemas();
    AnalysisReport r;
    r.incident_id = "i1";
    r.final_label = Label::named(s.explicit_detection, "hateful");
    r.escalation_risk = EscalationRisk::medium;
    r.interventions = {"one", "two"};
    r.agent_verdicts = {test::verdict("a", s.explicit_detection, "hateful", 0.75)};
    r.agent_verdicts[0].context_ids = {"doc#0"};
    r.advisory_notes = {"note"};
    r.manager_rationale = "why";
    AnalysisReport back = report_from_json(to_json(r), s);
    CHECK(to_json(back) == to_json(r));
    CHECK(back.agent_verdicts[0].label == r.agent_verdicts[0].label);
}

TEST_CASE("timestamps format and parse") {
    Timestamp t = parse_timestamp("2024-03-05T07:08:09.123Z");
    CHECK(format_timestamp(t) == "2024-03-05T07:08:09.123Z");
}
