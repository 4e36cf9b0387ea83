#include "doctest.h"

#include <algorithm>
#include <random>

#include "ctxdesc/rules.hpp"
#include "ctxdesc/script.hpp"
#include "fixtures.hpp"

using namespace ctxdesc;

namespace {

const char* kPaperDefs = R"({'static_defs': {
  'model': {
    'phymod':["""fluid model""",['S','I'], {'euler':0,'nslam':1,'nstur':2}, [CNTX_DEFV,None]],
    'visclaw':['viscosity law', 'S', ['sutherland', 'constant'], None],
    'mixture':['fluid composition', 'S', ['air', 'h2'], None],
    'suth_const':['', 'F', strictly_positive, None],
    'suth_muref':['', 'F', strictly_positive, [CNTX_DEFV, None]],
    'suth_muref_fct':['', 'S', None, None],
    'suth_tref':['', 'F', strictly_positive, None],
    'user_config':['', 'S', None, None],
    'turbmod':['', 'S', ['keps', 'komega', 'sst'], None],
    'easy':['', 'I', None, None]},
  'cfdpb': {'units':['', 'S', ['si', 'adim'], None]}}})";

const char* kPaperRules = R"({
  'depend': {'visclaw': {'phymod': ['nslam', 'nstur']}},
  'influence': {'visclaw': {'sutherland': ['suth_const', ['suth_muref', 'suth_muref_fct'], 'suth_tref']}},
  'context_default': {'suth_muref': {1.78938e-5: {'mixture': ['air'],'cfdpb.units':['si']}}}})";

std::shared_ptr<const ClassRegistry> paper_registry() {
    static auto reg = std::make_shared<const ClassRegistry>(finalize(load_static_defs(parse_notation(kPaperDefs))));
    return reg;
}

RuleSet rules_from(const char* text) { return load_rule_defs(parse_notation(text), *paper_registry()); }

Study paper_study(const char* rules = kPaperRules) {
    return Study(paper_registry(), std::make_shared<const RuleSet>(rules_from(rules)));
}

std::vector<std::string> missing_attrs(const CheckReport& r) {
    std::vector<std::string> out;
    for (const auto& m : r.missing) out.push_back(m.attr);
    std::sort(out.begin(), out.end());
    return out;
}

std::string rule_error(const char* text) {
    try {
        rules_from(text);
    } catch (const Error& e) {
        return format(e.diagnostic());
    }
    return "";
}

}  // namespace

TEST_CASE("the paper's rules load") {
    RuleSet r = rules_from(kPaperRules);
    REQUIRE(r.deps.size() == 1);
    REQUIRE(r.infls.size() == 1);
    REQUIRE(r.defaults.size() == 1);
    CHECK(r.infls[0].requires_.size() == 3);
    CHECK(r.infls[0].requires_[1].kind == RequirementTerm::Kind::Alternative);
    CHECK(r.defaults[0].conditions[1].first.text() == "cfdpb.units");
    CHECK(to_notation(RuleSet::rule_node(r.defaults[0])) ==
          "{'suth_muref': {1.78938e-05: {'mixture': ['air'], 'cfdpb.units': ['si']}}}");
}

TEST_CASE("rule loading errors") {
    CHECK(rule_error("{'depend': {'a_b': {'phymod': ['nslam']}}}").find("unknown attribute") != std::string::npos);
    CHECK(rule_error("{'depend': {'visclaw': {'phymod': ['laminar']}}}").find("not valid") != std::string::npos);
    CHECK(rule_error("{'depend': {'visclaw': {'cfdpbb.units': ['si']}}}").find("did you mean 'cfdpb'") != std::string::npos);
    CHECK(rule_error("{'influence': {'visclaw': {'sutherland': [3]}}}").find("malformed") != std::string::npos);
    std::string cyc = rule_error("{'depend': {'easy': {'turbmod': ['keps']}, 'turbmod': {'easy': [1]}}}");
    CHECK(cyc.find("easy→turbmod→easy") == std::string::npos);  // first node in graph order is turbmod
    CHECK(cyc.find("turbmod→easy→turbmod") != std::string::npos);
}

TEST_CASE("two-cycle is reported as a→b→a") {
    const char* defs = "{'static_defs': {'c': {'a': ['', 'I', None, None], 'b': ['', 'I', None, None]}}}";
    auto reg = finalize(load_static_defs(parse_notation(defs)));
    try {
        load_rule_defs(parse_notation("{'influence': {'a': {1: ['b']}, 'b': {1: ['a']}}}"), reg);
        FAIL("expected a cycle");
    } catch (const Error& e) {
        CHECK(e.diagnostic().headline == "rule cycle a→b→a");
    }
}

TEST_CASE("empty rule document") {
    Study s(paper_registry(), std::make_shared<const RuleSet>(rules_from("{}")));
    Description& m = s.create_description("model", "m");
    s.set(m, "visclaw", Value("sutherland"));
    CheckReport r = check(s, root_ref());
    CHECK(r.status);
    CHECK(r.diagnostics.empty());
}

TEST_CASE("check: complete laminar context gets its contextual default") {
    Study s = paper_study();
    Description& m = s.create_description("model", "mod1");
    Description& p = s.create_description("cfdpb", "pb");
    s.set(m, "phymod", Value("nslam"));
    s.set(m, "visclaw", Value("sutherland"));
    s.set(m, "mixture", Value("air"));
    s.set(p, "units", Value("si"));
    s.set(m, "suth_const", Value(110.4));
    s.set(m, "suth_tref", Value(273.15));
    CheckReport r = check(s, root_ref());
    CHECK(r.status);
    REQUIRE(r.applied_defaults.size() == 1);
    CHECK(r.applied_defaults[0].ident == "mod1");
    CHECK(r.applied_defaults[0].attr == "suth_muref");
    CHECK(r.applied_defaults[0].value == Value(1.78938e-5));
    CHECK(m.binding("suth_muref")->origin == Origin::rule(r.applied_defaults[0].rule));

    OriginTrace t = show_origin(s, m, "suth_muref");
    CHECK(t.origin.kind == Origin::Kind::ContextRule);
    CHECK(t.text.find("{'suth_muref': {1.78938e-05: {'mixture': ['air'], 'cfdpb.units': ['si']}}}") != std::string::npos);
    CHECK(show_origin(s, m, "phymod").origin == Origin::user());
}

TEST_CASE("check: meaningless value and pruning") {
    Study s = paper_study();
    Description& m = s.create_description("model", "mod1");
    s.set(m, "phymod", Value("euler"));
    s.set(m, "visclaw", Value("sutherland"));
    CheckReport r = check(s, root_ref());
    REQUIRE(r.diagnostics.size() == 1);
    CHECK(r.diagnostics[0].severity == Severity::Warning);
    CHECK(r.diagnostics[0].headline.find("visclaw meaningless for phymod='euler'") != std::string::npos);
    CHECK(s.view(desc_ref("mod1")).find("visclaw = <masked: not coherent>") != std::string::npos);

    CheckReport pr = check(s, root_ref(), {.prune = true});
    REQUIRE(pr.pruned.size() == 1);
    CHECK(pr.pruned[0].attr == "visclaw");
    CHECK(m.binding("visclaw") == nullptr);
    CHECK(m.value("phymod") == Value("euler"));
    CHECK(pr.status);
    CHECK(check(s, root_ref()).diagnostics.empty());
}

TEST_CASE("check: incomplete sutherland setup") {
    Study s = paper_study();
    Description& m = s.create_description("model", "mod1");
    s.set(m, "phymod", Value("nslam"));
    s.set(m, "visclaw", Value("sutherland"));
    CheckReport r = check(s, root_ref());
    CHECK_FALSE(r.status);
    CHECK(missing_attrs(r) ==
          std::vector<std::string>{"exactly-one-of(suth_muref, suth_muref_fct)", "suth_const", "suth_tref"});
    auto it = std::find_if(r.diagnostics.begin(), r.diagnostics.end(),
                           [](const Diagnostic& d) { return d.headline.find("suth_const") != std::string::npos; });
    REQUIRE(it != r.diagnostics.end());
    std::string text = format(*it);
    text.pop_back();
    CHECK(text.substr(text.rfind('\n') + 1) == "suggestion: set(model, 'suth_const', <float>)");
    CHECK(s.view(desc_ref("mod1")).find("suth_const = <required, missing>") != std::string::npos);
}

TEST_CASE("alternative groups: exactly one") {
    Study s = paper_study();
    Description& m = s.create_description("model", "mod1");
    s.set(m, "phymod", Value("nslam"));
    s.set(m, "visclaw", Value("sutherland"));
    s.set(m, "suth_const", Value(110.4));
    s.set(m, "suth_tref", Value(273.15));
    s.set(m, "suth_muref", Value(1e-5));
    CHECK(check(s, root_ref()).status);
    s.set(m, "suth_muref_fct", Value("mu"));
    CheckReport r = check(s, root_ref());
    REQUIRE(r.count(Severity::Warning) == 1);
    CHECK(r.diagnostics[0].code == "over_specified");
}

TEST_CASE("strong influence") {
    const char* rules = "{'influence': {'user_config': {'limited': [{'turbmod': ['keps', 'komega']}, 'easy']}}}";
    Study s = paper_study(rules);
    Description& m = s.create_description("model", "m");
    s.set(m, "user_config", Value("limited"));
    CHECK(missing_attrs(check(s, root_ref())) == std::vector<std::string>{"easy", "turbmod"});
    s.set(m, "easy", Value(1));
    s.set(m, "turbmod", Value("sst"));
    CheckReport r = check(s, root_ref());
    REQUIRE(r.diagnostics.size() == 1);
    CHECK(r.diagnostics[0].code == "conflict");
    CHECK(r.diagnostics[0].suggestion == "set(model, 'turbmod', 'keps'|'komega')");
    s.set(m, "turbmod", Value("keps"));
    CHECK(check(s, root_ref()).status);
}

TEST_CASE("regex patterns are anchored") {
    const char* rules = "{'influence': {'user_config': {'/test::.*/': ['easy']}}}";
    Study s = paper_study(rules);
    Description& m = s.create_description("model", "m");
    s.set(m, "user_config", Value("xtest::wing"));
    CHECK(check(s, root_ref()).status);
    s.set(m, "user_config", Value("test::wing"));
    CHECK(missing_attrs(check(s, root_ref())) == std::vector<std::string>{"easy"});
}

TEST_CASE("class-qualified paths: ambiguity is an error") {
    Study s = paper_study();
    Description& m = s.create_description("model", "m");
    s.set(m, "mixture", Value("air"));
    s.set(s.create_description("cfdpb", "p1"), "units", Value("si"));
    s.set(s.create_description("cfdpb", "p2"), "units", Value("adim"));
    CheckReport r = check(s, root_ref());
    CHECK_FALSE(r.status);
    CHECK(r.diagnostics.at(0).code == "ambiguous");
    CHECK(r.applied_defaults.empty());
    s.set(s.description("p2"), "units", Value("si"));
    CHECK(check(s, root_ref()).applied_defaults.size() == 1);
}

TEST_CASE("strict escalates every warning") {
    Study s = paper_study();
    Description& m = s.create_description("model", "m");
    s.set(m, "phymod", Value("euler"));
    s.set(m, "visclaw", Value("sutherland"));
    CheckReport loose = evaluate(s, root_ref(), {});
    CheckReport strict = evaluate(s, root_ref(), {.strict = true});
    REQUIRE(loose.diagnostics.size() == strict.diagnostics.size());
    for (std::size_t i = 0; i < loose.diagnostics.size(); ++i) CHECK(escalate(loose.diagnostics[i]) == strict.diagnostics[i]);
    CHECK(exit_status(strict.diagnostics) == 1);
    CHECK(format(strict.diagnostics[0]).rfind("ERROR: ", 0) == 0);
}

TEST_CASE("fixpoint bound") {
    const char* defs = "{'static_defs': {'c': {'a': ['', 'I', None, [CNTX_DEFV, None]], 'b': ['', 'I', None, [CNTX_DEFV, None]],"
                       " 'g': ['', 'I', None, None]}}}";
    auto reg = std::make_shared<const ClassRegistry>(finalize(load_static_defs(parse_notation(defs))));
    auto rs = load_rule_defs(parse_notation("{'context_default': {'b': {2: {'a': [1]}}, 'a': {1: {'g': [0]}}}}"), *reg);
    Study s(reg, std::make_shared<const RuleSet>(rs));
    s.set(s.create_description("c", "x"), "g", Value(0));
    CheckReport r = evaluate(s, root_ref(), {});
    CHECK(r.fixpoint_iterations == 2);
    CHECK(r.fixpoint_sizes == std::vector<std::size_t>{1, 2, 3});

    rs.max_fixpoint_iters = 1;
    Study t(reg, std::make_shared<const RuleSet>(rs));
    t.set(t.create_description("c", "x"), "g", Value(0));
    CheckReport r1 = evaluate(t, root_ref(), {});
    CHECK_FALSE(r1.status);
    REQUIRE(r1.diagnostics.size() == 1);
    CHECK(r1.diagnostics[0].code == "fixpoint");
    CHECK(r1.diagnostics[0].detail.at(0).find("x.b") != std::string::npos);
}

TEST_CASE("get_or_deft") {
    Study s = fixtures::core_study();
    Description& m = s.create_description("model", "m");
    CHECK(get_or_deft(s, m, "phymod") == Value("euler"));
    CHECK_FALSE(get_or_deft(s, m, "suth_muref").defined());
    s.set(m, "mixture", Value("air"));
    s.set(s.create_description("cfdpb", "p"), "units", Value("si"));
    CHECK(get_or_deft(s, m, "suth_muref") == Value(1.78938e-5));
    CHECK(m.binding("suth_muref") == nullptr);
    CHECK_FALSE(get_or_deft(s, m, "turbmod").defined());
    s.set(m, "user_config", Value("test::wing"));
    CHECK(get_or_deft(s, m, "phymod") == Value("nstur"));
    try {
        show_origin(s, m, "phymod");
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.diagnostic().suggestion.find("get_or_deft") != std::string::npos);
    }
}

TEST_CASE("origins after a dump/load round trip") {
    Study s = paper_study();
    Description& m = s.create_description("model", "mod1");
    s.set(m, "mixture", Value("air"));
    s.set(s.create_description("cfdpb", "pb"), "units", Value("si"));
    check(s, root_ref());
    REQUIRE(m.binding("suth_muref"));
    std::string text = dump_text(s, root_ref());
    CHECK(text.find("suth_muref") == std::string::npos);

    Study b = paper_study();
    Interpreter(b).run_text(text);
    CHECK(b.description("mod1").binding("suth_muref") == nullptr);
    check(b, root_ref());
    auto census = [](const Study& st) {
        std::map<std::string, int> out;
        for (const auto* d : st.closure(root_ref()))
            for (const auto& bd : d->bindings()) out[bd.origin.describe()]++;
        return out;
    };
    CHECK(census(s) == census(b));
}

TEST_CASE("what_if on the shipped rules") {
    Study s = fixtures::core_study();
    Description& m = s.create_description("model", "mod1");
    s.set(m, "phymod", Value("nslam"));
    s.set(m, "visclaw", Value("constant"));
    CheckReport base = evaluate(s, root_ref(), {});
    CHECK(base.status);
    auto before = m.bindings();
    CheckReport r = what_if(s, root_ref(), {{"mod1", "phymod", Value("nstur")}});
    CHECK(missing_attrs(r) == std::vector<std::string>{"turbmod"});
    CHECK(m.bindings() == before);
    CHECK(what_if(s, root_ref(), {}) == base);
    CHECK_THROWS_AS(what_if(s, root_ref(), {{"mod1", "phymod", Value("bogus")}}), Error);
    check(s, root_ref());
    CHECK(m.bindings() == before);
}
