#include "doctest.h"

#include "ctxdesc/registry.hpp"
#include "fixtures.hpp"

using namespace ctxdesc;

namespace {

ClassRegistry defs(const char* text) { return load_static_defs(parse_notation(text)); }

}  // namespace

TEST_CASE("the phymod entry loads verbatim") {
    auto reg = defs(R"({'static_defs': {'model': {
        'phymod':["""fluid model""",['S','I'], {'euler':0,'nslam':1,'nstur':2}, [CNTX_DEFV,None]]}}})");
    const AttributeDef* a = reg.find("model")->attribute("phymod");
    REQUIRE(a);
    CHECK(a->doc == "fluid model");
    CHECK(a->iface_kind == ValueKind::Str);
    CHECK(a->kernel_kind == ValueKind::Int);
    CHECK(a->domain.allowed == std::vector<Value>{"euler", "nslam", "nstur"});
    CHECK(a->domain.to_kernel("nslam") == Value(1));
    CHECK(a->domain.from_kernel(Value(2)) == Value("nstur"));
    REQUIRE(a->defaults.size() == 2);
    CHECK(a->defaults[0].kind == DefaultSource::Kind::Contextual);
    CHECK(a->defaults[1].kind == DefaultSource::Kind::None);
}

TEST_CASE("empty class map finalizes trivially") {
    auto reg = finalize(defs("{'static_defs': {}}"));
    CHECK(reg.finalized());
    CHECK(reg.classes().empty());
}

TEST_CASE("strictly_positive checker") {
    auto reg = defs("{'static_defs': {'c': {'x': ['doc', 'F', strictly_positive, None]}}}");
    const DomainSpec& d = reg.find("c")->attribute("x")->domain;
    CHECK(d.accepts(1.0));
    CHECK_FALSE(d.accepts(0.0));
    CHECK_FALSE(d.accepts(-1.0));
}

TEST_CASE("structural errors") {
    auto code = [](const char* text) {
        try {
            load_static_defs(parse_notation(text));
        } catch (const Error& e) {
            return e.diagnostic().code;
        }
        return std::string("none");
    };
    CHECK(code("{'static_defs': {'c': {'x': ['d', 'F', no_such_checker, None]}}}") == "unknown_checker");
    CHECK(code("{'static_defs': {'c': {'x': ['d', 'F', None, None], 'x': ['d', 'F', None, None]}}}") ==
          "duplicate_attribute");
    CHECK(code("{'static_defs': {'c': {'x': ['d', 'F', None, None]}}, 'metadata': {'c': {'macros': {'m': ['x', 'y']}}}}") ==
          "macro_member");
    CHECK(code("{'static_defs': {'c': {'x': ['d', 'Q', None, None]}}}") == "bad_type");
    CHECK(code("{'static_defs': {'c': {'x': ['d', 'F', None, [None, 1.0]]}}}") == "bad_default");
    CHECK(code("{'static_defs': {'c': {'x': ['d', ['S','I'], ['a', 'b'], None]}}}") == "bad_domain");
}

TEST_CASE("parse errors report the position") {
    CHECK_THROWS_AS(load_static_defs(parse_notation("{'static_defs': {'c' {}}}")), ParseError);
}

TEST_CASE("inheritance overlays") {
    const char* base = R"({'static_defs': {'A': {'x': ['doc x', 'F', None, [1.0]], 'y': ['doc y', 'I', None, None]}},
        'metadata': {%s}})";
    auto make = [&](const std::string& meta) {
        char buf[1024];
        std::snprintf(buf, sizeof buf, base, meta.c_str());
        return finalize(defs(buf));
    };

    SUBCASE("empty overlay copies the parent") {
        auto reg = make("'B': {'inherits': 'A'}");
        CHECK(reg.find("B")->attributes == reg.find("A")->attributes);
    }
    SUBCASE("doc overlay changes one field only") {
        auto reg = make("'B': {'inherits': ['A', {'x': {'doc': 'new doc'}}]}");
        const auto& a = reg.find("A")->attributes;
        const auto& b = reg.find("B")->attributes;
        REQUIRE(a.size() == b.size());
        int differing_fields = 0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            differing_fields += a[i].name != b[i].name;
            differing_fields += a[i].doc != b[i].doc;
            differing_fields += a[i].iface_kind != b[i].iface_kind;
            differing_fields += a[i].kernel_kind != b[i].kernel_kind;
            differing_fields += !(a[i].domain == b[i].domain);
            differing_fields += a[i].defaults != b[i].defaults;
            differing_fields += a[i].restriction != b[i].restriction;
        }
        CHECK(differing_fields == 1);
        CHECK(reg.find("B")->attribute("x")->doc == "new doc");
        CHECK_FALSE(reg.find("B")->parent.has_value());
    }
    SUBCASE("two-cycle") {
        CHECK_THROWS_WITH_AS(make("'B': {'inherits': 'C'}, 'C': {'inherits': 'B'}"),
                             doctest::Contains("inheritance cycle"), Error);
    }
    SUBCASE("overlay of an unknown attribute") {
        CHECK_THROWS_AS(make("'B': {'inherits': ['A', {'z': {'doc': 'q'}}]}"), Error);
    }
}

TEST_CASE("finalize is idempotent") {
    auto reg = *fixtures::core_registry();
    CHECK(finalize(reg) == reg);
}

TEST_CASE("macro expansion") {
    auto reg = fixtures::core_registry();
    CHECK(expand_macro(*reg, "init", "conservative", 5) ==
          std::vector<std::string>{"ro", "rou", "rov", "row", "roe"});
    CHECK(MacroAttribute::version_name("conservative", 5) == "conservative*05");
    CHECK(MacroAttribute::version_name("conservative", 6) == "conservative*06");
    try {
        expand_macro(*reg, "init", "conservative", 7);
        FAIL("expected an arity error");
    } catch (const Error& e) {
        CHECK(e.diagnostic().code == "macro_arity");
        std::string all = format(e.diagnostic());
        CHECK(all.find("5") != std::string::npos);
        CHECK(all.find("6") != std::string::npos);
    }
    CHECK_THROWS_AS(expand_macro(*reg, "init", "primitive", std::nullopt), Error);

    auto single = finalize(defs("{'static_defs': {'c': {'a': ['d', 'F', None, None], 'b': ['d', 'F', None, None]}},"
                                " 'metadata': {'c': {'macros': {'pair': ['a', 'b']}}}}"));
    CHECK(expand_macro(single, "c", "pair", std::nullopt) == std::vector<std::string>{"a", "b"});
}

TEST_CASE("registry round-trips through the canonical notation") {
    auto reg = *fixtures::core_registry();
    std::string text = to_notation_pretty(to_resource(reg));
    auto again = finalize(load_static_defs(parse_notation(text)));
    CHECK(again == reg);
}

TEST_CASE("conversion maps are total over the allowed values") {
    for (const auto& c : fixtures::core_registry()->classes())
        for (const auto& a : c->attributes)
            if (!a.domain.conversion.empty())
                for (const auto& v : a.domain.allowed) CHECK(a.domain.to_kernel(v).has_value());
}

TEST_CASE("merging classes rejects collisions") {
    auto reg = *fixtures::core_registry();
    CHECK_THROWS_AS(merge_classes(reg, defs("{'static_defs': {'model': {}}}")), Error);
    auto merged = merge_classes(reg, defs("{'static_defs': {'extra': {'q': ['d', 'I', None, None]}}}"));
    CHECK(merged.find("extra"));
    CHECK(merged.find("model"));
}
