#include "doctest.h"

#include "ctxdesc/model.hpp"
#include "fixtures.hpp"

using namespace ctxdesc;

namespace {

std::string code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.diagnostic().code;
    }
    return "none";
}

}  // namespace

TEST_CASE("create_description") {
    Study s = fixtures::core_study();
    Description& mod1 = s.create_description("model", "mod1");
    CHECK(mod1.bindings().empty());
    CHECK(s.lookup("mod1").has_value());

    CHECK(code_of([&] { s.create_description("model", "mod1"); }) == "duplicate_ident");
    try {
        s.create_description("modell", "m2");
        FAIL("expected unknown class");
    } catch (const Error& e) {
        CHECK(e.diagnostic().suggestion.find("'model'") != std::string::npos);
    }
}

TEST_CASE("set and get") {
    Study s = fixtures::core_study();
    Description& mod1 = s.create_description("model", "mod1");
    s.set(mod1, "phymod", Value("nslam"));
    CHECK(std::get<Value>(s.get(mod1, "phymod")) == Value("nslam"));
    CHECK(mod1.binding("phymod")->origin == Origin::user());
    CHECK_FALSE(std::get<Value>(s.get(mod1, "visclaw")).defined());

    try {
        s.set(mod1, "phymod", Value("bogus"));
        FAIL("expected a domain violation");
    } catch (const Error& e) {
        CHECK(e.diagnostic().code == "domain");
        std::string msg = format(e.diagnostic());
        CHECK(msg.find("'euler', 'nslam', 'nstur'") != std::string::npos);
    }
    CHECK(code_of([&] { s.set(mod1, "phymodd", Value("euler")); }) == "unknown_attribute");
    CHECK(code_of([&] { s.set(mod1, "prandtl", Value("high")); }) == "kind_mismatch");
    CHECK(code_of([&] { s.set(mod1, "prandtl", Value(0.0)); }) == "domain");

    // Int promotes to Float
    s.set(mod1, "prandtl", Value(1));
    CHECK(mod1.value("prandtl").is_float());
}

TEST_CASE("macro-attributes distribute over atoms") {
    Study s = fixtures::core_study();
    Description& st = s.create_description("init", "st");
    ValueSeq five{1.2, 0.5, 0.0, 0.0, 2.5};
    s.set(st, "conservative", five);
    CHECK(st.bindings().size() == 5);
    CHECK(st.value("rou") == Value(0.5));
    auto got = std::get<ValueSeq>(s.get(st, "conservative"));
    CHECK(got == five);
    CHECK(code_of([&] { s.set(st, "conservative", ValueSeq{1.0, 2.0}); }) == "macro_arity");
    // all atoms are validated before any write
    CHECK(code_of([&] { s.set(st, "conservative", ValueSeq{-1.0, 0.1, 0.1, 0.1, 0.1, 0.1}); }) == "domain");
    CHECK(st.value("ro") == Value(1.2));
}

TEST_CASE("restrictions, obsolete, undocumented and filtered attributes") {
    Study s = fixtures::core_study();
    Description& pb = s.create_description("cfdpb", "pb");
    Description& num = s.create_description("numerics", "num");
    CHECK(code_of([&] { s.set(pb, "tag", Value("x")); }) == "restricted");
    s.set(pb, "tag", Value("x"), Origin::interface("service"));
    CHECK(pb.binding("tag")->origin.kind == Origin::Kind::Interface);

    try {
        s.set(num, "residual_smoothing", Value(0.5));
        FAIL("expected obsolete");
    } catch (const Error& e) {
        CHECK(e.diagnostic().code == "obsolete");
        CHECK(format(e.diagnostic()).find("implicit_smoothing") != std::string::npos);
    }
    CHECK(code_of([&] { s.set(num, "ode", Value("rk3")); }) == "obsolete");
    s.options.allow_obsolete = true;
    s.set(num, "ode", Value("rk3"));
    REQUIRE(s.notices.size() == 1);
    CHECK(s.notices[0].severity == Severity::Warning);
    CHECK(s.notices[0].suggestion.find("'rk4'") != std::string::npos);

    CHECK(code_of([&] { s.set(num, "flux_exp", Value("roe")); }) == "undocumented");
    s.options.unlock = true;
    s.set(num, "flux_exp", Value("roe"));

    s.options.filter = true;
    s.set(num, "verbose", Value(2));
    CHECK(num.binding("verbose") == nullptr);
}

TEST_CASE("attach") {
    Study s = fixtures::core_study();
    Description& cfd1 = s.create_description("cfdpb", "cfd1");
    s.create_description("model", "mod1");
    s.create_description("numerics", "num1");
    s.attach(cfd1, {"mod1", "num1"});
    CHECK(cfd1.attachments() == std::vector<std::string>{"mod1", "num1"});
    s.attach(cfd1, {"mod1"});
    CHECK(cfd1.attachments().size() == 2);
    CHECK(code_of([&] { s.attach(cfd1, {"cfd1"}); }) == "self_attach");

    // forward reference resolves at check time
    s.attach(cfd1, {"later"});
    CHECK(code_of([&] { s.closure(desc_ref("cfd1")); }) == "unresolved_attach");
    s.create_description("model", "later");
    CHECK(s.closure(desc_ref("cfd1")).size() == 4);
}

TEST_CASE("copy") {
    Study s = fixtures::core_study();
    Description& mod1 = s.create_description("model", "mod1");
    s.set(mod1, "phymod", Value("nslam"));
    s.copy(desc_ref("mod1"), "mod2");
    s.set(s.description("mod2"), "phymod", Value("euler"));
    CHECK(mod1.value("phymod") == Value("nslam"));
    CHECK(code_of([&] { s.copy(desc_ref("mod1"), "mod1"); }) == "duplicate_ident");

    s.create_script("case");
    Description& inner = s.create_description("model", "m", "case");
    Description& pb = s.create_description("cfdpb", "p", "case");
    s.set(inner, "mixture", Value("air"));
    s.attach(pb, {"m"});
    s.copy(script_ref("case"), "case2");
    const Script& c2 = s.script("case2");
    REQUIRE(c2.children().size() == 2);
    CHECK(c2.children()[0].ident == "m@case2");
    CHECK(s.description("m@case2").value("mixture") == Value("air"));
    // edges re-point to the same targets
    CHECK(s.description("p@case2").attachments() == std::vector<std::string>{"m"});
}

TEST_CASE("view") {
    Study s = fixtures::core_study();
    Description& e = s.create_description("extractor", "ex");
    CHECK(s.view(desc_ref("ex")) == "extractor 'ex'\n");
    (void)e;

    Description& st = s.create_description("init", "st");
    s.set(st, "conservative", ValueSeq{1.0, 0.0, 0.0, 0.0, 2.5});
    std::string v = s.view(desc_ref("st"));
    CHECK(v.find("conservative = [1.0, 0.0, 0.0, 0.0, 2.5]") != std::string::npos);
    CHECK(v.find("rou =") == std::string::npos);
    CHECK(s.view(desc_ref("st")) == v);
}

TEST_CASE("four-level structure") {
    Study s = fixtures::core_study();
    s.create_script("a");
    s.create_script("b", "a");
    Description& d = s.create_description("model", "m", "b");
    s.set(d, "mixture", Value("air"));
    // script* -> description -> attribute -> value, and scripts own no bindings
    auto cl = s.closure(root_ref());
    REQUIRE(cl.size() == 1);
    CHECK(cl[0]->binding("mixture")->value == Value("air"));
}
