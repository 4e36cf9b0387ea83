#include "doctest.h"
#include <algorithm>

#include "ctxdesc/diagnostics.hpp"

using namespace ctxdesc;

namespace {

int lines(const std::string& s) { return static_cast<int>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_CASE("three-part message") {
    Diagnostic d{Severity::Error, "missing", "missing value for suth_const on 'mod1'",
                 {"required by visclaw = 'sutherland'"}, "set(model, 'suth_const', <float>)"};
    CHECK(format(d) ==
          "ERROR: missing value for suth_const on 'mod1'\n"
          "  required by visclaw = 'sutherland'\n"
          "suggestion: set(model, 'suth_const', <float>)\n");
}

TEST_CASE("empty detail gives two lines") {
    Diagnostic d{Severity::Warning, "x", "headline", {}, "fix it"};
    CHECK(lines(format(d)) == 2);
}

TEST_CASE("escalation changes line 1 only") {
    Diagnostic w{Severity::Warning, "meaningless", "visclaw meaningless", {"a", "b"}, "unset it"};
    std::string before = format(w);
    std::string after = format(escalate(w));
    CHECK(after.rfind("ERROR: visclaw meaningless\n", 0) == 0);
    CHECK(before.substr(before.find('\n')) == after.substr(after.find('\n')));
}

TEST_CASE("exit status") {
    std::vector<Diagnostic> ds{{Severity::Warning, "w", "h", {}, "s"}};
    CHECK(exit_status(ds) == 0);
    escalate_all(ds);
    CHECK(exit_status(ds) == 1);
}

TEST_CASE("nearest names") {
    std::vector<std::string> names{"model", "numerics", "cfdpb"};
    CHECK(nearest_name("modell", names) == "model");
    CHECK(nearest_name("numeric", names) == "numerics");
    CHECK(nearest_name("zzzzzzzz", names).empty());
    CHECK(edit_distance("kitten", "sitting") == 3);
}
