#include <doctest.h>

#include <sstream>

#include "ctxdesc/cli.hpp"
#include "scratch.hpp"

using namespace ctxdesc;

namespace {

struct Outcome {
    int status;
    std::string out, err;
};

Outcome cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    int st = cli_main(args, out, err);
    return {st, out.str(), err.str()};
}

bool contains(const std::string& s, const std::string& part) { return s.find(part) != std::string::npos; }

const char* kWarningCase =
    "mod1 = model(name='mod1')\n"
    "mod1.set('phymod', 'euler')\n"
    "mod1.set('visclaw', 'sutherland')\n"
    "cfd1 = cfdpb(name='cfd1')\n"
    "cfd1.attach(mod1)\n"
    "cfd1.set('alpha', 5.0)\n"
    "compute()\n";

}  // namespace

TEST_CASE("run --check on a coherent script") {
    ScratchDir dir;
    auto path = dir.file("case.scr",
                         "mod1 = model(name='mod1')\n"
                         "mod1.set('phymod', 'euler')\n"
                         "cfd1 = cfdpb(name='cfd1')\n"
                         "cfd1.attach(mod1)\n"
                         "cfd1.set('alpha', 5.0)\n"
                         "compute()\n");
    Outcome o = cli({"run", path, "--check"});
    CHECK(o.status == 0);
    CHECK(contains(o.out, "status: complete and coherent"));
    CHECK(contains(o.out, "result: {"));
    CHECK(o.err.empty());

    Outcome d = cli({"run", path, "--dump", "--no-compute"});
    CHECK(d.status == 0);
    CHECK(contains(d.out, "mod1 = model(name='mod1')"));
    CHECK_FALSE(contains(d.out, "result:"));
}

TEST_CASE("--strict turns a warning into exit 1 before compute") {
    ScratchDir dir;
    auto path = dir.file("case.scr", kWarningCase);
    Outcome lax = cli({"run", path, "--check"});
    CHECK(lax.status == 0);
    CHECK(contains(lax.err, "WARNING"));
    CHECK(contains(lax.out, "result:"));

    Outcome strict = cli({"run", path, "--strict"});
    CHECK(strict.status == 1);
    CHECK(contains(strict.err, "ERROR"));
    CHECK_FALSE(contains(strict.err, "WARNING"));
    CHECK_FALSE(contains(strict.out, "result:"));
}

TEST_CASE("option flags reach the static checks") {
    ScratchDir dir;
    auto obsolete = dir.file("old.scr", "n = numerics(name='n')\nn.set('residual_smoothing', 0.5)\n");
    Outcome refused = cli({"run", obsolete});
    CHECK(refused.status == 1);
    CHECK(contains(refused.err, "implicit_smoothing"));
    Outcome allowed = cli({"run", obsolete, "--allow_obsolete"});
    CHECK(allowed.status == 0);
    CHECK(contains(allowed.err, "WARNING"));
    CHECK(contains(allowed.err, "implicit_smoothing"));
    CHECK(cli({"run", obsolete, "--allow_obsolete", "--strict"}).status == 1);

    auto hidden = dir.file("hidden.scr", "n = numerics(name='n')\nn.set('flux_exp', 'roe')\n");
    CHECK(cli({"run", hidden}).status == 1);
    CHECK(cli({"run", hidden, "--unlock"}).status == 0);

    auto verbose = dir.file("verbose.scr", "n = numerics(name='n')\nn.set('verbose', 2)\n");
    CHECK(cli({"run", verbose}).err.empty());
    CHECK(contains(cli({"run", verbose, "--filter"}).err, "WARNING"));
}

TEST_CASE("usage and parse errors exit 2") {
    ScratchDir dir;
    CHECK(cli({}).status == 2);
    CHECK(cli({"run"}).status == 2);
    CHECK(cli({"run", (dir.path() / "absent.scr").string()}).status == 2);
    CHECK(cli({"span", "db", "--max-jobs", "2", "--node-fraction", "0.5"}).status == 2);
    auto broken = dir.file("broken.scr", "mod1 = model(name='mod1'\n");
    CHECK(cli({"run", broken}).status == 2);
    CHECK(cli({"--help"}).status == 0);
}

TEST_CASE("man and manual") {
    Outcome m = cli({"man", "phymod"});
    CHECK(m.status == 0);
    CHECK(contains(m.out, "fluid model"));
    Outcome bad = cli({"man", "phymodd"});
    CHECK(bad.status == 1);
    CHECK(contains(bad.err, "phymod"));
    Outcome sk = cli({"manual", "skeleton"});
    CHECK(sk.status == 0);
    Outcome co = cli({"manual", "coherency"});
    CHECK((co.status == 0) == co.out.empty());
}

TEST_CASE("db, vary and span") {
    ScratchDir dir;
    std::string db = (dir.path() / "db").string();
    CHECK(cli({"db", "init", db, "--view", "cfdpb.alpha,cfdpb.x"}).status == 0);
    auto base = dir.file("wing.scr", "cfd1 = cfdpb(name='cfd1')\ncfd1.set('alpha', 1.0)\n");
    Outcome v = cli({"vary", db, base, "--grid", "cfdpb.x=0,0.5", "--grid", "cfdpb.y=0,1"});
    CHECK(v.status == 0);
    CHECK(v.out == "wing_000\nwing_001\nwing_002\nwing_003\n");

    Outcome jobs = cli({"db", "jobs", db});
    CHECK(jobs.out == "wing_000 NYS\nwing_001 NYS\nwing_002 NYS\nwing_003 NYS\n");
    Outcome sp = cli({"span", db, "--max-jobs", "2", "--weight", "cfdpb.x=1", "--weight", "cfdpb.y=1"});
    CHECK(sp.status == 0);
    CHECK(contains(sp.out, "computed wing_003"));
    CHECK(contains(sp.out, "lift=0.11"));
    CHECK(cli({"db", "jobs", db}).out == "wing_000 CMP\nwing_001 CMP\nwing_002 CMP\nwing_003 CMP\n");

    Outcome found = cli({"db", "search", db, "cfdpb.x > 0.25"});
    CHECK(found.status == 0);
    CHECK(found.out == "wing_002\nwing_003\n");
    Outcome loaded = cli({"db", "load", db, "wing_002"});
    CHECK(contains(loaded.out, "set('x', 0.5)"));
    CHECK(cli({"db", "load", db, "wing_009"}).status == 1);

    auto single = dir.file("single.scr", "cfd1 = cfdpb(name='cfd1')\n");
    Outcome dumped = cli({"db", "dump", db, single});
    CHECK(dumped.out == "single\n");
    CHECK(cli({"db", "clean", db}).out.find("single NYS") != std::string::npos);
}

TEST_CASE("discover writes a surrogate") {
    ScratchDir dir;
    std::string file = (dir.path() / "f.sur").string();
    Outcome o = cli({"discover", "--tol", "1e-3", "--budget", "120", "--max-jobs", "2", "-o", file});
    CHECK(o.status == 0);
    CHECK(contains(o.out, "converged: yes"));
    std::ifstream in(file);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(contains(text, "'observable': 'f'"));
    CHECK(cli({"discover", "--observable", "drag"}).status == 1);
    CHECK(cli({"discover", "--budget", "3"}).status == 1);
}
