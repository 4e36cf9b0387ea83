#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "ctxdesc/script.hpp"
#include "ctxdesc/spi.hpp"

using namespace ctxdesc;

namespace {

std::string code_of(auto&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.diagnostic().code;
    }
    return "none";
}

using Fn = std::function<double(double, double)>;

BatchProvider provider_of(Fn f, int* calls = nullptr) {
    return [f, calls](const std::vector<Point>& pts) {
        if (calls) ++*calls;
        std::vector<double> out;
        for (const auto& p : pts) out.push_back(f(p.at("x"), p.at("y")));
        return out;
    };
}

SpiSpec square(double tol, std::size_t budget) {
    SpiSpec s;
    s.params = {"x", "y"};
    s.bounds = {{-1, 1}, {-1, 1}};
    s.tol = tol;
    s.budget = budget;
    return s;
}

double probe_error(const Surrogate& s, const Fn& f) {
    double worst = 0;
    auto [xl, xh] = s.bounds[0];
    auto [yl, yh] = s.bounds[1];
    for (int i = 0; i <= 20; ++i)
        for (int j = 0; j <= 20; ++j) {
            double x = xl + (xh - xl) * i / 20, y = yl + (yh - yl) * j / 20;
            double err = std::abs(spi_eval(s, {{"x", x}, {"y", y}}) - f(x, y));
            if (!(err <= worst)) worst = err;  // NaN counts as failure
        }
    return worst;
}

std::set<std::pair<double, double>> corners(const SpiSpec& s) {
    std::set<std::pair<double, double>> c;
    for (double x : {s.bounds[0].first, s.bounds[0].second})
        for (double y : {s.bounds[1].first, s.bounds[1].second}) c.insert({x, y});
    return c;
}

}  // namespace

TEST_CASE("Clenshaw-Curtis nodes") {
    CHECK(cc_nodes(0) == std::vector<double>{0.0});
    CHECK(cc_nodes(1) == std::vector<double>{-1.0, 0.0, 1.0});
    auto l2 = cc_nodes(2);
    REQUIRE(l2.size() == 5);
    const double h = std::sqrt(2.0) / 2;
    CHECK(l2[0] == -1.0);
    CHECK(l2[1] == doctest::Approx(-h).epsilon(1e-15));
    CHECK(l2[2] == 0.0);
    CHECK(l2[3] == doctest::Approx(h).epsilon(1e-15));
    CHECK(l2[4] == 1.0);
    for (int l = 0; l <= 6; ++l) {
        auto a = cc_nodes(l), b = cc_nodes(l + 1);
        CHECK(std::is_sorted(a.begin(), a.end()));
        for (double x : a) CHECK(std::find(b.begin(), b.end(), x) != b.end());  // bitwise
        if (l >= 1) CHECK((a.front() == -1.0 && a.back() == 1.0));
        // Node values agree with the lattice ids.
        auto ids = cc_node_ids(l);
        for (std::size_t k = 0; k < ids.size(); ++k) CHECK(cc_value(ids[k]) == a[k]);
        for (int k = 0; l > 0 && k <= (1 << l); ++k) CHECK(a[k] == doctest::Approx(-std::cos(k * M_PI / (1 << l))));
    }
    CHECK(code_of([] { cc_nodes(-1); }) == "bad_level");
}

TEST_CASE("x^2 + y is reproduced exactly within 30 samples, summits first") {
    Fn f = [](double x, double y) { return x * x + y; };
    auto spec = square(1e-10, 30);
    Discovered d = discover(spec, provider_of(f));
    CHECK(d.report.converged);
    CHECK(d.surrogate.sample_count() <= 30);
    CHECK(probe_error(d.surrogate, f) <= 1e-10);
    REQUIRE(!d.report.batches.empty());
    std::set<std::pair<double, double>> first;
    for (const auto& p : d.report.batches[0]) first.insert({p.at("x"), p.at("y")});
    CHECK(first == corners(spec));
    CHECK(d.report.batches[0].size() == 4);
    CHECK(downward_closed(d.surrogate.indices));
}

TEST_CASE("constant converges right after initialization") {
    Fn f = [](double, double) { return 2.5; };
    Discovered d = discover(square(1e-12, 100), provider_of(f));
    CHECK(d.report.converged);
    CHECK(d.surrogate.sample_count() == 9);
    CHECK(d.report.iterations.size() == 1);
    for (const auto& [idx, ts] : d.surrogate.terms)
        for (const auto& t : ts) CHECK(t.surplus == (idx == MultiIndex{0, 0} ? 2.5 : 0.0));
    CHECK(spi_eval(d.surrogate, {{"x", 0.0}, {"y", 0.0}}) == 2.5);
}

TEST_CASE("toy observable to 1e-4 on a shifted domain") {
    Fn f = [](double x, double y) { return std::exp(-x * x - y * y) + 0.3 * x * y; };
    SpiSpec spec = square(1e-5, 2000);
    Discovered d = discover(spec, provider_of(f));
    CHECK(d.report.converged);
    CHECK(probe_error(d.surrogate, f) <= 1e-4);
    MESSAGE("toy samples: " << d.surrogate.sample_count());

    spec.bounds = {{0.0, 2.0}, {-0.5, 1.5}};
    Discovered shifted = discover(spec, provider_of(f));
    CHECK(probe_error(shifted.surrogate, f) <= 1e-4);
    std::set<std::pair<double, double>> first;
    for (const auto& p : shifted.report.batches[0]) first.insert({p.at("x"), p.at("y")});
    CHECK(first == corners(spec));
}

TEST_CASE("interpolation property, polynomial exactness, downward closure") {
    std::mt19937 rng(8);
    std::uniform_real_distribution<double> u(-1, 1);
    Fn f = [](double x, double y) { return std::sin(3 * x) * std::cos(2 * y) + x; };
    SpiDiscovery run(square(1e-6, 150), provider_of(f));
    run.run();
    const Surrogate& s = run.surrogate();
    CHECK(run.report().budget_reached);
    CHECK(s.sample_count() <= 150);
    for (const auto& [idx, ts] : s.terms)
        for (const auto& t : ts) {
            Point p = s.point(t.node);
            CHECK(std::abs(spi_eval(s, p) - f(p.at("x"), p.at("y"))) <= 1e-12);
        }
    CHECK(downward_closed(s.indices));
    CHECK(downward_closed(run.accepted()));
    // Every polynomial in the span of Λ is reproduced: take one built from
    // the degrees reached per direction in the accepted set.
    int dx = 0, dy = 0;
    for (const auto& m : run.accepted())
        if (m[1] == 0) dx = std::max(dx, m[0]);
        else if (m[0] == 0) dy = std::max(dy, m[1]);
    auto deg = [](int level) { return level == 0 ? 0 : 1 << level; };
    Fn poly = [&](double x, double y) { return std::pow(x, deg(dx)) - 2 * std::pow(y, deg(dy)) + x * y + 0.5; };
    SpiDiscovery exact(square(1e-9, 10000), provider_of(poly));
    exact.run();
    CHECK(probe_error(exact.surrogate(), poly) <= 1e-9);
    for (int i = 0; i < 5; ++i) {
        Point p{{"x", u(rng)}, {"y", u(rng)}};
        CHECK(spi_eval(exact.surrogate(), p) == doctest::Approx(poly(p.at("x"), p.at("y"))).epsilon(1e-9));
    }
}

TEST_CASE("batch evaluation, serialization, errors") {
    Fn f = [](double x, double y) { return std::exp(x) * y; };
    Discovered d = discover(square(1e-6, 200), provider_of(f));
    std::vector<double> pts, serial(500), parallel(500);
    std::mt19937 rng(1);
    std::uniform_real_distribution<double> u(-1, 1);
    for (int i = 0; i < 1000; ++i) pts.push_back(u(rng));
    spi_eval_batch(d.surrogate, pts.data(), 500, serial.data(), Exec::Serial);
    spi_eval_batch(d.surrogate, pts.data(), 500, parallel.data(), Exec::Parallel);
    CHECK(serial == parallel);
    CHECK(serial[7] == spi_eval(d.surrogate, {{"x", pts[14]}, {"y", pts[15]}}));

    Surrogate back = parse_surrogate(surrogate_text(d.surrogate));
    CHECK(back == d.surrogate);
    CHECK(code_of([&] { spi_eval(d.surrogate, {{"x", 1.5}, {"y", 0.0}}); }) == "out_of_bounds");
    CHECK(code_of([] { parse_surrogate("{'observable': 'f'}"); }) == "bad_surrogate");
    CHECK(code_of([&] { discover(square(1e-6, 5), provider_of(f)); }) == "bad_budget");
    SpiSpec bad = square(1e-6, 50);
    bad.bounds[0] = {1, 1};
    CHECK(code_of([&] { discover(bad, provider_of(f)); }) == "bad_domain");
}

TEST_CASE("provider failure keeps the partial surrogate") {
    int calls = 0;
    BatchProvider flaky = [&](const std::vector<Point>& pts) {
        if (++calls == 4) throw Error("kernel_failure", "provider down");
        std::vector<double> out;
        for (const auto& p : pts) out.push_back(std::exp(p.at("x") + p.at("y")));
        return out;
    };
    SpiDiscovery run(square(1e-8, 500), flaky);
    CHECK(code_of([&] { run.run(); }) == "kernel_failure");
    CHECK(run.surrogate().sample_count() > 9);
    CHECK(downward_closed(run.surrogate().indices));
    for (const auto& [idx, ts] : run.surrogate().terms)
        for (const auto& t : ts) {
            Point p = run.surrogate().point(t.node);
            CHECK(spi_eval(run.surrogate(), p) == doctest::Approx(std::exp(p.at("x") + p.at("y"))).epsilon(1e-12));
        }
}

TEST_CASE("sparse_poly is a bootable product") {
    Definitions defs = Definitions::with_products(shipped_products_dir());
    Study s(defs.registry(), defs.rules());
    Interpreter(s).run_text(
        "cfd1 = cfdpb(name='cfd1')\n"
        "spr1 = sparse_poly(name='spr1')\n"
        "spr1.attach(cfd1)\n"
        "compute()\n");
    Runtime rt(s);
    auto out = rt.run_pending();
    REQUIRE(out.size() == 1);
    CHECK(rt.trace == std::vector<std::string>{"sparse_poly(spr1)"});
    CHECK(out[0].at("converged").as_int() == 1);
    Surrogate sur = parse_surrogate(out[0].at("surrogate").as_str());
    CHECK(sur.params == std::vector<std::string>{"cfdpb.x", "cfdpb.y"});
    ToyKernel toy;
    double worst = 0;
    for (int i = 0; i <= 20; ++i)
        for (int j = 0; j <= 20; ++j) {
            double x = -1 + i / 10.0, y = -1 + j / 10.0;
            worst = std::max(worst, std::abs(spi_eval(sur, {{"cfdpb.x", x}, {"cfdpb.y", y}}) -
                                             toy.evaluate({{"x", x}, {"y", y}}).at("f")));
        }
    CHECK(worst <= 1e-4);
}
