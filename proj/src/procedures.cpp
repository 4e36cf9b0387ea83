#include "ctxdesc/orchestrate.hpp"
#include "ctxdesc/spi.hpp"

namespace ctxdesc {

namespace {

// Response surface of one kernel observable over (x, y); sample batches go
// through an in-memory swarm of max_jobs workers.
Node sparse_poly(Runtime& rt, const Description& self, const Node&) {
    SpiSpec spec;
    spec.params = {"cfdpb.x", "cfdpb.y"};
    spec.bounds = {{rt.number(self, "x_min"), rt.number(self, "x_max")},
                   {rt.number(self, "y_min"), rt.number(self, "y_max")}};
    spec.observable = get_or_deft(rt.study(), self, "observable", root_ref()).as_str();
    spec.tol = rt.number(self, "tolerance");
    spec.budget = static_cast<std::size_t>(rt.number(self, "budget"));
    SwarmSpec swarm = SwarmSpec::max_jobs(static_cast<int>(rt.number(self, "max_jobs")));
    const Point base = rt.kernel_point(&self);

    auto provider = [&](const std::vector<Point>& pts) {
        std::vector<Point> kp;
        for (const auto& p : pts) {
            Point k = base;
            k["x"] = p.at("cfdpb.x");
            k["y"] = p.at("cfdpb.y");
            kp.push_back(std::move(k));
        }
        std::vector<double> out;
        for (const auto& o : swarm_evaluate(rt.kernel(), kp, swarm)) out.push_back(o.at(spec.observable));
        return out;
    };
    Discovered d = discover(spec, provider);
    Node r = Node::map();
    r.set("samples", Node::integer(static_cast<std::int64_t>(d.surrogate.sample_count())));
    r.set("converged", Node::integer(d.report.converged ? 1 : 0));
    r.set("max_indicator", Node::floating(d.report.iterations.back().max_indicator));
    r.set("surrogate", Node::str(surrogate_text(d.surrogate)));
    return r;
}

}  // namespace

const ProcedureTable& ProcedureTable::builtin() {
    static const ProcedureTable table = [] {
        ProcedureTable t;
        add_core_procedures(t);
        t.add("sparse_poly", sparse_poly);
        return t;
    }();
    return table;
}

}  // namespace ctxdesc
