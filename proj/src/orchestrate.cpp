#include "ctxdesc/orchestrate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

namespace fs = std::filesystem;

namespace ctxdesc {

Observables ToyKernel::evaluate(const Point& p, const Observables* restart) const {
    auto get = [&](const char* k) {
        auto it = p.find(k);
        return it == p.end() ? 0.0 : it->second;
    };
    double alpha = get("alpha"), x = get("x"), y = get("y");
    if (alpha < 0.0 || alpha > kAlphaMax)
        throw Error("kernel_range", "angle of attack " + format_float(alpha) + " outside the kernel range", {"[0, 10] degrees"},
                    "keep alpha within the toy kernel range");
    Observables o;
    o["lift"] = kLiftSlope * alpha;
    o["f"] = std::exp(-x * x - y * y) + 0.3 * x * y;
    double iters = 60;
    if (restart) {
        auto it = restart->find("f");
        if (it != restart->end()) iters = 10 + std::floor(50 * std::min(1.0, std::abs(o["f"] - it->second) / 0.5));
    }
    o["iterations"] = iters;
    return o;
}

// ---------------------------------------------------------------- products

namespace {

fs::path source_root() {
    if (const char* env = std::getenv("CTXDESC_HOME")) return env;
    return CTXDESC_SOURCE_DIR;
}

[[noreturn]] void bad_manifest(const fs::path& src, const std::string& what) {
    throw Error("bad_product", "product manifest: " + what, {src.empty() ? "<inline>" : src.string()},
                "a manifest has 'product', 'static_defs', 'metadata' and optional 'rules'");
}

}  // namespace

fs::path shipped_products_dir() { return source_root() / "products"; }

ProductSpec ProductSpec::parse(const Node& m, fs::path source) {
    if (!m.is_map()) bad_manifest(source, "not a map");
    ProductSpec s;
    s.source = std::move(source);
    for (std::size_t i = 0; i < m.keys().size(); ++i) {
        const std::string& k = m.keys()[i].as_str();
        const Node& v = m.value_at(i);
        if (k == "product") s.name = v.as_str();
        else if (k == "static_defs") s.static_defs = v;
        else if (k == "metadata") s.metadata = v;
        else if (k == "rules") s.rules = v;
        else bad_manifest(s.source, "unknown section '" + k + "'");
    }
    if (s.name.empty()) bad_manifest(s.source, "missing 'product' name");
    return s;
}

ProductSpec ProductSpec::read(const fs::path& path) {
    return parse(parse_notation(read_text_file(path.string())), path);
}

Definitions::Definitions(std::shared_ptr<const ClassRegistry> registry, std::shared_ptr<const RuleSet> rules)
    : registry_(std::move(registry)), rules_(std::move(rules)) {}

Definitions Definitions::core() {
    fs::path res = source_root() / "resources";
    auto reg = std::make_shared<const ClassRegistry>(finalize(load_static_defs_file((res / "static_defs.res").string())));
    auto rules = std::make_shared<const RuleSet>(load_rule_defs_file((res / "rules.res").string(), *reg));
    return Definitions(reg, rules);
}

Definitions Definitions::with_products(const fs::path& dir) {
    Definitions d = core();
    std::vector<fs::path> files;
    if (fs::is_directory(dir))
        for (const auto& e : fs::directory_iterator(dir))
            if (e.path().extension() == ".product") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) d.register_product(ProductSpec::read(f));
    return d;
}

void Definitions::register_product(const ProductSpec& spec) {
    if (std::find(products_.begin(), products_.end(), spec.name) != products_.end())
        throw Error("product_exists", "product '" + spec.name + "' is already registered", {}, "remove the duplicate manifest");
    Node doc = Node::map();
    doc.set("static_defs", spec.static_defs);
    doc.set("metadata", spec.metadata);
    ClassRegistry extra = load_static_defs(doc);
    auto reg = std::make_shared<const ClassRegistry>(merge_classes(*registry_, std::move(extra)));
    auto rules = rules_;
    if (!spec.rules.is_none()) {
        RuleSet mine = load_rule_defs(spec.rules, *reg);
        rules = std::make_shared<const RuleSet>(merge_rules(*rules_, mine, *reg));
    } else {
        // Rules were validated against the old registry; paths stay valid.
        rules = std::make_shared<const RuleSet>(*rules_);
    }
    registry_ = std::move(reg);
    rules_ = std::move(rules);
    products_.push_back(spec.name);
}

void register_product(Study& study, Definitions& defs, const ProductSpec& spec) {
    defs.register_product(spec);
    study.replace_definitions(defs.registry(), defs.rules());
}

// ---------------------------------------------------------------- procedures

void ProcedureTable::add(std::string name, Procedure compute, Procedure extract) {
    table_[std::move(name)] = {std::move(compute), std::move(extract)};
}

const Procedure* ProcedureTable::compute(std::string_view name) const {
    auto it = table_.find(name);
    return it == table_.end() || !it->second.first ? nullptr : &it->second.first;
}

const Procedure* ProcedureTable::extract(std::string_view name) const {
    auto it = table_.find(name);
    return it == table_.end() || !it->second.second ? nullptr : &it->second.second;
}

double solve_alpha(const std::function<double(double)>& lift, double target, double lo, double hi, double tol,
                   int max_iter) {
    double flo = lift(lo) - target, fhi = lift(hi) - target;
    if (std::abs(flo) <= tol) return lo;
    if (std::abs(fhi) <= tol) return hi;
    if ((flo > 0) == (fhi > 0))
        throw Error("unreachable_target", "target lift " + format_float(target) + " is not attainable",
                    {"lift range [" + format_float(std::min(flo, fhi) + target) + ", " +
                     format_float(std::max(flo, fhi) + target) + "] over alpha [" + format_float(lo) + ", " +
                     format_float(hi) + "]"},
                    "request a lift inside the attainable range");
    for (int i = 0; i < max_iter; ++i) {
        double mid = 0.5 * (lo + hi);
        double fm = lift(mid) - target;
        if (std::abs(fm) <= tol) return mid;
        if ((fm > 0) == (flo > 0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    throw Error("no_convergence", "target lift " + format_float(target) + " not reached in " + std::to_string(max_iter) +
                                      " iterations",
                {}, "raise max_iter or loosen tolerance");
}

namespace {

Node observables_node(const Observables& o) {
    Node n = Node::map();
    for (const auto& [k, v] : o) n.set(k, Node::floating(v));
    return n;
}

Node toy_solver(Runtime& rt, const Description& self, const Node&) {
    return observables_node(rt.evaluate(rt.kernel_point(&self)));
}

Node target_lift(Runtime& rt, const Description& self, const Node& args) {
    const Description* ex = nullptr;
    for (const Description* d : rt.study().closure(desc_ref(self.ident())))
        if (d->cls().name == "extractor") ex = ex ? ex : d;
    if (!ex)
        throw Error("no_extractor", "target_lift '" + self.ident() + "' has no attached extractor", {},
                    self.ident() + ".attach(<extractor>)");
    Value var = get_or_deft(rt.study(), *ex, "var");
    if (var != Value("lift"))
        throw Error("bad_extractor", "extractor '" + ex->ident() + "' does not designate the lift", {"var = " + var.repr()},
                    "set(" + ex->ident() + ", 'var', 'lift')");
    double lo = rt.number(self, "alpha_min"), hi = rt.number(self, "alpha_max");
    double tol = rt.number(self, "tolerance");
    int max_iter = static_cast<int>(rt.number(self, "max_iter"));
    Point base = rt.kernel_point(&self);
    auto lift = [&](double a) {
        Point p = base;
        p["alpha"] = a;
        return rt.evaluate(p).at("lift");
    };
    Node targets = args.size() > 0 ? args[0] : Node::list();
    if (targets.is_number()) targets = Node::list({targets});
    if (!targets.is_list())
        throw Error("bad_arguments", "target_lift compute() takes a list of lift values", {}, "compute([0.05, 0.10])");
    Node out = Node::list();
    for (const auto& t : targets.items()) out.push_back(Node::floating(solve_alpha(lift, t.as_number(), lo, hi, tol, max_iter)));
    return out;
}

// Stand-ins for the coupled algorithms: toy output, deterministically perturbed.
Procedure perturbed(double factor) {
    return [factor](Runtime& rt, const Description& self, const Node&) {
        Observables o = rt.evaluate(rt.kernel_point(&self));
        for (auto& [k, v] : o)
            if (k != "iterations") v *= factor;
        return observables_node(o);
    };
}

Node extract_var(Runtime& rt, const Description& self, const Node& args) {
    Node all = rt.compute_on(self.ident(), args);
    const Description* ex = rt.find("extractor", &self);
    if (!ex || !all.is_map()) return all;
    Value var = get_or_deft(rt.study(), *ex, "var");
    const Node* v = var.is_str() ? all.find(var.as_str()) : nullptr;
    return v ? *v : Node::none();
}

}  // namespace

void add_core_procedures(ProcedureTable& t) {
    t.add("toy_solver", toy_solver, extract_var);
    t.add("target_lift", target_lift);
    t.add("dmd", perturbed(1.001), extract_var);
    t.add("sfd", perturbed(0.999), extract_var);
}

// ---------------------------------------------------------------- runtime

std::optional<std::string> BootRegistry::boot() const {
    if (current) return current;
    if (creation_order.empty()) return std::nullopt;
    return creation_order.back();
}

Runtime::Runtime(Study& study, std::shared_ptr<const SolverKernel> kernel, const ProcedureTable& procedures)
    : study_(study), kernel_(std::move(kernel)), procedures_(procedures) {}

BootRegistry Runtime::boot_registry() const {
    BootRegistry b;
    for (const auto& id : study_.creation_order()) {
        const Description* d = study_.find_description(id);
        if (d && d->cls().bootable()) b.creation_order.push_back(id);
    }
    if (token_ && std::find(b.creation_order.begin(), b.creation_order.end(), *token_) != b.creation_order.end())
        b.current = token_;
    return b;
}

void Runtime::set_boot_objt(const std::string& ident) {
    const Description& d = study_.description(ident);
    if (!d.cls().bootable())
        throw Error("not_bootable", "'" + ident + "' (class " + d.cls().name + ") cannot hold the compute token", {},
                    "pass the token to a description of a bootable class");
    token_ = ident;
}

Node Runtime::compute(const Node& args) {
    auto boot = boot_registry().boot();
    if (!boot)
        throw Error("no_boot", "compute() needs a bootable description", {},
                    "create one, e.g. cfd1 = cfdpb(name='cfd1')");
    return dispatch(study_.description(*boot), args, false);
}

Node Runtime::extract(const Node& args) {
    auto boot = boot_registry().boot();
    if (!boot) throw Error("no_boot", "extract() needs a bootable description", {}, "create a bootable description first");
    return dispatch(study_.description(*boot), args, true);
}

Node Runtime::compute_on(const std::string& ident, const Node& args) {
    return dispatch(study_.description(ident), args, false);
}

Node Runtime::extract_on(const std::string& ident, const Node& args) {
    return dispatch(study_.description(ident), args, true);
}

Node Runtime::dispatch(const Description& d, const Node& args, bool extract) {
    const ClassDef& c = d.cls();
    if (!c.bootable())
        throw Error("not_bootable", "'" + d.ident() + "' (class " + c.name + ") has no compute procedure", {},
                    "call compute() on a description of a bootable class");
    const Procedure* p = extract ? procedures_.extract(c.entry) : procedures_.compute(c.entry);
    if (!p)
        throw Error("no_procedure", "no " + std::string(extract ? "extract" : "compute") + " procedure '" + c.entry + "'",
                    {"class " + c.name}, "register the procedure of the product");
    trace.push_back(c.entry + (extract ? ".extract(" : "(") + d.ident() + ")");
    return (*p)(*this, d, args);
}

std::vector<Node> Runtime::run_pending(std::string_view script) {
    std::vector<Node> out;
    const auto ops = study_.script(script).pending_ops();
    for (const auto& op : ops) {
        switch (op.kind) {
        case PendingOp::Kind::SetBoot: set_boot_objt(op.target); break;
        case PendingOp::Kind::Compute:
            out.push_back(op.target.empty() ? compute(op.args) : compute_on(op.target, op.args));
            break;
        case PendingOp::Kind::Extract:
            out.push_back(op.target.empty() ? extract(op.args) : extract_on(op.target, op.args));
            break;
        }
    }
    return out;
}

const Description* Runtime::find(std::string_view cls, const Description* near) const {
    if (near)
        for (const Description* d : study_.closure(desc_ref(near->ident())))
            if (d->cls().name == cls) return d;
    for (const Description* d : study_.closure(root_ref()))
        if (d->cls().name == cls) return d;
    return nullptr;
}

double Runtime::number(const Description& d, std::string_view attr) const {
    Value v = get_or_deft(study_, d, attr, root_ref());
    if (!v.is_number())
        throw Error("missing", "missing value for " + std::string(attr) + " on '" + d.ident() + "'", {},
                    set_skeleton(d.cls(), *d.cls().attribute(attr)));
    return v.number();
}

Point Runtime::kernel_point(const Description* near) const {
    Point p;
    const Description* pb = near && near->cls().name == "cfdpb" ? near : find("cfdpb", near);
    if (!pb) return p;
    for (const char* k : {"alpha", "x", "y", "mach"}) {
        Value v = get_or_deft(study_, *pb, k, root_ref());
        if (v.is_number()) p[k] = v.number();
    }
    return p;
}

Observables Runtime::evaluate(const Point& p) const { return kernel_->evaluate(p, restart ? &*restart : nullptr); }

}  // namespace ctxdesc
