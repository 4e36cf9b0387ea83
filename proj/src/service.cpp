#include "ctxdesc/service.hpp"

#include <httplib.h>

#include <algorithm>
#include <set>

#include "ctxdesc/docgen.hpp"

namespace ctxdesc {

namespace {

const char* origin_kind(Origin::Kind k) {
    switch (k) {
    case Origin::Kind::User: return "user";
    case Origin::Kind::StaticDefault: return "static_default";
    case Origin::Kind::KernelDefault: return "kernel_default";
    case Origin::Kind::ContextRule: return "rule";
    case Origin::Kind::Interface: return "interface";
    }
    return "?";
}

Json origin_json(const Origin& o) { return {{"kind", origin_kind(o.kind)}, {"detail", o.detail}, {"text", o.describe()}}; }

Error bad_request(const std::string& what, const std::string& suggestion = {}) {
    return Error("bad_request", what, {}, suggestion);
}

Value json_value(const Json& j) {
    if (j.is_string()) return Value(j.get<std::string>());
    if (j.is_boolean()) return Value(j.get<bool>() ? 1 : 0);
    if (j.is_number_integer()) return Value(j.get<std::int64_t>());
    if (j.is_number()) return Value(j.get<double>());
    throw bad_request("expected a scalar value, got " + j.dump());
}

const std::string& string_field(const Json& body, const char* name) {
    if (!body.is_object() || !body.contains(name) || !body[name].is_string())
        throw bad_request(std::string("request body needs a string field '") + name + "'");
    return body[name].get_ref<const std::string&>();
}

// A dependency rule on `attr` whose source, read on the same description,
// does not match. Sources on other classes are not resolved here.
bool dependency_fails(const Study& study, const Description& d, const std::string& attr) {
    const RuleSet* rules = study.rules();
    if (!rules) return false;
    for (const auto& r : rules->deps) {
        if (r.attr.attr != attr || (!r.attr.cls.empty() && r.attr.cls != d.cls().name)) continue;
        if (!r.source.cls.empty() && r.source.cls != d.cls().name) continue;
        Value v = get_or_deft(study, d, r.source.attr);
        if (!v.defined() || !any_match(r.allowed, v)) return true;
    }
    return false;
}

struct MacroState {
    bool folded = false;
    bool green = false;
};

MacroState macro_state(const Study& study, const Description& d, const MacroAttribute& m,
                       const std::set<std::pair<std::string, std::string>>& non_coherent) {
    bool forced = false;
    for (const auto& [arity, atoms] : m.versions)
        for (const auto& a : atoms)
            if (non_coherent.count({d.ident(), a}) || dependency_fails(study, d, a)) forced = true;
    bool complete = false;
    for (const auto& [arity, atoms] : m.versions)
        if (std::all_of(atoms.begin(), atoms.end(), [&](const std::string& a) { return d.binding(a) != nullptr; }))
            complete = true;
    return {forced || complete, complete && !forced};
}

std::set<std::pair<std::string, std::string>> non_coherent_set(const CheckReport& r) {
    return {r.non_coherent.begin(), r.non_coherent.end()};
}

Json markers(const CheckReport& r, const Study& study) {
    Json out = Json::object();
    auto nc = non_coherent_set(r);
    for (const Description* d : study.closure(root_ref())) {
        Json red = Json::array(), green = Json::array(), folded = Json::array();
        for (const auto& m : r.missing)
            if (m.ident == d->ident()) red.push_back(m.attr);
        for (const auto& m : d->cls().macros) {
            MacroState st = macro_state(study, *d, m, nc);
            if (st.folded) folded.push_back(m.name);
            if (st.green) green.push_back(m.name);
        }
        out[d->ident()] = {{"red", red}, {"green", green}, {"folded", folded}};
    }
    return out;
}

ContextRef resolve(const Study& study, const std::string& ident) {
    if (ident.empty() || ident == Study::kRootIdent) return root_ref();
    if (auto ref = study.lookup(ident)) return *ref;
    study.description(ident);  // throws unknown_ident with a suggestion
    return root_ref();
}

std::string self_prefix(const ContextRef& ref) {
    return ref.ident == Study::kRootIdent && ref.kind == ChildRef::Kind::Script ? std::string() : ref.ident + ".";
}

const RuleSet& rules_or_empty(const Study& study) {
    static const RuleSet none;
    return study.rules() ? *study.rules() : none;
}

}  // namespace

Json to_json(const Value& v) {
    if (v.is_int()) return v.as_int();
    if (v.is_float()) return v.as_float();
    if (v.is_str()) return v.as_str();
    return nullptr;
}

Json to_json(const Diagnostic& d) {
    return {{"severity", std::string(severity_name(d.severity))},
            {"code", d.code},
            {"headline", d.headline},
            {"detail", d.detail},
            {"suggestion", d.suggestion},
            {"text", format(d)}};
}

Json to_json(const CheckReport& r, const Study& study) {
    Json j;
    j["status"] = r.status;
    j["fixpoint_iterations"] = r.fixpoint_iterations;
    j["diagnostics"] = Json::array();
    for (const auto& d : r.diagnostics) j["diagnostics"].push_back(to_json(d));
    j["missing"] = Json::array();
    for (const auto& m : r.missing) j["missing"].push_back({{"ident", m.ident}, {"attr", m.attr}, {"rule", m.rule}});
    j["applied_defaults"] = Json::array();
    for (const auto& a : r.applied_defaults)
        j["applied_defaults"].push_back({{"ident", a.ident}, {"attr", a.attr}, {"value", to_json(a.value)}, {"rule", a.rule}});
    j["pruned"] = Json::array();
    for (const auto& p : r.pruned)
        j["pruned"].push_back({{"ident", p.ident}, {"attr", p.attr}, {"value", to_json(p.value)}, {"rule", p.rule}});
    j["non_coherent"] = Json::array();
    for (const auto& [ident, attr] : r.non_coherent) j["non_coherent"].push_back({{"ident", ident}, {"attr", attr}});
    j["markers"] = markers(r, study);
    return j;
}

std::string script_literal(const Json& value) {
    if (value.is_array()) {
        std::string out = "[";
        for (std::size_t i = 0; i < value.size(); ++i) out += (i ? ", " : "") + script_literal(value[i]);
        return out + "]";
    }
    return json_value(value).repr();
}

// ---------------------------------------------------------------- Session

Session::Session(Study& study) : study_(study), interp_(study, hooks()) {
    if (!study_.root().children().empty()) log_ = dump_text(study_, root_ref());
}

ScriptHooks Session::hooks() {
    ScriptHooks hooks;
    hooks.check = [this](const ContextRef& ctx, bool prune) {
        CheckOptions opts;
        opts.prune = prune;
        last_check_ = ctxdesc::check(study_, ctx, opts);
        output_ += last_check_->text();
    };
    hooks.dump = [this](const ContextRef& ctx, const std::string& path) {
        if (path.empty()) output_ += dump_text(study_, ctx);
        else dump_to_file(study_, ctx, path);
    };
    hooks.view = [this](const ContextRef& ctx) { output_ += study_.view(ctx); };
    hooks.man = [this](const std::string& topic) {
        output_ += ctxdesc::man(study_.registry(), rules_or_empty(study_), topic);
    };
    hooks.show_origin = [this](const Description& d, const std::string& attr) {
        output_ += ctxdesc::show_origin(study_, d, attr).text + "\n";
    };
    return hooks;
}

Json Session::fresh_report() const { return to_json(evaluate(study_, root_ref(), {}), study_); }

Json Session::run_logged(const std::string& line) {
    if (line.find('\n') != std::string::npos) throw bad_request("one statement per request", "send lines one by one");
    output_.clear();
    last_check_.reset();
    interp_.exec_line(line);
    log_ += line + "\n";
    Json out{{"line", line}, {"output", output_}, {"report", fresh_report()}};
    if (last_check_) out["check"] = to_json(*last_check_, study_);
    return out;
}

Json Session::contexts() {
    std::lock_guard lock(mu_);
    Json list = Json::array();
    for (const auto& ident : study_.creation_order()) {
        if (const Description* d = study_.find_description(ident))
            list.push_back({{"ident", ident}, {"kind", "description"}, {"class", d->cls().name}});
        else if (const Script* s = study_.find_script(ident))
            list.push_back({{"ident", ident}, {"kind", "script"}, {"parent", s->parent()}});
    }
    return {{"contexts", list}};
}

Json Session::context(const std::string& ident) {
    std::lock_guard lock(mu_);
    ContextRef ref = resolve(study_, ident);
    CheckReport rep = evaluate(study_, root_ref(), {});
    Json out;
    if (ref.kind == ChildRef::Kind::Script) {
        const Script& s = study_.script(ref.ident);
        Json children = Json::array(), pending = Json::array();
        for (const auto& c : s.children())
            children.push_back({{"ident", c.ident}, {"kind", c.kind == ChildRef::Kind::Script ? "script" : "description"}});
        for (const auto& op : s.pending_ops()) pending.push_back(pending_op_text(op));
        out = {{"kind", "script"}, {"ident", s.ident()}, {"parent", s.parent()}, {"children", children},
               {"pending", pending}};
    } else {
        const Description& d = study_.description(ref.ident);
        const ClassDef& cls = d.cls();
        auto nc = non_coherent_set(rep);
        std::set<std::string> missing;
        for (const auto& m : rep.missing)
            if (m.ident == d.ident()) missing.insert(m.attr);
        Json attrs = Json::array();
        for (const auto& a : cls.attributes) {
            Json allowed = Json::array();
            for (const auto& v : a.domain.allowed) allowed.push_back(to_json(v));
            const Binding* b = d.binding(a.name);
            auto deft = a.static_default();
            bool is_missing = missing.count(a.name) > 0;
            attrs.push_back({{"name", a.name},
                             {"doc", a.doc},
                             {"kind", std::string(kind_name(a.iface_kind))},
                             {"domain", a.domain.describe(a.iface_kind)},
                             {"allowed", allowed},
                             {"restriction", a.restriction == Restriction::InterfaceOnly ? "interface" : "user"},
                             {"value", b ? to_json(b->value) : Json(nullptr)},
                             {"origin", b ? origin_json(b->origin) : Json(nullptr)},
                             {"default", deft ? to_json(*deft) : Json(nullptr)},
                             {"required", cls.is_required(a.name) || rules_or_empty(study_).always_required_for(cls.name, a.name)},
                             {"missing", is_missing},
                             {"non_coherent", nc.count({d.ident(), a.name}) > 0},
                             {"marker", is_missing ? "red" : ""}});
        }
        Json macros = Json::array();
        for (const auto& m : cls.macros) {
            Json versions = Json::object();
            for (const auto& [arity, atoms] : m.versions) versions[std::to_string(arity)] = atoms;
            MacroState st = macro_state(study_, d, m, nc);
            macros.push_back({{"name", m.name}, {"versions", versions}, {"folded", st.folded},
                              {"marker", st.green ? "green" : ""}});
        }
        out = {{"kind", "description"}, {"ident", d.ident()}, {"class", cls.name}, {"doc", cls.doc},
               {"attributes", attrs}, {"macros", macros}, {"attachments", d.attachments()}};
    }
    out["report"] = to_json(rep, study_);
    return out;
}

Json Session::set(const std::string& ident, const std::string& attr, const Json& value) {
    std::lock_guard lock(mu_);
    ContextRef ref = resolve(study_, ident);
    return run_logged(self_prefix(ref) + "set(" + Value(attr).repr() + ", " + script_literal(value) + ")");
}

Json Session::unset(const std::string& ident, const std::string& attr) {
    std::lock_guard lock(mu_);
    ContextRef ref = resolve(study_, ident);
    return run_logged(self_prefix(ref) + "unset(" + Value(attr).repr() + ")");
}

Json Session::exec(const std::string& line) {
    std::lock_guard lock(mu_);
    return run_logged(line);
}

Json Session::check(const Json& body) {
    std::lock_guard lock(mu_);
    if (!body.is_null() && !body.is_object()) throw bad_request("check body must be an object");
    std::string ident = body.is_object() && body.contains("context") ? string_field(body, "context") : std::string();
    ContextRef ref = resolve(study_, ident);
    std::string prune = body.is_object() && body.contains("prune") ? string_field(body, "prune") : std::string();
    if (!prune.empty() && prune != "preview" && prune != "confirm")
        throw bad_request("prune must be 'preview' or 'confirm'");

    std::vector<Hypothetical> hyps;
    if (body.is_object() && body.contains("what_if")) {
        if (!body["what_if"].is_array()) throw bad_request("what_if must be a list");
        for (const auto& h : body["what_if"])
            hyps.push_back({string_field(h, "ident"), string_field(h, "attr"),
                            h.contains("value") ? json_value(h["value"]) : Value()});
    }
    if (prune == "confirm") {
        if (!hyps.empty()) throw bad_request("what_if bindings cannot be confirmed", "set the values first");
        return run_logged(self_prefix(ref) + "check(prune=1)");
    }
    if (!hyps.empty() || prune == "preview") {
        CheckOptions opts;
        opts.prune = prune == "preview";
        CheckReport r = evaluate(study_, ref, opts, hyps);
        return {{"check", to_json(r, study_)}, {"report", fresh_report()}};
    }
    return run_logged(self_prefix(ref) + "check()");
}

Json Session::origin(const std::string& ident, const std::string& attr) {
    std::lock_guard lock(mu_);
    OriginTrace t = show_origin(study_, study_.description(ident), attr);
    return {{"ident", ident}, {"attr", attr}, {"origin", origin_json(t.origin)}, {"text", t.text}};
}

Json Session::man(const std::string& topic) {
    std::lock_guard lock(mu_);
    return {{"topic", topic}, {"text", ctxdesc::man(study_.registry(), rules_or_empty(study_), topic)}};
}

Json Session::dump(const std::string& ident) {
    std::lock_guard lock(mu_);
    ContextRef ref = resolve(study_, ident);
    return {{"context", ref.ident}, {"script", dump_text(study_, ref)}};
}

std::string Session::log() {
    std::lock_guard lock(mu_);
    return log_;
}

// ---------------------------------------------------------------- HTTP

namespace {

int http_status(const Diagnostic& d) {
    return d.code == "unknown_ident" || d.code == "unknown_topic" ? 404 : 400;
}

Json body_of(const httplib::Request& req) {
    if (req.body.empty()) return Json::object();
    try {
        return Json::parse(req.body);
    } catch (const Json::parse_error& e) {
        throw bad_request(std::string("request body is not JSON: ") + e.what());
    }
}

template <class F>
httplib::Server::Handler guarded(F fn) {
    return [fn](const httplib::Request& req, httplib::Response& res) {
        res.set_header("Access-Control-Allow-Origin", "*");
        try {
            fn(req, res);
        } catch (const Error& e) {
            res.status = http_status(e.diagnostic());
            res.set_content(to_json(e.diagnostic()).dump(), "application/json");
        } catch (const ParseError& e) {
            res.status = 400;
            res.set_content(to_json(Error("parse", e.what(), {}, "check the statement syntax").diagnostic()).dump(), "application/json");
        } catch (const Json::exception& e) {
            res.status = 400;
            res.set_content(to_json(bad_request(e.what()).diagnostic()).dump(), "application/json");
        } catch (const std::exception& e) {
            res.status = 500;
            res.set_content(to_json(Error("internal", e.what()).diagnostic()).dump(), "application/json");
        }
    };
}

void reply(httplib::Response& res, const Json& j) { res.set_content(j.dump(), "application/json"); }

}  // namespace

ServiceServer::ServiceServer(Session& session, const std::string& host, int port)
    : session_(session), server_(std::make_unique<httplib::Server>()) {
    auto& s = *server_;
    Session* ss = &session_;
    s.Get("/contexts", guarded([ss](const auto&, auto& res) { reply(res, ss->contexts()); }));
    s.Get(R"(/context/([^/]+))", guarded([ss](const auto& req, auto& res) { reply(res, ss->context(req.matches[1])); }));
    s.Post(R"(/context/([^/]+)/set)", guarded([ss](const auto& req, auto& res) {
               Json b = body_of(req);
               if (!b.contains("value")) throw bad_request("request body needs a 'value' field");
               reply(res, ss->set(req.matches[1], string_field(b, "attr"), b["value"]));
           }));
    s.Post(R"(/context/([^/]+)/unset)", guarded([ss](const auto& req, auto& res) {
               reply(res, ss->unset(req.matches[1], string_field(body_of(req), "attr")));
           }));
    s.Post("/exec", guarded([ss](const auto& req, auto& res) { reply(res, ss->exec(string_field(body_of(req), "line"))); }));
    s.Post("/check", guarded([ss](const auto& req, auto& res) { reply(res, ss->check(body_of(req))); }));
    s.Get(R"(/origin/([^/]+)/([^/]+))",
          guarded([ss](const auto& req, auto& res) { reply(res, ss->origin(req.matches[1], req.matches[2])); }));
    s.Get(R"(/man/([^/]+))", guarded([ss](const auto& req, auto& res) { reply(res, ss->man(req.matches[1])); }));
    s.Post("/dump", guarded([ss](const auto& req, auto& res) {
               Json b = body_of(req);
               reply(res, ss->dump(b.contains("context") ? string_field(b, "context") : std::string()));
           }));
    s.Get("/log", guarded([ss](const auto&, auto& res) { res.set_content(ss->log(), "text/plain"); }));

    port_ = port == 0 ? s.bind_to_any_port(host) : (s.bind_to_port(host, port) ? port : -1);
    if (port_ <= 0)
        throw Error("bind", "cannot listen on " + host + ":" + std::to_string(port), {}, "pick another port");
    thread_ = std::thread([this] { server_->listen_after_bind(); });
}

ServiceServer::~ServiceServer() { stop(); }

void ServiceServer::stop() {
    server_->stop();
    if (thread_.joinable()) thread_.join();
}

void ServiceServer::wait() {
    if (thread_.joinable()) thread_.join();
}

}  // namespace ctxdesc
