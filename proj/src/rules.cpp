#include "ctxdesc/rules.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace ctxdesc {

// ---------------------------------------------------------------- paths and patterns

AttrPath AttrPath::parse(std::string_view text) {
    auto dot = text.find('.');
    if (dot == std::string_view::npos) return {{}, std::string(text)};
    return {std::string(text.substr(0, dot)), std::string(text.substr(dot + 1))};
}

ValuePattern ValuePattern::from_node(const Node& n) {
    if (!n.is_scalar()) throw std::runtime_error("expected a scalar value, got " + to_notation(n));
    ValuePattern p(n.to_value());
    if (n.is_str()) {
        const std::string& s = n.as_str();
        if (s.size() >= 2 && s.front() == '/' && s.back() == '/') {
            p.source_ = s.substr(1, s.size() - 2);
            try {
                p.regex_ = std::regex(p.source_, std::regex::ECMAScript);
            } catch (const std::regex_error& e) {
                throw Error("bad_regex", "invalid pattern " + quote_str(s), {e.what()},
                            "fix the regular expression between the slashes");
            }
        }
    }
    return p;
}

bool ValuePattern::matches(const Value& v) const {
    if (!v.defined()) return false;
    if (regex_) return v.is_str() && std::regex_match(v.as_str(), *regex_);
    return loosely_equal(literal_, v);
}

std::string ValuePattern::repr() const { return literal_.repr(); }

Node ValuePattern::to_node() const { return Node::from_value(literal_); }

bool any_match(const std::vector<ValuePattern>& set, const Value& v) {
    return std::any_of(set.begin(), set.end(), [&](const ValuePattern& p) { return p.matches(v); });
}

std::string join_patterns(const std::vector<ValuePattern>& set, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < set.size(); ++i) {
        if (i) out += sep;
        out += set[i].repr();
    }
    return out;
}

std::string RequirementTerm::describe() const {
    switch (kind) {
    case Kind::Plain: return paths.front().text();
    case Kind::Alternative: {
        std::string out = "exactly-one-of(";
        for (std::size_t i = 0; i < paths.size(); ++i) out += (i ? ", " : "") + paths[i].text();
        return out + ")";
    }
    case Kind::Strong: return paths.front().text() + " in [" + join_patterns(allowed, ", ") + "]";
    }
    return "?";
}

// ---------------------------------------------------------------- RuleSet

bool RuleSet::always_required_for(std::string_view cls, std::string_view attr) const {
    for (const auto& [c, attrs] : always_required)
        if (c == cls && std::find(attrs.begin(), attrs.end(), attr) != attrs.end()) return true;
    return false;
}

namespace {

Node pattern_list(const std::vector<ValuePattern>& set) {
    Node l = Node::list();
    for (const auto& p : set) l.push_back(p.to_node());
    return l;
}

Node single(const std::string& key, Node value) {
    Node m = Node::map();
    m.set(key, std::move(value));
    return m;
}

}  // namespace

Node RuleSet::rule_node(const DependencyRule& r) {
    return single(r.attr.text(), single(r.source.text(), pattern_list(r.allowed)));
}

Node RuleSet::rule_node(const InfluenceRule& r) {
    Node terms = Node::list();
    for (const auto& t : r.requires_) {
        switch (t.kind) {
        case RequirementTerm::Kind::Plain: terms.push_back(Node::str(t.paths.front().text())); break;
        case RequirementTerm::Kind::Alternative: {
            Node alt = Node::list();
            for (const auto& p : t.paths) alt.push_back(Node::str(p.text()));
            terms.push_back(std::move(alt));
            break;
        }
        case RequirementTerm::Kind::Strong:
            terms.push_back(single(t.paths.front().text(), pattern_list(t.allowed)));
            break;
        }
    }
    Node inner = Node::map();
    inner.set(r.trigger.to_node(), std::move(terms));
    return single(r.attr.text(), std::move(inner));
}

Node RuleSet::rule_node(const ContextDefaultRule& r) {
    Node cond = Node::map();
    for (const auto& [p, set] : r.conditions) cond.set(p.text(), pattern_list(set));
    Node inner = Node::map();
    inner.set(Node::from_value(r.value), std::move(cond));
    return single(r.attr.text(), std::move(inner));
}

const ContextDefaultRule* RuleSet::find_default(std::string_view id) const {
    for (const auto& r : defaults)
        if (r.id == id) return &r;
    return nullptr;
}

// ---------------------------------------------------------------- loading

namespace {

Error rule_error(const std::string& headline, const std::string& where, const std::string& suggestion) {
    return Error("bad_rule", headline, {"in " + where}, suggestion);
}

std::string key_text(const Node& k) {
    if (k.is_str() || k.is_symbol()) return k.as_str();
    return to_notation(k);
}

class RuleLoader {
public:
    explicit RuleLoader(const ClassRegistry& reg) : reg_(reg) {}

    AttrPath path(const Node& n, const std::string& where) {
        if (!n.is_str() && !n.is_symbol())
            throw rule_error("attribute path expected, got " + to_notation(n), where, "write the path as 'attr' or 'class.attr'");
        AttrPath p = AttrPath::parse(n.as_str());
        validate(p, where);
        return p;
    }

    void validate(const AttrPath& p, const std::string& where) {
        if (!p.cls.empty()) {
            const ClassDef* c = reg_.find(p.cls);
            if (!c) {
                std::string near = nearest_name(p.cls, reg_.class_names());
                throw Error("unknown_path", "rule references unknown class '" + p.cls + "'", {"in " + where},
                            near.empty() ? "declare the class in the static definitions" : "did you mean '" + near + "'?");
            }
            if (!c->attribute(p.attr)) {
                std::string near = nearest_name(p.attr, c->attribute_names());
                throw Error("unknown_path", "rule references unknown attribute '" + p.text() + "'", {"in " + where},
                            near.empty() ? "declare '" + p.attr + "' in class '" + p.cls + "'"
                                         : "did you mean '" + p.cls + "." + near + "'?");
            }
            return;
        }
        std::vector<std::string> all;
        for (const auto& c : reg_.classes()) {
            if (c->attribute(p.attr)) return;
            for (auto& n : c->attribute_names()) all.push_back(n);
        }
        std::string near = nearest_name(p.attr, all);
        throw Error("unknown_path", "rule references unknown attribute '" + p.attr + "'", {"in " + where},
                    near.empty() ? "declare the attribute in the static definitions" : "did you mean '" + near + "'?");
    }

    /// Literal values must be acceptable for at least one owner of the path.
    ValuePattern pattern(const AttrPath& p, const Node& n, const std::string& where) {
        ValuePattern vp = ValuePattern::from_node(n);
        if (vp.is_regex() || !vp.literal().defined()) return vp;
        for (const auto& c : reg_.classes()) {
            if (!p.cls.empty() && c->name != p.cls) continue;
            const AttributeDef* a = c->attribute(p.attr);
            if (!a) continue;
            Value v = vp.literal();
            if (a->iface_kind == ValueKind::Float && v.is_int()) v = Value(v.number());
            if (v.kind() == a->iface_kind && a->domain.accepts(v)) return vp;
        }
        throw Error("bad_rule_value", "value " + vp.repr() + " is not valid for '" + p.text() + "'", {"in " + where},
                    "use a value from the attribute's domain, see man('" + p.attr + "')");
    }

    std::vector<ValuePattern> patterns(const AttrPath& p, const Node& n, const std::string& where) {
        std::vector<ValuePattern> out;
        if (n.is_list()) {
            for (const auto& i : n.items()) out.push_back(pattern(p, i, where));
        } else {
            out.push_back(pattern(p, n, where));
        }
        if (out.empty()) throw rule_error("empty value list", where, "give at least one allowed value");
        return out;
    }

    std::string next_id(const std::string& prefix, const AttrPath& p) {
        int k = counters_[prefix + p.text()]++;
        return prefix + p.text() + "#" + std::to_string(k);
    }

    void depend(const Node& sec, RuleSet& out) {
        require_map(sec, "'depend'");
        for (std::size_t i = 0; i < sec.keys().size(); ++i) {
            std::string where = "depend rule for '" + key_text(sec.keys()[i]) + "'";
            AttrPath attr = path(sec.keys()[i], where);
            const Node& body = sec.value_at(i);
            require_map(body, where);
            for (std::size_t j = 0; j < body.keys().size(); ++j) {
                DependencyRule r;
                r.attr = attr;
                r.source = path(body.keys()[j], where);
                r.allowed = patterns(r.source, body.value_at(j), where);
                r.id = next_id("depend:", attr);
                out.deps.push_back(std::move(r));
            }
        }
    }

    void influence(const Node& sec, RuleSet& out) {
        require_map(sec, "'influence'");
        for (std::size_t i = 0; i < sec.keys().size(); ++i) {
            std::string where = "influence rule for '" + key_text(sec.keys()[i]) + "'";
            AttrPath attr = path(sec.keys()[i], where);
            const Node& body = sec.value_at(i);
            require_map(body, where);
            for (std::size_t j = 0; j < body.keys().size(); ++j) {
                InfluenceRule r;
                r.attr = attr;
                r.trigger = pattern(attr, body.keys()[j], where);
                const Node& terms = body.value_at(j);
                if (!terms.is_list())
                    throw rule_error("influence requirements must be a list", where, "write [target, [alt1, alt2], {strong: [values]}]");
                for (const auto& t : terms.items()) {
                    if (t.is_str()) {
                        r.requires_.push_back({RequirementTerm::Kind::Plain, {path(t, where)}, {}});
                    } else if (t.is_list()) {
                        RequirementTerm alt{RequirementTerm::Kind::Alternative, {}, {}};
                        for (const auto& m : t.items()) alt.paths.push_back(path(m, where));
                        if (alt.paths.size() < 2)
                            throw rule_error("alternative group needs two or more members", where, "list the alternatives");
                        r.requires_.push_back(std::move(alt));
                    } else if (t.is_map()) {
                        for (std::size_t k = 0; k < t.keys().size(); ++k) {
                            AttrPath p = path(t.keys()[k], where);
                            r.requires_.push_back({RequirementTerm::Kind::Strong, {p}, patterns(p, t.value_at(k), where)});
                        }
                    } else {
                        throw rule_error("malformed requirement term " + to_notation(t), where,
                                         "use 'attr', ['alt1', 'alt2'] or {'attr': [values]}");
                    }
                }
                r.id = next_id("influence:", attr);
                out.infls.push_back(std::move(r));
            }
        }
    }

    void context_default(const Node& sec, RuleSet& out) {
        require_map(sec, "'context_default'");
        for (std::size_t i = 0; i < sec.keys().size(); ++i) {
            std::string where = "context_default rule for '" + key_text(sec.keys()[i]) + "'";
            AttrPath attr = path(sec.keys()[i], where);
            const Node& body = sec.value_at(i);
            require_map(body, where);
            for (std::size_t j = 0; j < body.keys().size(); ++j) {
                ValuePattern v = pattern(attr, body.keys()[j], where);
                if (v.is_regex() || !v.literal().defined())
                    throw rule_error("a contextual default must be a plain value", where, "write the default value literally");
                const Node& conds = body.value_at(j);
                std::vector<const Node*> alternatives;
                if (conds.is_list()) {
                    for (const auto& c : conds.items()) alternatives.push_back(&c);
                } else {
                    alternatives.push_back(&conds);
                }
                for (const Node* c : alternatives) {
                    require_map(*c, where);
                    ContextDefaultRule r;
                    r.attr = attr;
                    r.value = v.literal();
                    for (std::size_t k = 0; k < c->keys().size(); ++k) {
                        AttrPath p = path(c->keys()[k], where);
                        r.conditions.emplace_back(p, patterns(p, c->value_at(k), where));
                    }
                    r.id = next_id("", attr);
                    out.defaults.push_back(std::move(r));
                }
            }
        }
    }

    void always_required(const Node& sec, RuleSet& out) {
        require_map(sec, "'always_required'");
        for (std::size_t i = 0; i < sec.keys().size(); ++i) {
            std::string cls = key_text(sec.keys()[i]);
            std::string where = "always_required entry for '" + cls + "'";
            std::vector<std::string> attrs;
            const Node& l = sec.value_at(i);
            if (!l.is_list()) throw rule_error("always_required expects a list of attributes", where, "write {'class': ['attr', ...]}");
            for (const auto& a : l.items()) {
                AttrPath p = path(a, where);
                p.cls = cls;
                validate(p, where);
                attrs.push_back(p.attr);
            }
            out.always_required.emplace_back(cls, std::move(attrs));
        }
    }

private:
    static void require_map(const Node& n, const std::string& where) {
        if (!n.is_map()) throw rule_error("expected a map, got " + to_notation(n), where, "see docs/formats.md for the rule grammar");
    }

    const ClassRegistry& reg_;
    std::map<std::string, int> counters_;
};

}  // namespace

void validate_acyclic(const RuleSet& rules) {
    std::vector<std::string> order;
    std::map<std::string, std::vector<std::string>> adj;
    auto node = [&](const std::string& n) {
        if (adj.emplace(n, std::vector<std::string>{}).second) order.push_back(n);
    };
    auto edge = [&](const std::string& a, const std::string& b) {
        node(a);
        node(b);
        auto& out = adj[a];
        if (std::find(out.begin(), out.end(), b) == out.end()) out.push_back(b);
    };
    for (const auto& d : rules.deps) edge(d.source.attr, d.attr.attr);
    for (const auto& r : rules.infls)
        for (const auto& t : r.requires_)
            for (const auto& p : t.paths) edge(r.attr.attr, p.attr);

    std::map<std::string, int> color;  // 0 new, 1 on stack, 2 done
    std::vector<std::string> stack;
    std::function<void(const std::string&)> dfs = [&](const std::string& n) {
        color[n] = 1;
        stack.push_back(n);
        for (const auto& m : adj[n]) {
            if (color[m] == 1) {
                auto from = std::find(stack.begin(), stack.end(), m);
                std::string cyc;
                for (auto it = from; it != stack.end(); ++it) cyc += *it + "→";
                cyc += m;
                throw Error("rule_cycle", "rule cycle " + cyc, {"the attribute graph of dependency and influence rules must be acyclic"},
                            "remove one of the rules on this cycle");
            }
            if (color[m] == 0) dfs(m);
        }
        stack.pop_back();
        color[n] = 2;
    };
    for (const auto& n : order)
        if (color[n] == 0) dfs(n);
}

RuleSet load_rule_defs(const Node& doc, const ClassRegistry& registry) {
    if (!doc.is_map()) throw rule_error("rule document must be a map", "rule document", "start the document with '{'");
    RuleSet out;
    RuleLoader loader(registry);
    for (std::size_t i = 0; i < doc.keys().size(); ++i) {
        std::string sec = key_text(doc.keys()[i]);
        const Node& body = doc.value_at(i);
        if (sec == "depend") loader.depend(body, out);
        else if (sec == "influence") loader.influence(body, out);
        else if (sec == "context_default") loader.context_default(body, out);
        else if (sec == "always_required") loader.always_required(body, out);
        else if (sec == "max_fixpoint_iters") {
            if (!body.is_int() || body.as_int() < 1)
                throw rule_error("max_fixpoint_iters must be a positive integer", "rule document", "write e.g. 100");
            out.max_fixpoint_iters = static_cast<int>(body.as_int());
        } else {
            const std::vector<std::string> known{"depend", "influence", "context_default", "always_required", "max_fixpoint_iters"};
            std::string near = nearest_name(sec, known);
            throw Error("bad_rule", "unknown rule section '" + sec + "'", {},
                        near.empty() ? "sections are depend, influence, context_default, always_required" : "did you mean '" + near + "'?");
        }
    }
    validate_acyclic(out);
    return out;
}

RuleSet load_rule_defs_file(const std::string& path, const ClassRegistry& registry) {
    return load_rule_defs(parse_notation(read_text_file(path)), registry);
}

RuleSet merge_rules(const RuleSet& base, const RuleSet& extra, const ClassRegistry& registry) {
    (void)registry;
    RuleSet out = base;
    auto taken = [&](const std::string& id) {
        for (const auto& r : out.deps) if (r.id == id) return true;
        for (const auto& r : out.infls) if (r.id == id) return true;
        for (const auto& r : out.defaults) if (r.id == id) return true;
        return false;
    };
    // ids stay unique: a product's rules continue the numbering of the base
    auto renumber = [&](std::string id) {
        auto hash = id.rfind('#');
        std::string stem = id.substr(0, hash);
        int k = std::stoi(id.substr(hash + 1));
        while (taken(id)) id = stem + "#" + std::to_string(++k);
        return id;
    };
    for (auto r : extra.deps) { r.id = renumber(r.id); out.deps.push_back(std::move(r)); }
    for (auto r : extra.infls) { r.id = renumber(r.id); out.infls.push_back(std::move(r)); }
    for (auto r : extra.defaults) { r.id = renumber(r.id); out.defaults.push_back(std::move(r)); }
    for (const auto& e : extra.always_required) out.always_required.push_back(e);
    validate_acyclic(out);
    return out;
}

// ---------------------------------------------------------------- evaluation

std::size_t CheckReport::count(Severity s) const {
    return static_cast<std::size_t>(
        std::count_if(diagnostics.begin(), diagnostics.end(), [&](const Diagnostic& d) { return d.severity == s; }));
}

std::string CheckReport::text() const {
    std::string out;
    for (const auto& d : diagnostics) out += format(d) + "\n";
    for (const auto& a : applied_defaults)
        out += "default applied: " + a.ident + "." + a.attr + " = " + a.value.repr() + " (rule " + a.rule + ")\n";
    for (const auto& p : pruned)
        out += "pruned: " + p.ident + "." + p.attr + " = " + p.value.repr() + " (rule " + p.rule + ")\n";
    if (status)
        out += "status: complete and coherent\n";
    else
        out += "status: not complete or not coherent (" + std::to_string(missing.size()) + " missing, " +
               std::to_string(count(Severity::Error)) + " errors)\n";
    return out;
}

namespace {

using Key = std::pair<std::string, std::string>;

class Evaluator {
public:
    Evaluator(const Study& study, const RuleSet& rules, const CheckOptions& opts)
        : study_(study), rules_(rules), opts_(opts) {}

    CheckReport run(const ContextRef& ctx, const std::vector<Hypothetical>& hyp) {
        closure_ = study_.closure(ctx);
        for (const Description* d : closure_) {
            auto& b = base_[d->ident()];
            for (const auto& bd : d->bindings())
                if (bd.origin.kind != Origin::Kind::ContextRule) b.emplace(bd.attr, bd);
        }
        for (const auto& h : hyp) {
            auto it = base_.find(h.ident);
            if (it == base_.end())
                throw Error("what_if_scope", "'" + h.ident + "' is not in the checked context", {},
                            "check a context that contains '" + h.ident + "'");
            Value v = study_.validated(study_.description(h.ident), h.attr, h.value);
            if (v.defined())
                it->second[h.attr] = {h.attr, v, Origin::user()};
            else
                it->second.erase(h.attr);
        }

        std::vector<Violation> violations;
        std::size_t rounds = 1;
        for (const auto& [_, b] : base_) rounds += b.size();
        for (std::size_t round = 0; round < rounds; ++round) {
            state_ = base_;
            rep_.applied_defaults.clear();
            fixpoint();
            violations = dependency_violations();
            if (!opts_.prune || violations.empty()) break;
            // remove only the dependent side, then rerun from scratch
            for (const auto& v : violations) {
                base_[v.desc->ident()].erase(v.attr);
                blocked_.insert({v.desc->ident(), v.attr});
                rep_.pruned.push_back({v.desc->ident(), v.attr, v.value, v.rule->id});
            }
            violations.clear();
        }

        std::set<Key> violated;
        for (const auto& v : violations) {
            violated.insert({v.desc->ident(), v.attr});
            rep_.non_coherent.emplace_back(v.desc->ident(), v.attr);
            report_meaningless(v);
        }
        influences(violated);
        required();
        if (opts_.strict) escalate_all(rep_.diagnostics);
        rep_.status = !has_errors(rep_.diagnostics) && rep_.missing.empty();
        return std::move(rep_);
    }

private:
    struct Resolved {
        const Description* desc = nullptr;
        Value value;
        bool ambiguous = false;
    };
    struct Violation {
        const Description* desc;
        std::string attr;
        Value value;
        const DependencyRule* rule;
        Resolved source;
    };

    void diag(Diagnostic d) {
        if (diag_keys_.insert(d.code + "\n" + d.headline).second) rep_.diagnostics.push_back(std::move(d));
    }

    const Binding* bound(const Description& d, std::string_view attr) const {
        auto it = state_.find(d.ident());
        if (it == state_.end()) return nullptr;
        auto jt = it->second.find(std::string(attr));
        return jt == it->second.end() ? nullptr : &jt->second;
    }

    Value value_of(const Description& d, std::string_view attr, bool effective) const {
        if (const Binding* b = bound(d, attr)) return b->value;
        if (!effective) return {};
        const AttributeDef* a = d.cls().attribute(attr);
        if (a)
            if (auto s = a->static_default()) return *s;
        return {};
    }

    static bool owns(const Description& d, const AttrPath& p) {
        return (p.cls.empty() || d.cls().name == p.cls) && d.cls().attribute(p.attr) != nullptr;
    }

    Resolved resolve(const AttrPath& p, const Description& from, bool effective) {
        std::vector<const Description*> cands;
        if (p.cls.empty() && from.cls().attribute(p.attr)) {
            cands.push_back(&from);
        } else {
            for (const Description* d : closure_)
                if (owns(*d, p)) cands.push_back(d);
        }
        Resolved r;
        if (cands.empty()) return r;
        r.desc = cands.front();
        std::vector<std::pair<const Description*, Value>> defined;
        for (const Description* d : cands) {
            Value v = value_of(*d, p.attr, effective);
            if (v.defined()) defined.emplace_back(d, v);
        }
        if (defined.empty()) return r;
        for (const auto& [d, v] : defined) {
            if (!loosely_equal(v, defined.front().second)) {
                Diagnostic dg{Severity::Error, "ambiguous", "'" + p.text() + "' is ambiguous in the checked context", {},
                              "keep a single " + (p.cls.empty() ? std::string("owner") : p.cls + " description") +
                                  " in the closure, or give the instances equal values"};
                for (const auto& [dd, vv] : defined) dg.detail.push_back(dd->ident() + "." + p.attr + " = " + vv.repr());
                diag(std::move(dg));
                r.ambiguous = true;
                return r;
            }
        }
        r.desc = defined.front().first;
        r.value = defined.front().second;
        return r;
    }

    std::size_t defined_count() const {
        std::size_t n = 0;
        for (const auto& [_, b] : state_) n += b.size();
        return n;
    }

    void fixpoint() {
        rep_.fixpoint_iterations = 0;
        rep_.fixpoint_sizes = {defined_count()};
        for (;;) {
            std::vector<AppliedDefault> changes;
            std::set<Key> seen;
            for (const auto& rule : rules_.defaults) {
                for (const Description* d : closure_) {
                    if (!owns(*d, rule.attr)) continue;
                    Key k{d->ident(), rule.attr.attr};
                    if (bound(*d, rule.attr.attr) || blocked_.count(k) || seen.count(k)) continue;
                    bool ok = std::all_of(rule.conditions.begin(), rule.conditions.end(), [&](const auto& c) {
                        Resolved r = resolve(c.first, *d, false);
                        return any_match(c.second, r.value);
                    });
                    if (!ok) continue;
                    seen.insert(k);
                    changes.push_back({d->ident(), rule.attr.attr, rule.value, rule.id});
                }
            }
            if (changes.empty()) return;
            if (rep_.fixpoint_iterations >= rules_.max_fixpoint_iters) {
                Diagnostic dg{Severity::Error, "fixpoint",
                              "contextual defaults did not settle within " + std::to_string(rules_.max_fixpoint_iters) +
                                  " iterations",
                              {}, "look for contextual default rules feeding each other"};
                std::string last;
                for (const auto& c : changes) last += (last.empty() ? "" : ", ") + c.ident + "." + c.attr;
                dg.detail.push_back("still changing: " + last);
                diag(std::move(dg));
                return;
            }
            for (const auto& c : changes) {
                const Description& d = study_.description(c.ident);
                Value v = c.value;
                if (const AttributeDef* a = d.cls().attribute(c.attr); a && a->iface_kind == ValueKind::Float && v.is_int())
                    v = Value(v.number());
                state_[c.ident][c.attr] = {c.attr, v, Origin::rule(c.rule)};
                rep_.applied_defaults.push_back({c.ident, c.attr, v, c.rule});
            }
            ++rep_.fixpoint_iterations;
            rep_.fixpoint_sizes.push_back(defined_count());
        }
    }

    std::vector<Violation> dependency_violations() {
        std::vector<Violation> out;
        for (const Description* d : closure_) {
            for (const auto& a : d->cls().attributes) {
                const Binding* b = bound(*d, a.name);
                if (!b) continue;
                for (const auto& rule : rules_.deps) {
                    if (rule.attr.attr != a.name || !owns(*d, rule.attr)) continue;
                    Resolved src = resolve(rule.source, *d, true);
                    if (src.ambiguous || any_match(rule.allowed, src.value)) continue;
                    out.push_back({d, a.name, b->value, &rule, src});
                    break;
                }
            }
        }
        return out;
    }

    void report_meaningless(const Violation& v) {
        const std::string src = v.rule->source.text();
        std::string headline = v.attr + " meaningless for " +
                               (v.source.value.defined() ? src + "=" + v.source.value.repr() : src + " undefined") +
                               " in '" + v.desc->ident() + "'";
        Diagnostic dg{Severity::Warning, "meaningless", headline,
                      {v.attr + " = " + v.value.repr() + " has meaning only when " + src + " is one of " +
                           join_patterns(v.rule->allowed, ", "),
                       "rule " + v.rule->id + ": " + to_notation(RuleSet::rule_node(*v.rule))},
                      "unset(" + v.desc->ident() + ", '" + v.attr + "'), or run check(prune=1) to remove it"};
        diag(std::move(dg));
    }

    const ClassDef* holder_class(const AttrPath& p) const {
        if (!p.cls.empty()) return study_.registry().find(p.cls);
        for (const auto& c : study_.registry().classes())
            if (c->attribute(p.attr)) return c.get();
        return nullptr;
    }

    std::string skeleton(const Resolved& r, const AttrPath& p) const {
        const ClassDef* c = r.desc ? &r.desc->cls() : holder_class(p);
        if (!c) return "define '" + p.text() + "'";
        const AttributeDef* a = c->attribute(p.attr);
        std::string s = set_skeleton(*c, *a);
        if (!r.desc) s = "create a " + c->name + " description, then " + s;
        return s;
    }

    void add_missing(const std::string& ident, const std::string& attr, const std::string& rule,
                     std::vector<std::string> detail, const std::string& suggestion) {
        MissingItem m{ident, attr, rule};
        for (const auto& e : rep_.missing)
            if (e.ident == ident && e.attr == attr) return;
        rep_.missing.push_back(m);
        std::string where = ident.empty() ? "in the checked context" : "on '" + ident + "'";
        diag({Severity::Error, "missing", "missing value for " + attr + " " + where, std::move(detail), suggestion});
    }

    void influences(const std::set<Key>& violated) {
        for (const Description* d : closure_) {
            for (const auto& a : d->cls().attributes) {
                const Binding* b = bound(*d, a.name);
                if (!b || violated.count({d->ident(), a.name})) continue;
                for (const auto& rule : rules_.infls) {
                    if (rule.attr.attr != a.name || !owns(*d, rule.attr) || !rule.trigger.matches(b->value)) continue;
                    std::string because = "required by " + a.name + " = " + b->value.repr() + " (rule " + rule.id + ")";
                    for (const auto& t : rule.requires_) term(*d, rule, t, because);
                }
            }
        }
    }

    void term(const Description& d, const InfluenceRule& rule, const RequirementTerm& t, const std::string& because) {
        switch (t.kind) {
        case RequirementTerm::Kind::Plain: {
            Resolved r = resolve(t.paths.front(), d, true);
            if (r.ambiguous || r.value.defined()) return;
            add_missing(r.desc ? r.desc->ident() : "", t.paths.front().attr, rule.id, {because}, skeleton(r, t.paths.front()));
            return;
        }
        case RequirementTerm::Kind::Alternative: {
            std::vector<std::string> set;
            std::string sugg;
            std::string ident;
            for (const auto& p : t.paths) {
                Resolved r = resolve(p, d, false);
                if (r.value.defined()) set.push_back((r.desc ? r.desc->ident() + "." : "") + p.attr);
                if (ident.empty() && r.desc) ident = r.desc->ident();
                sugg += (sugg.empty() ? "" : " or ") + skeleton(r, p);
            }
            if (set.empty()) {
                add_missing(ident, t.describe(), rule.id, {because}, sugg);
            } else if (set.size() > 1) {
                std::string list;
                for (const auto& s : set) list += (list.empty() ? "" : ", ") + s;
                diag({Severity::Warning, "over_specified", "over-specification: " + t.describe() + " has " +
                                                               std::to_string(set.size()) + " values on '" + d.ident() + "'",
                      {because, "defined: " + list}, "keep exactly one of them and unset the others"});
            }
            return;
        }
        case RequirementTerm::Kind::Strong: {
            const AttrPath& p = t.paths.front();
            Resolved r = resolve(p, d, true);
            if (r.ambiguous) return;
            if (!r.value.defined()) {
                std::string sugg = "set(" + (r.desc ? r.desc->cls().name : p.cls.empty() ? p.attr : p.cls) + ", '" + p.attr +
                                   "', " + join_patterns(t.allowed, "|") + ")";
                add_missing(r.desc ? r.desc->ident() : "", p.attr, rule.id, {because}, sugg);
            } else if (!any_match(t.allowed, r.value)) {
                rep_.non_coherent.emplace_back(r.desc->ident(), p.attr);
                diag({Severity::Warning, "conflict",
                      p.attr + " = " + r.value.repr() + " on '" + r.desc->ident() + "' conflicts with " +
                          rule.attr.attr + " = " + value_of(d, rule.attr.attr, false).repr(),
                      {because, "allowed: " + join_patterns(t.allowed, ", ")},
                      "set(" + r.desc->cls().name + ", '" + p.attr + "', " + join_patterns(t.allowed, "|") + ")"});
            }
            return;
        }
        }
    }

    void required() {
        for (const Description* d : closure_) {
            const ClassDef& c = d->cls();
            for (const auto& a : c.attributes) {
                if (!c.is_required(a.name) && !rules_.always_required_for(c.name, a.name)) continue;
                if (value_of(*d, a.name, true).defined()) continue;
                add_missing(d->ident(), a.name, "always_required", {"attribute value is always required"},
                            set_skeleton(c, a));
            }
        }
    }

    const Study& study_;
    const RuleSet& rules_;
    const CheckOptions& opts_;
    std::vector<const Description*> closure_;
    std::map<std::string, std::map<std::string, Binding>> base_, state_;
    std::set<Key> blocked_;
    CheckReport rep_;
    std::set<std::string> diag_keys_;
};

const RuleSet& rules_of(const Study& study) {
    static const RuleSet empty;
    return study.rules() ? *study.rules() : empty;
}

}  // namespace

CheckReport evaluate(const Study& study, const ContextRef& ctx, const CheckOptions& opts,
                     const std::vector<Hypothetical>& hypothetical) {
    return Evaluator(study, rules_of(study), opts).run(ctx, hypothetical);
}

CheckReport check(Study& study, const ContextRef& ctx, const CheckOptions& opts) {
    CheckReport rep = evaluate(study, ctx, opts);
    for (const Description* cd : study.closure(ctx)) {
        Description& d = study.description(cd->ident());
        for (const auto& b : d.bindings())
            if (b.origin.kind == Origin::Kind::ContextRule) d.unbind(b.attr);
    }
    for (const auto& p : rep.pruned) study.description(p.ident).unbind(p.attr);
    for (const auto& a : rep.applied_defaults) study.description(a.ident).bind({a.attr, a.value, Origin::rule(a.rule)});
    study.marks.non_coherent.clear();
    study.marks.missing.clear();
    for (const auto& k : rep.non_coherent) study.marks.non_coherent.insert(k);
    for (const auto& m : rep.missing)
        if (!m.ident.empty()) study.marks.missing.insert({m.ident, m.attr});
    return rep;
}

CheckReport what_if(const Study& study, const ContextRef& ctx, const std::vector<Hypothetical>& hypothetical,
                    const CheckOptions& opts) {
    return evaluate(study, ctx, opts, hypothetical);
}

Value get_or_deft(const Study& study, const Description& desc, std::string_view attr, std::optional<ContextRef> scope) {
    const AttributeDef* def = desc.cls().attribute(attr);
    if (!def) {
        std::string near = nearest_name(attr, desc.cls().attribute_names());
        throw Error("unknown_attribute", "class '" + desc.cls().name + "' has no attribute '" + std::string(attr) + "'", {},
                    near.empty() ? "see man('" + desc.cls().name + "')" : "did you mean '" + near + "'?");
    }
    const Binding* b = desc.binding(attr);
    if (b && b->origin.kind != Origin::Kind::ContextRule) return b->value;
    for (const auto& ds : def->defaults) {
        switch (ds.kind) {
        case DefaultSource::Kind::Contextual: {
            if (!study.rules()) break;
            CheckReport rep = evaluate(study, scope ? *scope : root_ref(), {});
            for (const auto& a : rep.applied_defaults)
                if (a.ident == desc.ident() && a.attr == attr) return a.value;
            break;
        }
        case DefaultSource::Kind::Static: return ds.value;
        case DefaultSource::Kind::Kernel:
            if (auto v = def->domain.from_kernel(ds.value)) return *v;
            return ds.value;
        case DefaultSource::Kind::None: return {};
        }
    }
    return {};
}

OriginTrace show_origin(const Study& study, const Description& desc, std::string_view attr) {
    if (!desc.cls().attribute(attr)) {
        std::string near = nearest_name(attr, desc.cls().attribute_names());
        throw Error("unknown_attribute", "class '" + desc.cls().name + "' has no attribute '" + std::string(attr) + "'", {},
                    near.empty() ? "see man('" + desc.cls().name + "')" : "did you mean '" + near + "'?");
    }
    const Binding* b = desc.binding(attr);
    if (!b)
        throw Error("undefined_value", "'" + std::string(attr) + "' has no value on '" + desc.ident() + "'",
                    {"origins are traced for defined values only"},
                    "use get_or_deft(" + desc.ident() + ", '" + std::string(attr) + "') for the default chain");
    OriginTrace t{b->origin, desc.ident() + "." + std::string(attr) + " = " + b->value.repr() + ": " + b->origin.describe()};
    if (b->origin.kind == Origin::Kind::ContextRule && study.rules())
        if (const ContextDefaultRule* r = study.rules()->find_default(b->origin.detail))
            t.text += "\n  " + to_notation(RuleSet::rule_node(*r));
    return t;
}

}  // namespace ctxdesc
