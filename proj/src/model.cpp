#include "ctxdesc/model.hpp"

#include <algorithm>
#include <functional>

namespace ctxdesc {

std::string Origin::describe() const {
    switch (kind) {
    case Kind::User: return "user";
    case Kind::StaticDefault: return "static default";
    case Kind::KernelDefault: return "kernel default";
    case Kind::ContextRule: return "contextual rule " + detail;
    case Kind::Interface: return "interface (" + detail + ")";
    }
    return "?";
}

// ---------------------------------------------------------------- Description

Description::Description(std::shared_ptr<const ClassDef> cls, std::string ident)
    : cls_(std::move(cls)), ident_(std::move(ident)) {}

const Binding* Description::binding(std::string_view attr) const {
    auto it = bindings_.find(attr);
    return it == bindings_.end() ? nullptr : &it->second;
}

Value Description::value(std::string_view attr) const {
    const Binding* b = binding(attr);
    return b ? b->value : Value();
}

std::vector<Binding> Description::bindings() const {
    std::vector<Binding> out;
    for (const auto& a : cls_->attributes)
        if (const Binding* b = binding(a.name)) out.push_back(*b);
    return out;
}

void Description::bind(Binding b) {
    std::string key = b.attr;
    bindings_[key] = std::move(b);
}

void Description::unbind(std::string_view attr) {
    auto it = bindings_.find(attr);
    if (it != bindings_.end()) bindings_.erase(it);
}

void Description::add_attachment(const std::string& ident) {
    if (std::find(attachments_.begin(), attachments_.end(), ident) == attachments_.end())
        attachments_.push_back(ident);
}

// ---------------------------------------------------------------- Study

Study::Study(std::shared_ptr<const ClassRegistry> registry, std::shared_ptr<const RuleSet> rules)
    : registry_(std::move(registry)), rules_(std::move(rules)) {
    if (!registry_->finalized())
        throw Error("not_finalized", "class registry must be finalized before use", {}, "call finalize()");
    scripts_.emplace(std::string(kRootIdent), std::make_unique<Script>(std::string(kRootIdent)));
}

void Study::replace_definitions(std::shared_ptr<const ClassRegistry> registry, std::shared_ptr<const RuleSet> rules) {
    registry_ = std::move(registry);
    rules_ = std::move(rules);
    for (auto& [_, d] : descs_) {
        if (const ClassDef* c = registry_->find(d->cls_->name)) {
            for (const auto& cp : registry_->classes())
                if (cp.get() == c) d->cls_ = cp;
        }
    }
}

bool Study::has_ident(std::string_view ident) const {
    return descs_.find(ident) != descs_.end() || scripts_.find(ident) != scripts_.end();
}

std::optional<ContextRef> Study::lookup(std::string_view ident) const {
    if (descs_.find(ident) != descs_.end()) return desc_ref(std::string(ident));
    if (scripts_.find(ident) != scripts_.end()) return script_ref(std::string(ident));
    return std::nullopt;
}

Description* Study::find_description(std::string_view ident) {
    auto it = descs_.find(ident);
    return it == descs_.end() ? nullptr : it->second.get();
}

const Description* Study::find_description(std::string_view ident) const {
    auto it = descs_.find(ident);
    return it == descs_.end() ? nullptr : it->second.get();
}

static Error unknown_ident(std::string_view ident, const std::vector<std::string>& known) {
    std::string near = nearest_name(ident, known);
    return Error("unknown_ident", "no context named '" + std::string(ident) + "'", {},
                 near.empty() ? "create it first (forward references resolve at check time)"
                              : "did you mean '" + near + "'?");
}

Description& Study::description(std::string_view ident) {
    if (Description* d = find_description(ident)) return *d;
    throw unknown_ident(ident, idents());
}

const Description& Study::description(std::string_view ident) const {
    if (const Description* d = find_description(ident)) return *d;
    throw unknown_ident(ident, idents());
}

Script& Study::script(std::string_view ident) {
    auto it = scripts_.find(ident);
    if (it == scripts_.end()) throw unknown_ident(ident, idents());
    return *it->second;
}

const Script& Study::script(std::string_view ident) const {
    auto it = scripts_.find(ident);
    if (it == scripts_.end()) throw unknown_ident(ident, idents());
    return *it->second;
}

const Script* Study::find_script(std::string_view ident) const {
    auto it = scripts_.find(ident);
    return it == scripts_.end() ? nullptr : it->second.get();
}

std::vector<std::string> Study::idents() const {
    std::vector<std::string> out;
    for (const auto& [k, _] : descs_) out.push_back(k);
    for (const auto& [k, _] : scripts_) out.push_back(k);
    return out;
}

void Study::register_ident(std::string_view ident, std::string_view kind) {
    if (ident.empty()) throw Error("bad_ident", "empty identifier", {}, "give name='<ident>'");
    if (auto prior = lookup(ident)) {
        std::string owner = prior->kind == ChildRef::Kind::Script
                                ? "script"
                                : "description of class '" + description(ident).cls().name + "'";
        throw Error("duplicate_ident", "identifier '" + std::string(ident) + "' is already used",
                    {"owner: " + owner, "new " + std::string(kind) + " rejected"}, "choose another name=");
    }
}

Description& Study::create_description(std::string_view cls, std::string_view ident, std::string_view in_script) {
    const ClassDef& c = registry_->at(cls);
    Script& parent = script(in_script);
    register_ident(ident, "description");
    std::shared_ptr<const ClassDef> ptr;
    for (const auto& cp : registry_->classes())
        if (cp.get() == &c) ptr = cp;
    auto d = std::make_unique<Description>(ptr, std::string(ident));
    Description& ref = *d;
    descs_.emplace(std::string(ident), std::move(d));
    parent.children_.push_back({ChildRef::Kind::Description, std::string(ident)});
    creation_order_.push_back(std::string(ident));
    return ref;
}

Script& Study::create_script(std::string_view ident, std::string_view in_script) {
    Script& parent = script(in_script);
    register_ident(ident, "script");
    auto s = std::make_unique<Script>(std::string(ident));
    s->parent_ = parent.ident();
    Script& ref = *s;
    scripts_.emplace(std::string(ident), std::move(s));
    parent.children_.push_back({ChildRef::Kind::Script, std::string(ident)});
    return ref;
}

std::string set_skeleton(const ClassDef& cls, const AttributeDef& def) {
    std::string v;
    if (def.domain.enumerated()) {
        for (std::size_t i = 0; i < def.domain.allowed.size(); ++i) {
            if (i) v += "|";
            v += def.domain.allowed[i].repr();
        }
    } else {
        v = std::string(kind_placeholder(def.iface_kind));
    }
    return "set(" + cls.name + ", '" + def.name + "', " + v + ")";
}

void Study::check_value(const Description& desc, const AttributeDef& def, Value& v, const Origin& origin,
                        std::vector<Diagnostic>* sink) const {
    const ClassDef& cls = desc.cls();
    if (!options.unlock && cls.matches(cls.undocumented, def.name, &v)) {
        bool whole = cls.matches(cls.undocumented, def.name, nullptr);
        throw Error("undocumented",
                    (whole ? "attribute '" + def.name + "'" : "value " + v.repr() + " of '" + def.name + "'") +
                        " of class '" + cls.name + "' is not yet documented",
                    {}, "use the --unlock option to enable it");
    }
    if (def.restriction == Restriction::InterfaceOnly && origin.kind == Origin::Kind::User)
        throw Error("restricted", "attribute '" + def.name + "' of class '" + cls.name + "' is set by the interface only",
                    {}, "remove the set() call for '" + def.name + "'");

    if (v.defined()) {
        bool ok = false;
        switch (def.iface_kind) {
        case ValueKind::Float:
            if (v.is_int()) v = Value(v.number());
            ok = v.is_float();
            break;
        case ValueKind::Int: ok = v.is_int(); break;
        case ValueKind::Str: ok = v.is_str(); break;
        }
        if (!ok)
            throw Error("kind_mismatch",
                        "value " + v.repr() + " of '" + def.name + "' is not a " + std::string(kind_name(def.iface_kind)),
                        {"class: " + cls.name}, set_skeleton(cls, def));
        if (!def.domain.accepts(v))
            throw Error("domain", "value " + v.repr() + " is outside the domain of '" + def.name + "'",
                        {"allowed: " + def.domain.describe(def.iface_kind)}, set_skeleton(cls, def));
    }

    if (const ObsoleteEntry* ob = cls.obsolete_entry(def.name, &v)) {
        std::string what = ob->item.value ? "value " + ob->item.value->repr() + " of '" + def.name + "'"
                                          : "attribute '" + def.name + "'";
        std::string repl = ob->replacement ? (ob->item.value ? ob->replacement->repr()
                                                             : "'" + ob->replacement->as_str() + "'")
                                           : std::string();
        std::string sugg = ob->replacement ? "use " + repl + " instead" : "remove the obsolete setting";
        Diagnostic d{Severity::Error, "obsolete", what + " of class '" + cls.name + "' is obsolete",
                     {}, sugg};
        if (ob->replacement) d.detail.push_back("replacement: " + repl);
        if (!options.allow_obsolete) {
            d.detail.push_back("obsolete items are rejected unless --allow_obsolete is given");
            throw Error(d);
        }
        d.severity = Severity::Warning;
        if (sink) sink->push_back(d);
    }
}

void Study::set(Description& desc, std::string_view attr, const ValueOrSeq& value, const Origin& origin) {
    const ClassDef& cls = desc.cls();
    if (const MacroAttribute* m = cls.macro(attr)) {
        const ValueSeq* seq = std::get_if<ValueSeq>(&value);
        if (!seq)
            throw Error("macro_value", "macro-attribute '" + m->name + "' takes a sequence of values", {},
                        "pass a list, e.g. set('" + m->name + "', [...])");
        auto it = m->versions.find(static_cast<int>(seq->size()));
        if (it == m->versions.end()) {
            std::string avail;
            for (const auto& [a, _] : m->versions) avail += (avail.empty() ? "" : ", ") + std::to_string(a);
            throw Error("macro_arity",
                        "no version of '" + m->name + "' takes " + std::to_string(seq->size()) + " values",
                        {"available arities: " + avail}, "give " + avail + " values");
        }
        // validate every atom before writing any
        std::vector<Value> checked = *seq;
        for (std::size_t i = 0; i < checked.size(); ++i)
            check_value(desc, *cls.attribute(it->second[i]), checked[i], origin, &notices);
        for (std::size_t i = 0; i < checked.size(); ++i) {
            if (checked[i].defined())
                desc.bind({it->second[i], checked[i], origin});
            else
                desc.unbind(it->second[i]);
        }
        return;
    }
    const AttributeDef* def = cls.attribute(attr);
    if (!def && cls.obsolete_entry(attr, nullptr)) {
        // removed attribute still listed as obsolete
        const ObsoleteEntry* ob = cls.obsolete_entry(attr, nullptr);
        Diagnostic d{Severity::Error, "obsolete",
                     "attribute '" + std::string(attr) + "' of class '" + cls.name + "' is obsolete", {},
                     ob->replacement ? "use '" + ob->replacement->as_str() + "' instead" : "remove the obsolete setting"};
        if (!options.allow_obsolete) {
            d.detail.push_back("obsolete items are rejected unless --allow_obsolete is given");
            throw Error(d);
        }
        d.severity = Severity::Warning;
        d.detail.push_back("the setting is ignored");
        notices.push_back(d);
        return;
    }
    if (!def) {
        auto names = cls.attribute_names();
        for (const auto& mac : cls.macros) names.push_back(mac.name);
        std::string near = nearest_name(attr, names);
        throw Error("unknown_attribute", "class '" + cls.name + "' has no attribute '" + std::string(attr) + "'", {},
                    near.empty() ? "see man('" + cls.name + "')" : "did you mean '" + near + "'?");
    }
    const Value* scalar = std::get_if<Value>(&value);
    if (!scalar)
        throw Error("kind_mismatch", "attribute '" + def->name + "' takes a single value", {}, set_skeleton(cls, *def));
    Value v = *scalar;
    check_value(desc, *def, v, origin, &notices);
    if (options.filter && cls.matches(cls.filterable, def->name, &v)) {
        notices.push_back({Severity::Warning, "filtered",
                           "setting of '" + def->name + "' on '" + desc.ident() + "' filtered out",
                           {"value: " + v.repr()}, "drop --filter to keep filterable settings"});
        return;
    }
    if (v.defined())
        desc.bind({def->name, v, origin});
    else
        desc.unbind(def->name);
}

Value Study::validated(const Description& desc, std::string_view attr, Value v) const {
    const AttributeDef* def = desc.cls().attribute(attr);
    if (!def) {
        std::string near = nearest_name(attr, desc.cls().attribute_names());
        throw Error("unknown_attribute", "class '" + desc.cls().name + "' has no attribute '" + std::string(attr) + "'",
                    {}, near.empty() ? "see man('" + desc.cls().name + "')" : "did you mean '" + near + "'?");
    }
    check_value(desc, *def, v, Origin::user(), nullptr);
    return v;
}

void Study::unset(Description& desc, std::string_view attr) { set(desc, attr, Value(), Origin::user()); }

ValueOrSeq Study::get(const Description& desc, std::string_view attr) const {
    const ClassDef& cls = desc.cls();
    if (const MacroAttribute* m = cls.macro(attr)) {
        const std::vector<std::string>* chosen = nullptr;
        for (auto it = m->versions.rbegin(); it != m->versions.rend(); ++it) {
            if (std::all_of(it->second.begin(), it->second.end(),
                            [&](const std::string& a) { return desc.binding(a) != nullptr; })) {
                chosen = &it->second;
                break;
            }
        }
        if (!chosen && m->versions.size() == 1) chosen = &m->versions.begin()->second;
        if (!chosen) return Value();
        ValueSeq out;
        for (const auto& a : *chosen) out.push_back(desc.value(a));
        return out;
    }
    if (!cls.attribute(attr)) {
        auto names = cls.attribute_names();
        std::string near = nearest_name(attr, names);
        throw Error("unknown_attribute", "class '" + cls.name + "' has no attribute '" + std::string(attr) + "'", {},
                    near.empty() ? "see man('" + cls.name + "')" : "did you mean '" + near + "'?");
    }
    return desc.value(attr);
}

void Study::attach(Description& desc, const std::vector<std::string>& others) {
    for (const auto& o : others)
        if (o == desc.ident())
            throw Error("self_attach", "description '" + o + "' cannot be attached to itself", {},
                        "attach other descriptions only");
    for (const auto& o : others) {
        if (find_script(o))
            throw Error("attach_script", "'" + o + "' is a script; only descriptions may be attached", {},
                        "attach the script's descriptions instead");
        desc.add_attachment(o);
    }
}

ContextRef Study::copy(const ContextRef& src, std::string_view ident, std::string_view in_script) {
    if (src.kind == ChildRef::Kind::Description) {
        const Description& from = description(src.ident);
        Description& to = create_description(from.cls().name, ident, in_script);
        to.bindings_ = from.bindings_;
        to.attachments_ = from.attachments_;
        return desc_ref(std::string(ident));
    }
    const Script& from = script(src.ident);
    // snapshot the children before creating new ones (src may be an ancestor)
    std::vector<ChildRef> children = from.children_;
    std::vector<PendingOp> pending = from.pending_;
    const std::string suffix = "@" + std::string(ident);
    // Every derived identifier must be free before anything is created.
    std::function<void(const Script&)> precheck = [&](const Script& s) {
        for (const auto& c : s.children_) {
            if (has_ident(c.ident + suffix)) register_ident(c.ident + suffix, "copy");
            if (c.kind == ChildRef::Kind::Script) precheck(script(c.ident));
        }
    };
    if (has_ident(ident)) register_ident(ident, "script");
    precheck(from);

    Script& to = create_script(ident, in_script);
    to.pending_ = pending;
    for (const auto& c : children) copy({c.kind, c.ident}, c.ident + suffix, to.ident());
    return script_ref(std::string(ident));
}

std::vector<const Description*> Study::closure(const ContextRef& ctx) const {
    std::vector<const Description*> out;
    std::set<std::string> seen;
    std::function<void(const Description&)> visit_desc = [&](const Description& d) {
        if (!seen.insert(d.ident()).second) return;
        out.push_back(&d);
        for (const auto& a : d.attachments()) {
            const Description* t = find_description(a);
            if (!t)
                throw Error("unresolved_attach", "description '" + d.ident() + "' is attached to unknown '" + a + "'",
                            {}, "create '" + a + "' or remove the attach() call");
            visit_desc(*t);
        }
    };
    std::function<void(const Script&)> visit_script = [&](const Script& s) {
        for (const auto& c : s.children())
            if (c.kind == ChildRef::Kind::Description)
                visit_desc(description(c.ident));
            else
                visit_script(script(c.ident));
    };
    if (ctx.kind == ChildRef::Kind::Description)
        visit_desc(description(ctx.ident));
    else
        visit_script(script(ctx.ident));
    return out;
}

void Study::view_into(const ContextRef& ctx, int indent, std::string& out) const {
    std::string pad(static_cast<std::size_t>(indent), ' ');
    if (ctx.kind == ChildRef::Kind::Script) {
        const Script& s = script(ctx.ident);
        out += pad + "script '" + s.ident() + "'\n";
        for (const auto& c : s.children()) view_into({c.kind, c.ident}, indent + 2, out);
        for (const auto& op : s.pending_ops()) {
            std::string name = op.kind == PendingOp::Kind::Compute ? "compute"
                               : op.kind == PendingOp::Kind::Extract ? "extract"
                                                                     : "set_boot_objt";
            out += pad + "  pending: " + (op.target.empty() || op.kind == PendingOp::Kind::SetBoot ? "" : op.target + ".") +
                   name + "(" + (op.kind == PendingOp::Kind::SetBoot ? op.target : "");
            for (std::size_t i = 0; i < op.args.size(); ++i) out += (i ? ", " : "") + to_notation(op.args[i]);
            out += ")\n";
        }
        return;
    }
    const Description& d = description(ctx.ident);
    const ClassDef& cls = d.cls();
    out += pad + cls.name + " '" + d.ident() + "'\n";
    std::string ipad = pad + "  ";
    auto masked = [&](const std::string& a) { return marks.non_coherent.count({d.ident(), a}) > 0; };
    auto missing = [&](const std::string& a) { return marks.missing.count({d.ident(), a}) > 0; };

    std::set<std::string> folded;
    for (const auto& m : cls.macros) {
        for (auto it = m.versions.rbegin(); it != m.versions.rend(); ++it) {
            const auto& atoms = it->second;
            bool all = std::all_of(atoms.begin(), atoms.end(), [&](const std::string& a) {
                return d.binding(a) != nullptr && !masked(a);
            });
            if (!all) continue;
            std::string line = ipad + m.name + " = [";
            for (std::size_t i = 0; i < atoms.size(); ++i) {
                line += (i ? ", " : "") + d.value(atoms[i]).repr();
                folded.insert(atoms[i]);
            }
            out += line + "]\n";
            break;
        }
    }
    for (const auto& a : cls.attributes) {
        if (folded.count(a.name)) continue;
        if (const Binding* b = d.binding(a.name)) {
            out += ipad + a.name + " = " + (masked(a.name) ? std::string("<masked: not coherent>") : b->value.repr()) + "\n";
        } else if (missing(a.name) || cls.is_required(a.name)) {
            if (missing(a.name) || !a.static_default()) out += ipad + a.name + " = <required, missing>\n";
        }
    }
    if (!d.attachments().empty()) {
        std::string line = ipad + "attached:";
        for (const auto& a : d.attachments()) line += " " + a;
        out += line + "\n";
    }
}

std::string Study::view(const ContextRef& ctx) const {
    std::string out;
    view_into(ctx, 0, out);
    return out;
}

bool structurally_equal(const Study& a, const ContextRef& ca, const Study& b, const ContextRef& cb) {
    if (ca.kind != cb.kind || ca.ident != cb.ident) return false;
    if (ca.kind == ChildRef::Kind::Description) {
        const Description& da = a.description(ca.ident);
        const Description& db = b.description(cb.ident);
        if (da.cls().name != db.cls().name || da.attachments() != db.attachments()) return false;
        auto own = [](const Description& d) {
            std::vector<Binding> out;
            for (const auto& bd : d.bindings())
                if (!bd.origin.derived()) out.push_back(bd);
            return out;
        };
        return own(da) == own(db);
    }
    const Script& sa = a.script(ca.ident);
    const Script& sb = b.script(cb.ident);
    if (sa.children() != sb.children() || sa.pending_ops() != sb.pending_ops()) return false;
    for (const auto& c : sa.children())
        if (!structurally_equal(a, {c.kind, c.ident}, b, {c.kind, c.ident})) return false;
    return true;
}

}  // namespace ctxdesc
