#include "ctxdesc/registry.hpp"

#include <algorithm>
#include <set>

#include "ctxdesc/diagnostics.hpp"

namespace ctxdesc {

namespace {

constexpr std::string_view kContextualDefault = "CNTX_DEFV";
constexpr std::string_view kKernelDefault = "KERNEL_DEFV";

[[noreturn]] void def_error(const std::string& code, const std::string& headline,
                            std::vector<std::string> detail = {}, std::string suggestion = {}) {
    throw Error(code, headline, std::move(detail),
                suggestion.empty() ? "fix the static definitions resource file" : std::move(suggestion));
}

std::string where(const Node& n) {
    return "at line " + std::to_string(n.pos.line) + ", column " + std::to_string(n.pos.column);
}

ValueKind parse_kind_tag(const Node& n) {
    const std::string& t = n.as_str();
    if (t == "S") return ValueKind::Str;
    if (t == "I") return ValueKind::Int;
    if (t == "F") return ValueKind::Float;
    def_error("bad_type", "unknown type tag '" + t + "'", {where(n)}, "use one of 'S', 'I', 'F'");
}

char kind_tag(ValueKind k) { return k == ValueKind::Str ? 'S' : (k == ValueKind::Int ? 'I' : 'F'); }

/// Int literals are accepted where floats are expected.
std::optional<Value> coerce(const Value& v, ValueKind kind) {
    if (!v.defined()) return v;
    switch (kind) {
    case ValueKind::Float:
        if (v.is_number()) return Value(v.number());
        return std::nullopt;
    case ValueKind::Int:
        if (v.is_int()) return v;
        return std::nullopt;
    case ValueKind::Str:
        if (v.is_str()) return v;
        return std::nullopt;
    }
    return std::nullopt;
}

Value coerce_or_fail(const Node& n, ValueKind kind, const std::string& attr) {
    auto v = coerce(n.to_value(), kind);
    if (!v)
        def_error("bad_value", "value " + to_notation(n) + " of attribute '" + attr + "' is not a " +
                                   std::string(kind_name(kind)),
                  {where(n)});
    return *v;
}

void add_checker(DomainSpec& d, const Node& sym, const std::string& attr) {
    const std::string& name = sym.as_str();
    if (!CheckerRegistry::builtin().find(name)) {
        auto names = CheckerRegistry::builtin().names();
        std::string near = nearest_name(name, names);
        def_error("unknown_checker", "unknown checker '" + name + "' for attribute '" + attr + "'", {where(sym)},
                  near.empty() ? "use a registered checker" : "did you mean '" + near + "'?");
    }
    d.checkers.push_back(name);
}

void add_conversion(DomainSpec& d, const Node& map, ValueKind iface, ValueKind kernel, const std::string& attr) {
    for (std::size_t i = 0; i < map.keys().size(); ++i) {
        Value from = coerce_or_fail(map.keys()[i], iface, attr);
        Value to = coerce_or_fail(map.value_at(i), kernel, attr);
        for (const auto& [f, _] : d.conversion)
            if (f == from) def_error("bad_domain", "duplicate conversion entry " + from.repr() + " in '" + attr + "'");
        d.conversion.emplace_back(from, to);
        d.allowed.push_back(from);
    }
}

DomainSpec parse_domain(const Node& n, ValueKind iface, ValueKind kernel, const std::string& attr) {
    DomainSpec d;
    if (n.is_none()) {
    } else if (n.is_symbol()) {
        add_checker(d, n, attr);
    } else if (n.is_map()) {
        add_conversion(d, n, iface, kernel, attr);
    } else if (n.is_list()) {
        for (const Node& item : n.items()) {
            if (item.is_symbol())
                add_checker(d, item, attr);
            else if (item.is_map())
                add_conversion(d, item, iface, kernel, attr);
            else if (item.is_scalar() && !item.is_none())
                d.allowed.push_back(coerce_or_fail(item, iface, attr));
            else
                def_error("bad_domain", "malformed domain item " + to_notation(item) + " in '" + attr + "'",
                          {where(item)});
        }
    } else {
        def_error("bad_domain", "malformed domain " + to_notation(n) + " in '" + attr + "'", {where(n)});
    }
    if (iface != kernel && d.conversion.empty())
        def_error("bad_domain", "attribute '" + attr + "' changes kind between interface and kernel",
                  {where(n)}, "give a conversion map {interface value: kernel code}");
    return d;
}

DefaultSource parse_default_item(const Node& n, const AttributeDef& def) {
    DefaultSource s;
    if (n.is_none()) {
        s.kind = DefaultSource::Kind::None;
    } else if (n.is_symbol()) {
        if (n.as_str() != kContextualDefault)
            def_error("bad_default", "unknown default marker '" + n.as_str() + "' in '" + def.name + "'",
                      {where(n)}, "use CNTX_DEFV, [KERNEL_DEFV, <code>], a value, or None");
        s.kind = DefaultSource::Kind::Contextual;
    } else if (n.is_list()) {
        if (n.size() != 2 || !n[0].is_symbol() || n[0].as_str() != kKernelDefault)
            def_error("bad_default", "malformed kernel default in '" + def.name + "'", {where(n)},
                      "write kernel defaults as [KERNEL_DEFV, <code>]");
        s.kind = DefaultSource::Kind::Kernel;
        s.value = coerce_or_fail(n[1], def.kernel_kind, def.name);
        if (!def.domain.conversion.empty() && !def.domain.from_kernel(s.value))
            def_error("bad_default", "kernel default " + s.value.repr() + " of '" + def.name +
                                         "' has no interface value", {where(n)});
    } else if (n.is_scalar()) {
        s.kind = DefaultSource::Kind::Static;
        s.value = coerce_or_fail(n, def.iface_kind, def.name);
        if (!def.domain.accepts(s.value))
            def_error("bad_default", "static default " + s.value.repr() + " of '" + def.name +
                                         "' is outside its domain", {where(n)});
    } else {
        def_error("bad_default", "malformed default in '" + def.name + "'", {where(n)});
    }
    return s;
}

std::vector<DefaultSource> parse_defaults(const Node& n, const AttributeDef& def) {
    std::vector<DefaultSource> out;
    if (n.is_list() && !(n.size() == 2 && n[0].is_symbol() && n[0].as_str() == kKernelDefault)) {
        for (const Node& item : n.items()) out.push_back(parse_default_item(item, def));
    } else {
        out.push_back(parse_default_item(n, def));
    }
    if (out.empty()) def_error("bad_default", "empty default list for '" + def.name + "'", {where(n)}, "use None");
    for (std::size_t i = 0; i + 1 < out.size(); ++i)
        if (out[i].kind == DefaultSource::Kind::None)
            def_error("bad_default", "None must be the last default of '" + def.name + "'", {where(n)});
    return out;
}

std::vector<AttrValueRef> parse_refs(const Node& n) {
    std::vector<AttrValueRef> out;
    if (n.is_list()) {
        for (const Node& item : n.items()) out.push_back({item.as_str(), std::nullopt});
    } else if (n.is_map()) {
        for (std::size_t i = 0; i < n.keys().size(); ++i) {
            const std::string& attr = n.keys()[i].as_str();
            const Node& v = n.value_at(i);
            if (v.is_none()) {
                out.push_back({attr, std::nullopt});
            } else {
                for (const Node& val : v.items()) out.push_back({attr, val.to_value()});
            }
        }
    } else {
        def_error("bad_metadata", "expected a list or map of attributes, got " + to_notation(n), {where(n)});
    }
    return out;
}

Node refs_node(const std::vector<AttrValueRef>& refs) {
    Node m = Node::map();
    for (const auto& r : refs) {
        const Node* existing = m.find(r.attr);
        if (!r.value) {
            m.set(r.attr, Node::none());
        } else {
            Node vals = existing && existing->is_list() ? *existing : Node::list();
            vals.push_back(Node::from_value(*r.value));
            m.set(r.attr, vals);
        }
    }
    return m;
}

std::vector<ObsoleteEntry> parse_obsolete(const Node& n) {
    std::vector<ObsoleteEntry> out;
    if (!n.is_map()) def_error("bad_metadata", "obsolete must be a map", {where(n)});
    for (std::size_t i = 0; i < n.keys().size(); ++i) {
        const std::string& attr = n.keys()[i].as_str();
        const Node& v = n.value_at(i);
        if (v.is_map()) {
            for (std::size_t j = 0; j < v.keys().size(); ++j) {
                ObsoleteEntry e{{attr, v.keys()[j].to_value()}, std::nullopt};
                if (!v.value_at(j).is_none()) e.replacement = v.value_at(j).to_value();
                out.push_back(e);
            }
        } else {
            ObsoleteEntry e{{attr, std::nullopt}, std::nullopt};
            if (!v.is_none()) e.replacement = Value(v.as_str());
            out.push_back(e);
        }
    }
    return out;
}

void validate_members(const ClassDef& c) {
    for (const auto& m : c.macros) {
        for (const auto& [arity, atoms] : m.versions) {
            if (static_cast<int>(atoms.size()) != arity)
                def_error("bad_macro", "version " + MacroAttribute::version_name(m.name, arity) + " of class '" +
                                           c.name + "' lists " + std::to_string(atoms.size()) + " atoms");
            for (const auto& a : atoms)
                if (!c.attribute(a))
                    def_error("macro_member", "macro '" + m.name + "' of class '" + c.name +
                                                  "' names undeclared attribute '" + a + "'",
                              {}, "declare '" + a + "' in class '" + c.name + "' or fix the macro");
        }
        if (c.attribute(m.name))
            def_error("bad_macro", "macro '" + m.name + "' collides with an attribute of class '" + c.name + "'");
    }
    for (const auto& r : c.required)
        if (!c.attribute(r))
            def_error("bad_metadata", "required attribute '" + r + "' is not declared in class '" + c.name + "'");
}

}  // namespace

// ---------------------------------------------------------------- checkers

const CheckerRegistry& CheckerRegistry::builtin() {
    static const CheckerRegistry reg = [] {
        CheckerRegistry r;
        auto num = [](const Value& v) { return v.is_number(); };
        r.add({"strictly_positive", "strictly positive", [num](const Value& v) { return num(v) && v.number() > 0.0; }});
        r.add({"positive", "positive or zero", [num](const Value& v) { return num(v) && v.number() >= 0.0; }});
        r.add({"nonzero", "non-zero", [num](const Value& v) { return num(v) && v.number() != 0.0; }});
        r.add({"unit_interval", "within [0, 1]",
               [num](const Value& v) { return num(v) && v.number() >= 0.0 && v.number() <= 1.0; }});
        r.add({"non_empty", "non-empty", [](const Value& v) { return v.is_str() && !v.as_str().empty(); }});
        r.add({"file_path", "file path", [](const Value& v) { return v.is_str() && !v.as_str().empty(); }});
        return r;
    }();
    return reg;
}

const CheckerRegistry::Checker* CheckerRegistry::find(std::string_view name) const {
    for (const auto& c : checkers_)
        if (c.name == name) return &c;
    return nullptr;
}

std::vector<std::string> CheckerRegistry::names() const {
    std::vector<std::string> out;
    for (const auto& c : checkers_) out.push_back(c.name);
    return out;
}

void CheckerRegistry::add(Checker c) { checkers_.push_back(std::move(c)); }

// ---------------------------------------------------------------- domain

bool DomainSpec::accepts(const Value& v) const {
    if (!v.defined()) return true;
    if (enumerated() &&
        std::none_of(allowed.begin(), allowed.end(), [&](const Value& a) { return loosely_equal(a, v); }))
        return false;
    for (const auto& name : checkers) {
        const auto* c = CheckerRegistry::builtin().find(name);
        if (c && !c->accepts(v)) return false;
    }
    return true;
}

std::optional<Value> DomainSpec::to_kernel(const Value& v) const {
    if (conversion.empty()) return v;
    for (const auto& [from, to] : conversion)
        if (loosely_equal(from, v)) return to;
    return std::nullopt;
}

std::optional<Value> DomainSpec::from_kernel(const Value& code) const {
    if (conversion.empty()) return code;
    for (const auto& [from, to] : conversion)
        if (loosely_equal(to, code)) return from;
    return std::nullopt;
}

std::string DomainSpec::describe(ValueKind kind) const {
    std::string out;
    if (enumerated()) {
        for (std::size_t i = 0; i < allowed.size(); ++i) {
            if (i) out += ", ";
            out += allowed[i].repr();
        }
    }
    std::string checks;
    for (const auto& name : checkers) {
        const auto* c = CheckerRegistry::builtin().find(name);
        if (!checks.empty()) checks += ", ";
        checks += c ? c->description : name;
    }
    if (!checks.empty()) {
        if (!out.empty()) out += " (";
        out += checks;
        if (enumerated())
            out += ")";
        else
            out += " " + std::string(kind_placeholder(kind));
    }
    if (out.empty()) out = "any " + std::string(kind_placeholder(kind));
    return out;
}

// ---------------------------------------------------------------- defs

std::optional<Value> AttributeDef::static_default() const {
    for (const auto& d : defaults) {
        if (d.kind == DefaultSource::Kind::Static) return d.value;
        if (d.kind == DefaultSource::Kind::Kernel) return domain.from_kernel(d.value);
    }
    return std::nullopt;
}

bool AttributeDef::has_contextual_default() const {
    return std::any_of(defaults.begin(), defaults.end(),
                       [](const DefaultSource& d) { return d.kind == DefaultSource::Kind::Contextual; });
}

std::string MacroAttribute::version_name(const std::string& name, int arity) {
    std::string n = std::to_string(arity);
    if (n.size() < 2) n.insert(0, 2 - n.size(), '0');
    return name + "*" + n;
}

const AttributeDef* ClassDef::attribute(std::string_view n) const {
    for (const auto& a : attributes)
        if (a.name == n) return &a;
    return nullptr;
}

const MacroAttribute* ClassDef::macro(std::string_view n) const {
    for (const auto& m : macros)
        if (m.name == n) return &m;
    return nullptr;
}

bool ClassDef::is_required(std::string_view attr) const {
    return std::find(required.begin(), required.end(), attr) != required.end();
}

const ObsoleteEntry* ClassDef::obsolete_entry(std::string_view attr, const Value* value) const {
    for (const auto& e : obsolete) {
        if (e.item.attr != attr) continue;
        if (!e.item.value) return &e;
        if (value && loosely_equal(*e.item.value, *value)) return &e;
    }
    return nullptr;
}

bool ClassDef::matches(const std::vector<AttrValueRef>& list, std::string_view attr, const Value* value) const {
    return std::any_of(list.begin(), list.end(), [&](const AttrValueRef& r) {
        return r.attr == attr && (!r.value || (value && loosely_equal(*r.value, *value)));
    });
}

std::vector<std::string> ClassDef::attribute_names() const {
    std::vector<std::string> out;
    for (const auto& a : attributes) out.push_back(a.name);
    return out;
}

AttributeDef parse_attribute_entry(const std::string& name, const Node& entry) {
    if (!entry.is_list() || entry.size() < 4 || entry.size() > 5)
        def_error("bad_entry", "attribute '" + name + "' needs [doc, type, domain, defaults(, restriction)]",
                  {where(entry)});
    AttributeDef def;
    def.name = name;
    def.doc = entry[0].as_str();
    const Node& type = entry[1];
    if (type.is_list()) {
        if (type.size() != 2) def_error("bad_type", "type of '" + name + "' must be a tag or a pair", {where(type)});
        def.iface_kind = parse_kind_tag(type[0]);
        def.kernel_kind = parse_kind_tag(type[1]);
    } else {
        def.iface_kind = def.kernel_kind = parse_kind_tag(type);
    }
    def.domain = parse_domain(entry[2], def.iface_kind, def.kernel_kind, name);
    def.defaults = parse_defaults(entry[3], def);
    if (entry.size() == 5) {
        const std::string& r = entry[4].as_str();
        if (r == "interface_only")
            def.restriction = Restriction::InterfaceOnly;
        else if (r != "user")
            def_error("bad_entry", "unknown restriction '" + r + "' for '" + name + "'", {where(entry[4])},
                      "use 'user' or 'interface_only'");
    }
    return def;
}

Node attribute_entry(const AttributeDef& def) {
    Node e = Node::list();
    e.push_back(Node::str(def.doc));
    if (def.iface_kind == def.kernel_kind)
        e.push_back(Node::str(std::string(1, kind_tag(def.iface_kind))));
    else
        e.push_back(Node::list({Node::str(std::string(1, kind_tag(def.iface_kind))),
                                Node::str(std::string(1, kind_tag(def.kernel_kind)))}));

    Node domain;
    const DomainSpec& d = def.domain;
    if (!d.conversion.empty()) {
        Node conv = Node::map();
        for (const auto& [from, to] : d.conversion) conv.set(Node::from_value(from), Node::from_value(to));
        if (d.checkers.empty()) {
            domain = conv;
        } else {
            domain = Node::list({conv});
            for (const auto& c : d.checkers) domain.push_back(Node::symbol(c));
        }
    } else if (!d.allowed.empty() || d.checkers.size() > 1) {
        domain = Node::list();
        for (const auto& v : d.allowed) domain.push_back(Node::from_value(v));
        for (const auto& c : d.checkers) domain.push_back(Node::symbol(c));
    } else if (d.checkers.size() == 1) {
        domain = Node::symbol(d.checkers[0]);
    }
    e.push_back(domain);

    Node defaults = Node::list();
    for (const auto& s : def.defaults) {
        switch (s.kind) {
        case DefaultSource::Kind::None: defaults.push_back(Node::none()); break;
        case DefaultSource::Kind::Contextual: defaults.push_back(Node::symbol(std::string(kContextualDefault))); break;
        case DefaultSource::Kind::Static: defaults.push_back(Node::from_value(s.value)); break;
        case DefaultSource::Kind::Kernel:
            defaults.push_back(Node::list({Node::symbol(std::string(kKernelDefault)), Node::from_value(s.value)}));
            break;
        }
    }
    e.push_back(defaults);
    if (def.restriction == Restriction::InterfaceOnly) e.push_back(Node::str("interface_only"));
    return e;
}

// ---------------------------------------------------------------- registry

const ClassDef* ClassRegistry::find(std::string_view name) const {
    for (const auto& c : classes_)
        if (c->name == name) return c.get();
    return nullptr;
}

const ClassDef& ClassRegistry::at(std::string_view name) const {
    if (const ClassDef* c = find(name)) return *c;
    auto names = class_names();
    std::string near = nearest_name(name, names);
    throw Error("unknown_class", "unknown description class '" + std::string(name) + "'", {},
                near.empty() ? "see man() for the list of classes" : "did you mean '" + near + "'?");
}

std::vector<std::string> ClassRegistry::class_names() const {
    std::vector<std::string> out;
    for (const auto& c : classes_) out.push_back(c->name);
    return out;
}

void ClassRegistry::add(ClassDef def) {
    if (finalized_) throw Error("finalized", "class registry is finalized", {}, "merge classes instead");
    if (find(def.name))
        def_error("duplicate_class", "class '" + def.name + "' is defined twice");
    classes_.push_back(std::make_shared<const ClassDef>(std::move(def)));
}

bool operator==(const ClassRegistry& a, const ClassRegistry& b) {
    if (a.finalized_ != b.finalized_ || a.classes_.size() != b.classes_.size()) return false;
    for (std::size_t i = 0; i < a.classes_.size(); ++i)
        if (!(*a.classes_[i] == *b.classes_[i])) return false;
    return true;
}

ClassRegistry load_static_defs(const Node& doc) {
    if (!doc.is_map()) def_error("bad_document", "static definitions must be a map");
    ClassRegistry reg;
    const Node* defs = doc.find("static_defs");
    const Node* meta = doc.find("metadata");
    for (std::size_t i = 0; i < doc.keys().size(); ++i) {
        const std::string& k = doc.keys()[i].as_str();
        if (k != "static_defs" && k != "metadata")
            def_error("bad_document", "unknown section '" + k + "'", {where(doc.keys()[i])},
                      "use the 'static_defs' and 'metadata' sections");
    }

    std::vector<ClassDef> classes;
    auto find_class = [&](const std::string& n) -> ClassDef* {
        for (auto& c : classes)
            if (c.name == n) return &c;
        return nullptr;
    };

    if (defs) {
        for (std::size_t i = 0; i < defs->keys().size(); ++i) {
            ClassDef c;
            c.name = defs->keys()[i].as_str();
            if (find_class(c.name)) def_error("duplicate_class", "class '" + c.name + "' is defined twice");
            const Node& attrs = defs->value_at(i);
            if (!attrs.is_map()) def_error("bad_document", "class '" + c.name + "' must map attributes to entries");
            for (std::size_t j = 0; j < attrs.keys().size(); ++j) {
                const std::string& an = attrs.keys()[j].as_str();
                if (c.attribute(an))
                    def_error("duplicate_attribute", "attribute '" + an + "' is defined twice in class '" + c.name + "'",
                              {where(attrs.keys()[j])}, "remove one of the definitions");
                c.attributes.push_back(parse_attribute_entry(an, attrs.value_at(j)));
            }
            classes.push_back(std::move(c));
        }
    }

    if (meta) {
        for (std::size_t i = 0; i < meta->keys().size(); ++i) {
            const std::string& cn = meta->keys()[i].as_str();
            const Node& m = meta->value_at(i);
            ClassDef* c = find_class(cn);
            if (!c) {
                if (!m.find("inherits"))
                    def_error("unknown_class", "metadata for undeclared class '" + cn + "'", {where(meta->keys()[i])});
                classes.push_back(ClassDef{});
                c = &classes.back();
                c->name = cn;
            }
            for (std::size_t j = 0; j < m.keys().size(); ++j) {
                const std::string& key = m.keys()[j].as_str();
                const Node& v = m.value_at(j);
                if (key == "doc") {
                    c->doc = v.as_str();
                } else if (key == "required") {
                    for (const Node& r : v.items()) c->required.push_back(r.as_str());
                } else if (key == "macros") {
                    for (std::size_t k = 0; k < v.keys().size(); ++k) {
                        MacroAttribute mac;
                        mac.name = v.keys()[k].as_str();
                        const Node& versions = v.value_at(k);
                        if (versions.is_list()) {
                            std::vector<std::string> atoms;
                            for (const Node& a : versions.items()) atoms.push_back(a.as_str());
                            mac.versions[static_cast<int>(atoms.size())] = atoms;
                        } else {
                            for (std::size_t q = 0; q < versions.keys().size(); ++q) {
                                std::vector<std::string> atoms;
                                for (const Node& a : versions.value_at(q).items()) atoms.push_back(a.as_str());
                                mac.versions[static_cast<int>(versions.keys()[q].as_int())] = atoms;
                            }
                        }
                        c->macros.push_back(std::move(mac));
                    }
                } else if (key == "obsolete") {
                    c->obsolete = parse_obsolete(v);
                } else if (key == "filterable") {
                    c->filterable = parse_refs(v);
                } else if (key == "undocumented") {
                    c->undocumented = parse_refs(v);
                } else if (key == "inherits") {
                    if (v.is_list()) {
                        c->parent = v[0].as_str();
                        if (v.size() > 1) c->overlay = v[1];
                    } else {
                        c->parent = v.as_str();
                    }
                } else if (key == "entry") {
                    c->entry = v.as_str();
                } else {
                    def_error("bad_metadata", "unknown metadata key '" + key + "' for class '" + cn + "'",
                              {where(m.keys()[j])});
                }
            }
        }
    }

    for (auto& c : classes) {
        if (!c.parent) validate_members(c);
        reg.add(std::move(c));
    }
    return reg;
}

ClassRegistry load_static_defs_file(const std::string& path) {
    return load_static_defs(parse_notation(read_text_file(path)));
}

namespace {

ClassDef materialize(const ClassDef& child, const ClassDef& parent) {
    ClassDef out = parent;
    out.name = child.name;
    out.parent.reset();
    out.overlay = Node::map();
    if (!child.doc.empty()) out.doc = child.doc;
    if (!child.entry.empty()) out.entry = child.entry;

    const Node& ov = child.overlay;
    for (std::size_t i = 0; i < ov.keys().size(); ++i) {
        const std::string& an = ov.keys()[i].as_str();
        auto it = std::find_if(out.attributes.begin(), out.attributes.end(),
                               [&](const AttributeDef& a) { return a.name == an; });
        if (it == out.attributes.end())
            def_error("overlay_unknown", "class '" + child.name + "' overlays attribute '" + an +
                                             "' unknown to parent '" + parent.name + "'");
        const Node& e = ov.value_at(i);
        if (e.is_list()) {
            *it = parse_attribute_entry(an, e);
        } else {
            Node full = attribute_entry(*it);
            std::vector<Node> slots = full.items();
            if (slots.size() == 4) slots.push_back(Node::str("user"));
            static const char* fields[] = {"doc", "type", "domain", "defaults", "restriction"};
            for (std::size_t k = 0; k < e.keys().size(); ++k) {
                const std::string& f = e.keys()[k].as_str();
                auto fi = std::find(std::begin(fields), std::end(fields), f);
                if (fi == std::end(fields))
                    def_error("bad_metadata", "unknown overlay field '" + f + "' for '" + an + "'");
                slots[static_cast<std::size_t>(fi - std::begin(fields))] = e.value_at(k);
            }
            *it = parse_attribute_entry(an, Node::list(slots));
        }
    }
    for (const auto& a : child.attributes) {
        auto it = std::find_if(out.attributes.begin(), out.attributes.end(),
                               [&](const AttributeDef& x) { return x.name == a.name; });
        if (it != out.attributes.end())
            *it = a;
        else
            out.attributes.push_back(a);
    }
    for (const auto& m : child.macros) {
        auto it = std::find_if(out.macros.begin(), out.macros.end(),
                               [&](const MacroAttribute& x) { return x.name == m.name; });
        if (it != out.macros.end())
            *it = m;
        else
            out.macros.push_back(m);
    }
    for (const auto& r : child.required)
        if (!out.is_required(r)) out.required.push_back(r);
    out.obsolete.insert(out.obsolete.end(), child.obsolete.begin(), child.obsolete.end());
    out.filterable.insert(out.filterable.end(), child.filterable.begin(), child.filterable.end());
    out.undocumented.insert(out.undocumented.end(), child.undocumented.begin(), child.undocumented.end());
    return out;
}

}  // namespace

ClassRegistry finalize(ClassRegistry registry) {
    if (registry.finalized_) return registry;

    std::map<std::string, ClassDef> done;
    std::vector<std::string> stack;

    std::function<const ClassDef&(const ClassDef&)> resolve = [&](const ClassDef& c) -> const ClassDef& {
        if (auto it = done.find(c.name); it != done.end()) return it->second;
        if (std::find(stack.begin(), stack.end(), c.name) != stack.end()) {
            std::string cycle;
            auto b = std::find(stack.begin(), stack.end(), c.name);
            for (auto it = b; it != stack.end(); ++it) cycle += *it + "->";
            def_error("inheritance_cycle", "inheritance cycle " + cycle + c.name, {},
                      "remove one 'inherits' entry of the cycle");
        }
        ClassDef out;
        if (c.parent) {
            const ClassDef* p = registry.find(*c.parent);
            if (!p)
                def_error("unknown_class", "class '" + c.name + "' inherits unknown class '" + *c.parent + "'");
            stack.push_back(c.name);
            const ClassDef& pf = resolve(*p);
            stack.pop_back();
            out = materialize(c, pf);
        } else {
            out = c;
        }
        validate_members(out);
        return done.emplace(c.name, std::move(out)).first->second;
    };

    ClassRegistry result;
    for (const auto& c : registry.classes_) {
        resolve(*c);
    }
    for (const auto& c : registry.classes_) result.classes_.push_back(std::make_shared<const ClassDef>(done.at(c->name)));
    result.finalized_ = true;
    return result;
}

ClassRegistry merge_classes(const ClassRegistry& base, ClassRegistry extra) {
    ClassRegistry combined;
    for (const auto& c : base.classes()) combined.add(*c);
    for (const auto& c : extra.classes()) {
        if (combined.find(c->name))
            throw Error("class_collision", "class '" + c->name + "' is already registered", {},
                        "rename the class in the product manifest");
        combined.add(*c);
    }
    return finalize(std::move(combined));
}

std::vector<std::string> expand_macro(const ClassRegistry& registry, std::string_view cls, std::string_view macro,
                                      std::optional<int> arity) {
    const ClassDef& c = registry.at(cls);
    const MacroAttribute* m = c.macro(macro);
    if (!m)
        throw Error("unknown_macro", "class '" + c.name + "' has no macro-attribute '" + std::string(macro) + "'", {},
                    "see man('" + c.name + "')");
    if (!arity) {
        if (m->versions.size() == 1) return m->versions.begin()->second;
        throw Error("ambiguous_macro", "macro '" + m->name + "' has several versions", {},
                    "give the number of values");
    }
    auto it = m->versions.find(*arity);
    if (it == m->versions.end()) {
        std::string avail;
        for (const auto& [a, _] : m->versions) avail += (avail.empty() ? "" : ", ") + std::to_string(a);
        throw Error("macro_arity", "macro '" + m->name + "' has no version with " + std::to_string(*arity) + " values",
                    {"available arities: " + avail}, "give " + avail + " values");
    }
    return it->second;
}

Node to_resource(const ClassRegistry& registry) {
    Node defs = Node::map();
    Node meta = Node::map();
    for (const auto& cp : registry.classes()) {
        const ClassDef& c = *cp;
        Node attrs = Node::map();
        for (const auto& a : c.attributes) attrs.set(a.name, attribute_entry(a));
        defs.set(c.name, attrs);

        Node m = Node::map();
        if (!c.doc.empty()) m.set("doc", Node::str(c.doc));
        if (!c.required.empty()) {
            Node r = Node::list();
            for (const auto& n : c.required) r.push_back(Node::str(n));
            m.set("required", r);
        }
        if (!c.macros.empty()) {
            Node macs = Node::map();
            for (const auto& mac : c.macros) {
                Node versions = Node::map();
                for (const auto& [arity, atoms] : mac.versions) {
                    Node l = Node::list();
                    for (const auto& a : atoms) l.push_back(Node::str(a));
                    versions.set(Node::integer(arity), l);
                }
                macs.set(mac.name, versions);
            }
            m.set("macros", macs);
        }
        if (!c.obsolete.empty()) {
            Node ob = Node::map();
            for (const auto& e : c.obsolete) {
                Node repl = e.replacement ? Node::from_value(*e.replacement) : Node::none();
                if (!e.item.value) {
                    ob.set(e.item.attr, repl);
                } else {
                    const Node* existing = ob.find(e.item.attr);
                    Node vals = existing && existing->is_map() ? *existing : Node::map();
                    vals.set(Node::from_value(*e.item.value), repl);
                    ob.set(e.item.attr, vals);
                }
            }
            m.set("obsolete", ob);
        }
        if (!c.filterable.empty()) m.set("filterable", refs_node(c.filterable));
        if (!c.undocumented.empty()) m.set("undocumented", refs_node(c.undocumented));
        if (!c.entry.empty()) m.set("entry", Node::str(c.entry));
        if (!m.keys().empty()) meta.set(c.name, m);
    }
    Node doc = Node::map();
    doc.set("static_defs", defs);
    doc.set("metadata", meta);
    return doc;
}

}  // namespace ctxdesc
