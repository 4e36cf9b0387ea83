#include "ctxdesc/docgen.hpp"

#include <algorithm>
#include <set>

namespace ctxdesc {

namespace {

struct Entry {
    const char* name;
    const char* doc;
};

// Script-level functions forward to the root script.
const Entry kFunctions[] = {
    {"check", "Check status of root script object"},
    {"view", "Facade for current script's method"},
    {"dump", "Facade for current script's method"},
    {"compute", "Run the boot description of the root script"},
    {"extract", "Run the extraction pass of the boot description"},
    {"load", "Load a script file as a nested script"},
    {"close", "Stop reading the current script file"},
    {"set_boot_objt", "Pass the compute token to a bootable description"},
    {"provide", "Return the description with this identifier, creating it if needed"},
    {"man", "Print this kind of documentation"},
    {"script", "Create an empty nested script"},
};

const Entry kMethods[] = {
    {"set", "Define the value of an attribute or macro-attribute"},
    {"set_interface", "Define a value on behalf of an interface component"},
    {"get", "Return the value of an attribute without defaults"},
    {"unset", "Remove the value of an attribute"},
    {"attach", "Reference other descriptions from this one"},
    {"copy", "Return a copy of the description"},
    {"view", "Filtering view for a description"},
    {"dump", "Write a script re-creating the description"},
    {"check", "Check status of the description and its attachments"},
    {"compute", "Run the compute procedure of a bootable description"},
    {"extract", "Run the extraction procedure of a bootable description"},
    {"show_origin", "Tell which component defined a value"},
};

const Entry* find_entry(std::span<const Entry> list, std::string_view name) {
    for (const auto& e : list)
        if (name == e.name) return &e;
    return nullptr;
}

std::string triple(std::string_view name, std::string_view type, std::string_view doc) {
    std::string out;
    out += "Name       : " + std::string(name) + "\n";
    out += "Type       : " + std::string(type) + "\n";
    out += "Description: " + std::string(doc) + "\n";
    return out;
}

/// Cuts a long line after its last list separator that fits, the way the
/// reference transcript does ("a & b &  ...").
std::string clip(const std::string& line) {
    if (line.size() <= kManWidth) return line;
    std::size_t best = std::string::npos;
    for (std::string_view sep : {" & ", " | ", ", "}) {
        for (std::size_t p = line.find(sep); p != std::string::npos; p = line.find(sep, p + 1)) {
            std::size_t end = p + sep.size();
            if (end + 4 <= kManWidth && (best == std::string::npos || end > best)) best = end;
        }
    }
    if (best == std::string::npos) return line.substr(0, kManWidth - 4) + " ...";
    return line.substr(0, best) + " ...";
}

std::string values_text(const AttributeDef& a) { return a.domain.describe(a.iface_kind); }

bool applies(const AttrPath& p, const std::vector<const ClassDef*>& group) {
    if (p.cls.empty()) return true;
    return std::any_of(group.begin(), group.end(), [&](const ClassDef* c) { return c->name == p.cls; });
}

std::string term_text(const RequirementTerm& t) {
    switch (t.kind) {
    case RequirementTerm::Kind::Plain: return t.paths.front().text();
    case RequirementTerm::Kind::Alternative: {
        std::string out = "one of (";
        for (std::size_t i = 0; i < t.paths.size(); ++i) out += (i ? " | " : "") + t.paths[i].text();
        return out + ")";
    }
    case RequirementTerm::Kind::Strong: return t.paths.front().text();
    }
    return {};
}

void attribute_body(const std::string& name, const std::vector<const ClassDef*>& group, const RuleSet& rules,
                    std::vector<std::string>& out) {
    const AttributeDef& a = *group.front()->attribute(name);
    std::string classes;
    for (const ClassDef* c : group) classes += (classes.empty() ? "" : ", ") + c->name;
    out.push_back("1) Attribute name: " + name);
    out.push_back("2) Class(es)     : " + classes);
    out.push_back("3) Description   : " + a.doc);
    out.push_back("4) Allowed values: " + values_text(a));

    std::vector<std::string> rl;
    std::vector<const DependencyRule*> deps;
    for (const auto& r : rules.deps)
        if (r.attr.attr == name && applies(r.attr, group)) deps.push_back(&r);
    if (!deps.empty()) {
        rl.push_back("  5a) dependency rules:");
        rl.push_back("    " + name + " is meaningful only IF:");
        for (const auto* r : deps) rl.push_back("      " + r->source.text() + " = " + join_patterns(r->allowed, " | "));
    }
    std::vector<const InfluenceRule*> infls;
    for (const auto& r : rules.infls)
        if (r.attr.attr == name && applies(r.attr, group)) infls.push_back(&r);
    if (!infls.empty()) {
        rl.push_back("  5b) influence rules:");
        for (const auto* r : infls) {
            rl.push_back("    " + name + " = " + r->trigger.repr() + " requires:");
            std::string plain;
            std::vector<std::string> strong;
            for (const auto& t : r->requires_) {
                if (t.kind == RequirementTerm::Kind::Strong)
                    strong.push_back("      " + t.paths.front().text() + " among " + join_patterns(t.allowed, " | "));
                plain += (plain.empty() ? "" : " & ") + term_text(t);
            }
            if (!plain.empty()) rl.push_back("      value(s) for " + plain);
            for (auto& s : strong) rl.push_back(std::move(s));
        }
    }
    std::vector<const ContextDefaultRule*> defs;
    for (const auto& r : rules.defaults)
        if (r.attr.attr == name && applies(r.attr, group)) defs.push_back(&r);
    if (!defs.empty()) {
        rl.push_back("  5c) context-dependent default values:");
        for (const auto* r : defs) {
            rl.push_back("    " + name + " = " + r->value.repr() + " IF:");
            for (const auto& [p, set] : r->conditions) rl.push_back("      " + p.text() + " = " + join_patterns(set, " | "));
        }
    }
    std::vector<std::string> required_in;
    for (const ClassDef* c : group)
        if (c->is_required(name) || rules.always_required_for(c->name, name)) required_in.push_back(c->name);
    if (!required_in.empty()) {
        rl.push_back("  5d) absolute rules:");
        if (required_in.size() == group.size()) {
            rl.push_back("    attribute value is always required");
        } else {
            std::string in;
            for (const auto& c : required_in) in += (in.empty() ? "" : ", ") + c;
            rl.push_back("    attribute value is always required in " + in);
        }
    }
    if (rl.empty()) {
        out.push_back("5) Rules         : none");
    } else {
        out.push_back("5) Rules         : ");
        for (auto& l : rl) out.push_back(std::move(l));
    }

    std::string deft = "none";
    for (const auto& d : a.defaults) {
        if (d.kind == DefaultSource::Kind::Static) {
            deft = d.value.repr();
            break;
        }
        if (d.kind == DefaultSource::Kind::Kernel) {
            auto v = a.domain.from_kernel(d.value);
            deft = (v ? *v : d.value).repr();
            break;
        }
    }
    out.push_back("6) Default value(s): " + deft);
    if (a.has_contextual_default()) {
        out.push_back("    context-dependent default values in");
        out.push_back("    '5c)', if any, are applied first");
    }
}

/// Classes sharing an attribute name, grouped by identical definitions.
std::vector<std::vector<const ClassDef*>> groups_for(const ClassRegistry& reg, std::string_view attr,
                                                     std::string_view only_class) {
    std::vector<std::vector<const ClassDef*>> groups;
    for (const auto& c : reg.classes()) {
        if (!only_class.empty() && c->name != only_class) continue;
        const AttributeDef* a = c->attribute(attr);
        if (!a) continue;
        bool placed = false;
        for (auto& g : groups) {
            if (*g.front()->attribute(attr) == *a) {
                g.push_back(c.get());
                placed = true;
                break;
            }
        }
        if (!placed) groups.push_back({c.get()});
    }
    return groups;
}

std::string attribute_page(const ClassRegistry& reg, const RuleSet& rules, std::string_view attr,
                           std::string_view only_class) {
    std::string out;
    for (const auto& g : groups_for(reg, attr, only_class)) {
        if (!out.empty()) out += "\n";
        std::vector<std::string> lines;
        attribute_body(std::string(attr), g, rules, lines);
        for (const auto& l : lines) out += clip(l) + "\n";
    }
    return out;
}

std::string class_page(const ClassDef& c) {
    std::string out = triple(c.name, "class", c.doc.empty() ? "description class" : c.doc);
    std::string attrs;
    for (const auto& a : c.attributes) attrs += (attrs.empty() ? "" : ", ") + a.name;
    out += "Attributes : " + (attrs.empty() ? std::string("none") : attrs) + "\n";
    for (const auto& m : c.macros) {
        std::string ar;
        for (const auto& [n, _] : m.versions) ar += (ar.empty() ? "" : ", ") + std::to_string(n);
        out += "Macro      : " + m.name + " (arity " + ar + ")\n";
    }
    if (c.bootable()) out += "Bootable   : yes (compute procedure " + c.entry + ")\n";
    return out;
}

}  // namespace

std::vector<std::string> man_topics(const ClassRegistry& registry) {
    std::set<std::string> seen;
    std::vector<std::string> out;
    auto add = [&](const std::string& s) {
        if (seen.insert(s).second) out.push_back(s);
    };
    for (const auto& f : kFunctions) add(f.name);
    for (const auto& c : registry.classes()) {
        add(c->name);
        for (const auto& a : c->attributes) add(a.name);
        for (const auto& m : kMethods) add(c->name + "." + m.name);
    }
    return out;
}

std::string man(const ClassRegistry& registry, const RuleSet& rules, std::string_view topic) {
    auto dot = topic.find('.');
    if (dot != std::string_view::npos) {
        std::string_view cls = topic.substr(0, dot);
        std::string_view member = topic.substr(dot + 1);
        if (const ClassDef* c = registry.find(cls)) {
            if (const Entry* m = find_entry(kMethods, member)) return triple(m->name, "instancemethod", m->doc);
            if (c->attribute(member)) return attribute_page(registry, rules, member, cls);
            if (const MacroAttribute* mac = c->macro(member)) {
                std::string out = triple(mac->name, "macro-attribute", "named list of attributes of class " + c->name);
                for (const auto& [n, atoms] : mac->versions) {
                    std::string list;
                    for (const auto& a : atoms) list += (list.empty() ? "" : ", ") + a;
                    out += "Version    : " + MacroAttribute::version_name(mac->name, n) + " = [" + list + "]\n";
                }
                return out;
            }
        }
    } else {
        if (const Entry* f = find_entry(kFunctions, topic)) return triple(f->name, "function", f->doc);
        if (const ClassDef* c = registry.find(topic)) return class_page(*c);
        std::string page = attribute_page(registry, rules, topic, {});
        if (!page.empty()) return page;
    }
    std::string near = nearest_name(topic, man_topics(registry));
    throw Error("unknown_topic", "no manual entry for '" + std::string(topic) + "'", {},
                near.empty() ? "try man('check') or man('<class>')" : "did you mean man('" + near + "')?");
}

// ---------------------------------------------------------------- manual

const ManualEntry* Manual::find(std::string_view cls, std::string_view attr) const {
    for (const auto& e : entries)
        if (e.cls == cls && e.attr == attr) return &e;
    return nullptr;
}

Manual parse_manual(std::string_view text) {
    Manual m;
    std::string cls;
    ManualEntry* cur = nullptr;
    int line_no = 0;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        std::string line(text.substr(start, end - start));
        start = end + 1;
        ++line_no;
        auto fail = [&](const std::string& what) {
            throw Error("manual_parse", "manual line " + std::to_string(line_no) + ": " + what, {line},
                        "sections are '= class', then '== attribute'");
        };
        if (line.rfind("== ", 0) == 0) {
            if (cls.empty()) fail("attribute entry outside a class section");
            m.entries.push_back({cls, line.substr(3), {}, std::nullopt, {}});
            cur = &m.entries.back();
        } else if (line.rfind("= ", 0) == 0) {
            cls = line.substr(2);
            cur = nullptr;
        } else if (line.rfind("description:", 0) == 0) {
            if (!cur) fail("field outside an attribute entry");
            cur->description = line.substr(line.find_first_not_of(' ', 12) == std::string::npos ? line.size()
                                                                                               : line.find_first_not_of(' ', 12));
        } else if (line.rfind("values:", 0) == 0) {
            if (!cur) fail("field outside an attribute entry");
            auto p = line.find_first_not_of(' ', 7);
            cur->values = p == std::string::npos ? std::string() : line.substr(p);
        } else if (!line.empty() && line[0] == '=') {
            fail("malformed section heading");
        } else if (cur) {
            cur->text.push_back(line);
        }
    }
    return m;
}

Manual read_manual(const std::string& path) { return parse_manual(read_text_file(path)); }

namespace {

bool documented(const ClassDef& c, const AttributeDef& a) { return !c.matches(c.undocumented, a.name, nullptr); }

}  // namespace

std::string gen_manual_skeleton(const ClassRegistry& registry, const RuleSet& rules, const Manual& manual) {
    std::string out;
    for (const auto& c : registry.classes()) {
        std::string section;
        for (const auto& a : c->attributes) {
            if (!documented(*c, a) || manual.find(c->name, a.name)) continue;
            section += "== " + a.name + "\n";
            section += "description: " + a.doc + "\n";
            section += "values: " + values_text(a) + "\n";
            std::vector<std::string> lines;
            attribute_body(a.name, {c.get()}, rules, lines);
            for (const auto& l : lines) section += "    " + l + "\n";
        }
        if (!section.empty()) out += "= " + c->name + "\n" + section;
    }
    return out;
}

CoherencyReport check_manual_coherency(const ClassRegistry& registry, const RuleSet& rules, const Manual& manual) {
    (void)rules;
    CoherencyReport r;
    for (const auto& c : registry.classes())
        for (const auto& a : c->attributes) {
            if (!documented(*c, a)) continue;
            const ManualEntry* e = manual.find(c->name, a.name);
            if (!e) {
                r.missing.push_back(c->name + "." + a.name);
            } else if (e->values && *e->values != values_text(a)) {
                r.mismatches.push_back({c->name + "." + a.name, *e->values, values_text(a)});
            }
        }
    std::set<std::string> seen;
    for (const auto& e : manual.entries) {
        std::string path = e.cls + "." + e.attr;
        if (!seen.insert(path).second) continue;
        const ClassDef* c = registry.find(e.cls);
        if (c && c->attribute(e.attr) && documented(*c, *c->attribute(e.attr))) continue;
        if (c && c->obsolete_entry(e.attr, nullptr)) continue;
        r.stale.push_back(path);
    }
    return r;
}

std::string CoherencyReport::text() const {
    std::string out;
    auto list = [&](const char* title, const std::vector<std::string>& items) {
        out += std::string(title) + " (" + std::to_string(items.size()) + ")\n";
        for (const auto& i : items) out += "  " + i + "\n";
    };
    list("(a) attributes missing from the manual", missing);
    list("(b) stale manual entries", stale);
    out += "(c) value mismatches (" + std::to_string(mismatches.size()) + ")\n";
    for (const auto& m : mismatches) out += "  " + m.path + ": manual " + m.manual + " / registry " + m.registry + "\n";
    return out;
}

std::string manual_markdown(const Manual& manual) {
    std::string out;
    std::string cls;
    for (const auto& e : manual.entries) {
        if (e.cls != cls) {
            cls = e.cls;
            out += "\n## Class `" + cls + "`\n";
        }
        out += "\n### `" + e.attr + "`\n\n";
        if (!e.description.empty()) out += e.description + "\n\n";
        if (e.values) out += "*Values:* " + *e.values + "\n\n";
        bool code = false;
        for (const auto& l : e.text) {
            bool indented = l.rfind("    ", 0) == 0;
            if (indented && !code) out += "```\n";
            if (!indented && code) out += "```\n";
            code = indented;
            out += (indented ? l.substr(4) : l) + "\n";
        }
        if (code) out += "```\n";
    }
    return out.empty() ? out : out.substr(1);
}

}  // namespace ctxdesc
