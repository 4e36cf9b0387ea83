#pragma once

// Static attribute definitions: per-class attribute grammar, macro-attributes
// and class metadata, finalized into immutable per-class singletons.

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ctxdesc/notation.hpp"
#include "ctxdesc/value.hpp"

namespace ctxdesc {

/// Named value predicates usable as attribute domain checkers.
class CheckerRegistry {
public:
    struct Checker {
        std::string name;
        std::string description;  // e.g. "strictly positive"
        std::function<bool(const Value&)> accepts;
    };

    static const CheckerRegistry& builtin();

    const Checker* find(std::string_view name) const;
    std::vector<std::string> names() const;
    void add(Checker c);

private:
    std::vector<Checker> checkers_;
};

struct DomainSpec {
    std::vector<Value> allowed;                         // empty: any value of the kind
    std::vector<std::pair<Value, Value>> conversion;    // interface value -> kernel code
    std::vector<std::string> checkers;

    bool enumerated() const { return !allowed.empty(); }
    bool accepts(const Value& v) const;
    std::optional<Value> to_kernel(const Value& v) const;
    std::optional<Value> from_kernel(const Value& code) const;
    /// "'euler', 'nslam', 'nstur'" or "strictly positive <float>" style text.
    std::string describe(ValueKind kind) const;

    friend bool operator==(const DomainSpec&, const DomainSpec&) = default;
};

struct DefaultSource {
    enum class Kind { Static, Kernel, Contextual, None };
    Kind kind = Kind::None;
    Value value;  // static value, or kernel code for Kind::Kernel

    friend bool operator==(const DefaultSource&, const DefaultSource&) = default;
};

enum class Restriction { UserSettable, InterfaceOnly };

struct AttributeDef {
    std::string name;
    std::string doc;
    ValueKind iface_kind = ValueKind::Str;
    ValueKind kernel_kind = ValueKind::Str;
    DomainSpec domain;
    std::vector<DefaultSource> defaults;
    Restriction restriction = Restriction::UserSettable;

    /// First static or kernel default, converted to an interface value.
    std::optional<Value> static_default() const;
    bool has_contextual_default() const;

    friend bool operator==(const AttributeDef&, const AttributeDef&) = default;
};

struct MacroAttribute {
    std::string name;
    std::map<int, std::vector<std::string>> versions;  // arity -> atoms

    /// Internal name of one version: "conservative*05".
    static std::string version_name(const std::string& name, int arity);

    friend bool operator==(const MacroAttribute&, const MacroAttribute&) = default;
};

/// Attribute or attribute/value reference in class metadata lists.
struct AttrValueRef {
    std::string attr;
    std::optional<Value> value;  // nullopt: the whole attribute
    friend bool operator==(const AttrValueRef&, const AttrValueRef&) = default;
};

struct ObsoleteEntry {
    AttrValueRef item;
    std::optional<Value> replacement;  // replacement attribute name or value
    friend bool operator==(const ObsoleteEntry&, const ObsoleteEntry&) = default;
};

struct ClassDef {
    std::string name;
    std::string doc;
    std::vector<AttributeDef> attributes;  // declaration order
    std::vector<MacroAttribute> macros;
    std::vector<std::string> required;
    std::vector<ObsoleteEntry> obsolete;
    std::vector<AttrValueRef> filterable;
    std::vector<AttrValueRef> undocumented;
    std::optional<std::string> parent;  // cleared by finalize
    Node overlay = Node::map();          // attr -> entry or partial field map
    std::string entry;                   // compute procedure; non-empty means bootable

    bool bootable() const { return !entry.empty(); }
    const AttributeDef* attribute(std::string_view name) const;
    const MacroAttribute* macro(std::string_view name) const;
    bool is_required(std::string_view attr) const;
    const ObsoleteEntry* obsolete_entry(std::string_view attr, const Value* value) const;
    bool matches(const std::vector<AttrValueRef>& list, std::string_view attr, const Value* value) const;
    std::vector<std::string> attribute_names() const;

    friend bool operator==(const ClassDef&, const ClassDef&) = default;
};

class ClassRegistry {
public:
    const ClassDef* find(std::string_view name) const;
    const ClassDef& at(std::string_view name) const;  // throws with suggestion
    std::vector<std::string> class_names() const;
    const std::vector<std::shared_ptr<const ClassDef>>& classes() const { return classes_; }
    bool finalized() const { return finalized_; }

    /// Adds an unfinalized class; rejects duplicates.
    void add(ClassDef def);

    friend ClassRegistry finalize(ClassRegistry registry);
    friend bool operator==(const ClassRegistry& a, const ClassRegistry& b);

private:
    std::vector<std::shared_ptr<const ClassDef>> classes_;
    bool finalized_ = false;
};

/// Parses and structurally validates a static-definitions document.
ClassRegistry load_static_defs(const Node& doc);
ClassRegistry load_static_defs_file(const std::string& path);

/// Applies inheritance overlays and freezes the registry. Idempotent.
ClassRegistry finalize(ClassRegistry registry);

/// Adds the classes of `extra` (unfinalized) to a finalized registry and
/// re-finalizes; rejects any name collision.
ClassRegistry merge_classes(const ClassRegistry& base, ClassRegistry extra);

/// Member list of the selected macro version. `arity` may be omitted when the
/// macro has a single version.
std::vector<std::string> expand_macro(const ClassRegistry& registry, std::string_view cls,
                                      std::string_view macro, std::optional<int> arity);

/// Canonical resource document for a finalized registry.
Node to_resource(const ClassRegistry& registry);

/// One 4/5-slot attribute entry.
AttributeDef parse_attribute_entry(const std::string& name, const Node& entry);
Node attribute_entry(const AttributeDef& def);

}  // namespace ctxdesc
