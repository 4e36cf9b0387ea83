#pragma once

// The context tree: scripts nesting scripts and descriptions, descriptions
// owning attribute bindings, plus attach edges between descriptions.

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "ctxdesc/diagnostics.hpp"
#include "ctxdesc/notation.hpp"
#include "ctxdesc/registry.hpp"
#include "ctxdesc/value.hpp"

namespace ctxdesc {

class RuleSet;

struct Origin {
    enum class Kind { User, StaticDefault, KernelDefault, ContextRule, Interface };
    Kind kind = Kind::User;
    std::string detail;  // rule id or component name

    static Origin user() { return {Kind::User, {}}; }
    static Origin static_default() { return {Kind::StaticDefault, {}}; }
    static Origin kernel_default() { return {Kind::KernelDefault, {}}; }
    static Origin rule(std::string id) { return {Kind::ContextRule, std::move(id)}; }
    static Origin interface(std::string component) { return {Kind::Interface, std::move(component)}; }

    /// "user", "contextual rule suth_muref#0", "interface (service)", ...
    std::string describe() const;
    bool derived() const { return kind == Kind::ContextRule || kind == Kind::StaticDefault || kind == Kind::KernelDefault; }

    friend bool operator==(const Origin&, const Origin&) = default;
};

struct Binding {
    std::string attr;
    Value value;
    Origin origin;
    friend bool operator==(const Binding&, const Binding&) = default;
};

struct PendingOp {
    enum class Kind { Compute, Extract, SetBoot };
    Kind kind = Kind::Compute;
    std::string target;        // description ident; empty means the owning script
    Node args = Node::list();  // positional arguments as notation literals

    friend bool operator==(const PendingOp&, const PendingOp&) = default;
};

class Description {
public:
    Description(std::shared_ptr<const ClassDef> cls, std::string ident);

    const std::string& ident() const { return ident_; }
    const ClassDef& cls() const { return *cls_; }
    const std::shared_ptr<const ClassDef>& cls_ptr() const { return cls_; }

    const Binding* binding(std::string_view attr) const;
    Value value(std::string_view attr) const;  // Undefined when unbound
    /// Bindings in class declaration order.
    std::vector<Binding> bindings() const;
    const std::vector<std::string>& attachments() const { return attachments_; }

    // Raw mutation; static checks live in Study::set.
    void bind(Binding b);
    void unbind(std::string_view attr);
    void add_attachment(const std::string& ident);

private:
    friend class Study;
    std::shared_ptr<const ClassDef> cls_;
    std::string ident_;
    std::map<std::string, Binding, std::less<>> bindings_;
    std::vector<std::string> attachments_;
};

struct ChildRef {
    enum class Kind { Description, Script };
    Kind kind = Kind::Description;
    std::string ident;
    friend bool operator==(const ChildRef&, const ChildRef&) = default;
};

class Script {
public:
    explicit Script(std::string ident) : ident_(std::move(ident)) {}
    const std::string& ident() const { return ident_; }
    const std::vector<ChildRef>& children() const { return children_; }
    const std::vector<PendingOp>& pending_ops() const { return pending_; }
    const std::string& parent() const { return parent_; }

    void add_pending(PendingOp op) { pending_.push_back(std::move(op)); }
    void clear_pending() { pending_.clear(); }

private:
    friend class Study;
    std::string ident_;
    std::string parent_;
    std::vector<ChildRef> children_;
    std::vector<PendingOp> pending_;
};

struct StudyOptions {
    bool strict = false;
    bool filter = false;
    bool allow_obsolete = false;
    bool unlock = false;
};

using ValueOrSeq = std::variant<Value, ValueSeq>;

/// Either kind of context, by identifier.
struct ContextRef {
    ChildRef::Kind kind;
    std::string ident;
};

/// Markers left by the most recent check, consumed by view().
struct CheckMarks {
    std::set<std::pair<std::string, std::string>> non_coherent;  // (ident, attr)
    std::set<std::pair<std::string, std::string>> missing;       // (ident, attr)
};

class Study {
public:
    static constexpr std::string_view kRootIdent = "root";

    explicit Study(std::shared_ptr<const ClassRegistry> registry, std::shared_ptr<const RuleSet> rules = nullptr);

    const ClassRegistry& registry() const { return *registry_; }
    const std::shared_ptr<const ClassRegistry>& registry_ptr() const { return registry_; }
    const RuleSet* rules() const { return rules_.get(); }
    const std::shared_ptr<const RuleSet>& rules_ptr() const { return rules_; }
    void replace_definitions(std::shared_ptr<const ClassRegistry> registry, std::shared_ptr<const RuleSet> rules);

    StudyOptions options;

    Script& root() { return *scripts_.at(std::string(kRootIdent)); }
    const Script& root() const { return *scripts_.at(std::string(kRootIdent)); }

    // ---- identifier index
    bool has_ident(std::string_view ident) const;
    std::optional<ContextRef> lookup(std::string_view ident) const;
    Description& description(std::string_view ident);
    const Description& description(std::string_view ident) const;
    Description* find_description(std::string_view ident);
    const Description* find_description(std::string_view ident) const;
    Script& script(std::string_view ident);
    const Script& script(std::string_view ident) const;
    const Script* find_script(std::string_view ident) const;
    std::vector<std::string> idents() const;
    /// Descriptions in creation order.
    const std::vector<std::string>& creation_order() const { return creation_order_; }

    // ---- construction
    Description& create_description(std::string_view cls, std::string_view ident,
                                    std::string_view in_script = kRootIdent);
    Script& create_script(std::string_view ident, std::string_view in_script = kRootIdent);

    // ---- attribute access with static checks
    void set(Description& desc, std::string_view attr, const ValueOrSeq& value,
             const Origin& origin = Origin::user());
    void unset(Description& desc, std::string_view attr);
    /// Runs the static checks of set() without writing; returns the value as
    /// it would be stored (Int promoted to Float where declared).
    Value validated(const Description& desc, std::string_view attr, Value v) const;
    ValueOrSeq get(const Description& desc, std::string_view attr) const;

    void attach(Description& desc, const std::vector<std::string>& others);

    /// Deep copy; scripts copy their children with "@<ident>" suffixed idents.
    ContextRef copy(const ContextRef& src, std::string_view ident, std::string_view in_script = kRootIdent);

    /// Descriptions reachable from a context: nested scripts, their
    /// descriptions and transitively attached descriptions, in declaration
    /// order. Unresolvable attachments raise an error.
    std::vector<const Description*> closure(const ContextRef& ctx) const;

    std::string view(const ContextRef& ctx) const;

    CheckMarks marks;
    /// Non-fatal messages raised by static checks (obsolete, filtered).
    std::vector<Diagnostic> notices;

private:
    void register_ident(std::string_view ident, std::string_view kind);
    void check_value(const Description& desc, const AttributeDef& def, Value& v, const Origin& origin,
                     std::vector<Diagnostic>* sink) const;
    void view_into(const ContextRef& ctx, int indent, std::string& out) const;

    std::shared_ptr<const ClassRegistry> registry_;
    std::shared_ptr<const RuleSet> rules_;
    std::map<std::string, std::unique_ptr<Description>, std::less<>> descs_;
    std::map<std::string, std::unique_ptr<Script>, std::less<>> scripts_;
    std::vector<std::string> creation_order_;
};

/// "set(model, 'phymod', 'euler'|'nslam'|'nstur')" style correction hint.
std::string set_skeleton(const ClassDef& cls, const AttributeDef& def);

/// Equality of user-visible state: classes, identifiers, user and interface
/// bindings with their origins, attach edges, nesting and pending operations.
/// Rule-derived bindings are excluded (they are recomputed by check).
bool structurally_equal(const Study& a, const ContextRef& ca, const Study& b, const ContextRef& cb);

inline ContextRef desc_ref(std::string ident) { return {ChildRef::Kind::Description, std::move(ident)}; }
inline ContextRef script_ref(std::string ident) { return {ChildRef::Kind::Script, std::move(ident)}; }
inline ContextRef root_ref() { return script_ref(std::string(Study::kRootIdent)); }

}  // namespace ctxdesc
