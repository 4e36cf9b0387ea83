#pragma once

// Contextual rules: dependency (up-propagation), influence (down-propagation,
// with alternative groups and strong terms), contextual defaults applied to
// a fixpoint, and always-required attributes.
//
// Rule document sections, same notation as the static definitions:
//
//   {'depend':          {'visclaw': {'phymod': ['nslam', 'nstur']}},
//    'influence':       {'visclaw': {'sutherland': ['suth_const', ['suth_muref', 'suth_muref_fct'], 'suth_tref']}},
//    'context_default': {'suth_muref': {1.78938e-5: {'mixture': ['air'], 'cfdpb.units': ['si']}}},
//    'always_required': {'model': ['phymod']}}
//
// A string written "/pattern/" matches Str values by anchored regex.

#include <memory>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include "ctxdesc/diagnostics.hpp"
#include "ctxdesc/model.hpp"
#include "ctxdesc/notation.hpp"
#include "ctxdesc/registry.hpp"

namespace ctxdesc {

/// Attribute reference, optionally class-qualified ("cfdpb.units").
struct AttrPath {
    std::string cls;
    std::string attr;

    static AttrPath parse(std::string_view text);
    std::string text() const { return cls.empty() ? attr : cls + "." + attr; }
    friend bool operator==(const AttrPath&, const AttrPath&) = default;
};

/// A literal value or an anchored regular expression over Str values.
class ValuePattern {
public:
    static ValuePattern from_node(const Node& n);
    explicit ValuePattern(Value literal = {}) : literal_(std::move(literal)) {}

    bool is_regex() const { return regex_.has_value(); }
    const Value& literal() const { return literal_; }
    bool matches(const Value& v) const;
    /// Literal repr, or the '/pattern/' string for regexes.
    std::string repr() const;
    Node to_node() const;

private:
    Value literal_;
    std::optional<std::regex> regex_;
    std::string source_;
};

bool any_match(const std::vector<ValuePattern>& set, const Value& v);
std::string join_patterns(const std::vector<ValuePattern>& set, std::string_view sep);

struct DependencyRule {
    std::string id;
    AttrPath attr;
    AttrPath source;
    std::vector<ValuePattern> allowed;
};

struct RequirementTerm {
    enum class Kind { Plain, Alternative, Strong };
    Kind kind = Kind::Plain;
    std::vector<AttrPath> paths;          // one entry, or the alternative members
    std::vector<ValuePattern> allowed;    // strong terms only

    /// "suth_const", "exactly-one-of(suth_muref, suth_muref_fct)", "turbmod in ['keps', 'komega']"
    std::string describe() const;
};

struct InfluenceRule {
    std::string id;
    AttrPath attr;
    ValuePattern trigger;
    std::vector<RequirementTerm> requires_;
};

struct ContextDefaultRule {
    std::string id;
    AttrPath attr;
    Value value;
    std::vector<std::pair<AttrPath, std::vector<ValuePattern>>> conditions;
};

class RuleSet {
public:
    std::vector<DependencyRule> deps;
    std::vector<InfluenceRule> infls;
    std::vector<ContextDefaultRule> defaults;
    std::vector<std::pair<std::string, std::vector<std::string>>> always_required;  // class -> attrs
    int max_fixpoint_iters = 100;

    bool empty() const { return deps.empty() && infls.empty() && defaults.empty() && always_required.empty(); }
    bool always_required_for(std::string_view cls, std::string_view attr) const;

    /// The rule as it would appear in a rule document, for show_origin and man().
    static Node rule_node(const DependencyRule& r);
    static Node rule_node(const InfluenceRule& r);
    static Node rule_node(const ContextDefaultRule& r);
    const ContextDefaultRule* find_default(std::string_view id) const;
};

/// Parses, cross-references against `registry` and validates acyclicity.
RuleSet load_rule_defs(const Node& doc, const ClassRegistry& registry);
RuleSet load_rule_defs_file(const std::string& path, const ClassRegistry& registry);
/// Concatenates two rule sets and re-validates the result.
RuleSet merge_rules(const RuleSet& base, const RuleSet& extra, const ClassRegistry& registry);
/// Throws "rule_cycle" naming one cycle as "a→b→a".
void validate_acyclic(const RuleSet& rules);

// ---------------------------------------------------------------- checking

struct MissingItem {
    std::string ident;  // description that must hold the value; empty when none in the closure
    std::string attr;   // attribute, or "exactly-one-of(a, b)"
    std::string rule;   // demanding rule id
    friend bool operator==(const MissingItem&, const MissingItem&) = default;
};

struct AppliedDefault {
    std::string ident;
    std::string attr;
    Value value;
    std::string rule;
    friend bool operator==(const AppliedDefault&, const AppliedDefault&) = default;
};

struct PrunedItem {
    std::string ident;
    std::string attr;
    Value value;
    std::string rule;
    friend bool operator==(const PrunedItem&, const PrunedItem&) = default;
};

struct CheckReport {
    bool status = true;
    std::vector<Diagnostic> diagnostics;
    std::vector<MissingItem> missing;
    std::vector<AppliedDefault> applied_defaults;
    std::vector<PrunedItem> pruned;
    int fixpoint_iterations = 0;
    /// Defined-binding count before the fixpoint, then after each iteration
    /// (last prune round).
    std::vector<std::size_t> fixpoint_sizes;
    std::vector<std::pair<std::string, std::string>> non_coherent;  // (ident, attr)

    std::size_t count(Severity s) const;
    /// Formatted diagnostics followed by a status line.
    std::string text() const;
    friend bool operator==(const CheckReport&, const CheckReport&) = default;
};

struct CheckOptions {
    bool prune = false;
    bool strict = false;
};

struct Hypothetical {
    std::string ident;
    std::string attr;
    Value value;
};

/// Pure evaluation on a scratch overlay; the study is not touched.
CheckReport evaluate(const Study& study, const ContextRef& ctx, const CheckOptions& opts,
                     const std::vector<Hypothetical>& hypothetical = {});

/// evaluate(), then materializes contextual defaults (Origin=ContextRule),
/// applies prune removals and refreshes the study's view marks.
CheckReport check(Study& study, const ContextRef& ctx, const CheckOptions& opts = {});

/// Report as if `hypothetical` were set. Static checks apply to every value.
CheckReport what_if(const Study& study, const ContextRef& ctx, const std::vector<Hypothetical>& hypothetical,
                    const CheckOptions& opts = {});

/// Bound value, else the attribute's default chain (contextual rules against
/// the current state of `scope`, then static, then kernel). Never mutates.
Value get_or_deft(const Study& study, const Description& desc, std::string_view attr,
                  std::optional<ContextRef> scope = std::nullopt);

struct OriginTrace {
    Origin origin;
    std::string text;  // one or more lines
};

OriginTrace show_origin(const Study& study, const Description& desc, std::string_view attr);

}  // namespace ctxdesc
