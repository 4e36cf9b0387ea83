#pragma once

// Integrated documentation: man() pages derived from the registry and the
// rules, manual skeletons for undocumented attributes and the manual
// coherency check.

#include <map>
#include <string>
#include <vector>

#include "ctxdesc/registry.hpp"
#include "ctxdesc/rules.hpp"

namespace ctxdesc {

/// Width beyond which man() lines are cut with " ...".
inline constexpr std::size_t kManWidth = 56;

/// man(topic): function, class, "class.method", attribute or "class.attr".
std::string man(const ClassRegistry& registry, const RuleSet& rules, std::string_view topic);

/// Names accepted by man(), for completion and suggestions.
std::vector<std::string> man_topics(const ClassRegistry& registry);

// ---------------------------------------------------------------- manual

// Manual document: a section tree keyed by class and attribute.
//
//   = model
//   == phymod
//   description: fluid model
//   values: 'euler', 'nslam', 'nstur'
//       free text, kept verbatim
struct ManualEntry {
    std::string cls;
    std::string attr;
    std::string description;
    std::optional<std::string> values;
    std::vector<std::string> text;
};

struct Manual {
    std::vector<ManualEntry> entries;
    const ManualEntry* find(std::string_view cls, std::string_view attr) const;
};

Manual parse_manual(std::string_view text);
Manual read_manual(const std::string& path);

/// Skeleton entries for every documented registry attribute absent from the manual.
std::string gen_manual_skeleton(const ClassRegistry& registry, const RuleSet& rules, const Manual& manual);

struct CoherencyReport {
    std::vector<std::string> missing;  // class.attr absent from the manual
    std::vector<std::string> stale;    // manual entries absent from the registry
    struct Mismatch {
        std::string path;
        std::string manual;
        std::string registry;
    };
    std::vector<Mismatch> mismatches;

    bool empty() const { return missing.empty() && stale.empty() && mismatches.empty(); }
    std::string text() const;
};

CoherencyReport check_manual_coherency(const ClassRegistry& registry, const RuleSet& rules, const Manual& manual);

/// Printable markup for the manual.
std::string manual_markdown(const Manual& manual);

}  // namespace ctxdesc
