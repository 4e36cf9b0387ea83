#pragma once

#include <memory>
#include <string>

#include "ctxdesc/registry.hpp"
#include "ctxdesc/rules.hpp"

namespace fixtures {

inline std::string resource(const std::string& name) { return std::string(CTXDESC_SOURCE_DIR) + "/resources/" + name; }

inline std::shared_ptr<const ctxdesc::ClassRegistry> core_registry() {
    static auto reg = std::make_shared<const ctxdesc::ClassRegistry>(
        ctxdesc::finalize(ctxdesc::load_static_defs_file(resource("static_defs.res"))));
    return reg;
}

inline std::shared_ptr<const ctxdesc::RuleSet> core_rules() {
    static auto rules = std::make_shared<const ctxdesc::RuleSet>(
        ctxdesc::load_rule_defs_file(resource("rules.res"), *core_registry()));
    return rules;
}

inline ctxdesc::Study core_study() { return ctxdesc::Study(core_registry(), core_rules()); }

}  // namespace fixtures
