#pragma once

// Products, boot dispatch and the solver kernel contract.
//
// Scripts record compute()/extract()/set_boot_objt() as pending operations;
// a Runtime replays them. compute() on a script goes to the current boot
// object: the description holding the token, else the last-created
// description of a bootable class.

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ctxdesc/model.hpp"
#include "ctxdesc/rules.hpp"

namespace ctxdesc {

using Point = std::map<std::string, double>;
using Observables = std::map<std::string, double>;

/// Pluggable solver. Implementations must be pure and deterministic so that
/// swarms may evaluate them concurrently.
class SolverKernel {
public:
    virtual ~SolverKernel() = default;
    virtual std::string name() const = 0;
    /// `restart`: observables of a chained source run, used as initial guess.
    virtual Observables evaluate(const Point& point, const Observables* restart = nullptr) const = 0;
};

/// lift(α) = 0.11·α on α ∈ [0, 10] degrees; f(x, y) = exp(−x²−y²) + 0.3·x·y.
/// Also reports "iterations": 60 cold, fewer when restarted nearby.
class ToyKernel : public SolverKernel {
public:
    static constexpr double kLiftSlope = 0.11;
    static constexpr double kAlphaMax = 10.0;
    std::string name() const override { return "toy"; }
    Observables evaluate(const Point& point, const Observables* restart = nullptr) const override;
};

// ---------------------------------------------------------------- products

struct ProductSpec {
    std::string name;
    Node static_defs = Node::map();  // same notation as the core resource
    Node metadata = Node::map();
    Node rules;                      // None when the product has no rules
    std::filesystem::path source;

    static ProductSpec parse(const Node& manifest, std::filesystem::path source = {});
    static ProductSpec read(const std::filesystem::path& path);
};

/// Registry, rules and product names evolving together.
class Definitions {
public:
    Definitions(std::shared_ptr<const ClassRegistry> registry, std::shared_ptr<const RuleSet> rules);
    static Definitions core();  // shipped resources
    /// core() plus every products/*.product manifest, in name order.
    static Definitions with_products(const std::filesystem::path& products_dir);

    const std::shared_ptr<const ClassRegistry>& registry() const { return registry_; }
    const std::shared_ptr<const RuleSet>& rules() const { return rules_; }
    const std::vector<std::string>& products() const { return products_; }

    /// Atomic: on error nothing is merged.
    void register_product(const ProductSpec& spec);

private:
    std::shared_ptr<const ClassRegistry> registry_;
    std::shared_ptr<const RuleSet> rules_;
    std::vector<std::string> products_;
};

std::filesystem::path shipped_products_dir();

/// register_product applied to a live study: its descriptions keep working.
void register_product(Study& study, Definitions& defs, const ProductSpec& spec);

// ---------------------------------------------------------------- runtime

class Runtime;

/// Compute procedure of a bootable class. Returns a notation value.
using Procedure = std::function<Node(Runtime&, const Description& self, const Node& args)>;

class ProcedureTable {
public:
    static const ProcedureTable& builtin();
    void add(std::string name, Procedure compute, Procedure extract = nullptr);
    const Procedure* compute(std::string_view name) const;
    const Procedure* extract(std::string_view name) const;

private:
    std::map<std::string, std::pair<Procedure, Procedure>, std::less<>> table_;
};

/// toy_solver, target_lift and the dmd/sfd stand-ins.
void add_core_procedures(ProcedureTable& table);

struct BootRegistry {
    std::optional<std::string> current;
    /// Bootable descriptions in creation order (recomputed from the study).
    std::vector<std::string> creation_order;
    std::optional<std::string> boot() const;
};

class Runtime {
public:
    Runtime(Study& study, std::shared_ptr<const SolverKernel> kernel = std::make_shared<ToyKernel>(),
            const ProcedureTable& procedures = ProcedureTable::builtin());

    Study& study() { return study_; }
    const SolverKernel& kernel() const { return *kernel_; }

    BootRegistry boot_registry() const;
    void set_boot_objt(const std::string& ident);
    /// Script-level compute(): root → boot object.
    Node compute(const Node& args = Node::list());
    Node extract(const Node& args = Node::list());
    /// <desc>.compute()
    Node compute_on(const std::string& ident, const Node& args = Node::list());
    Node extract_on(const std::string& ident, const Node& args = Node::list());

    /// Replays the pending operations of a script in order; returns the
    /// result of each compute/extract.
    std::vector<Node> run_pending(std::string_view script = Study::kRootIdent);

    /// Procedure invocations so far: "toy_solver(cfd1)".
    std::vector<std::string> trace;
    /// Initial guess for the next kernel evaluation (chained restarts).
    std::optional<Observables> restart;

    // Helpers for procedures.
    /// First description of `cls` in the closure of `near`, else of the root.
    const Description* find(std::string_view cls, const Description* near = nullptr) const;
    /// get_or_deft as a number; throws "missing" when undefined.
    double number(const Description& d, std::string_view attr) const;
    /// Kernel point from the cfdpb description of the context.
    Point kernel_point(const Description* near) const;
    Observables evaluate(const Point& p) const;

private:
    Node dispatch(const Description& d, const Node& args, bool extract);

    Study& study_;
    std::shared_ptr<const SolverKernel> kernel_;
    const ProcedureTable& procedures_;
    std::optional<std::string> token_;
};

/// Bracketing bisection for lift(α) = target on [lo, hi]; the oracle the
/// target_lift procedure is checked against.
double solve_alpha(const std::function<double(double)>& lift, double target, double lo, double hi, double tol,
                   int max_iter);

}  // namespace ctxdesc
