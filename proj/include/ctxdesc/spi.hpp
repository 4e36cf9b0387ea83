#pragma once

// Adaptive sparse polynomial interpolation on nested Clenshaw-Curtis nodes.
//
// One-dimensional nodes live on a fixed dyadic lattice: node id j in
// [0, 2^30] has the value sin(π(N − 2j)/(2N)), N = 2^30, so a node keeps
// bit-identical values at every level that contains it. Level ℓ ≥ 1 holds
// the ids k·2^(30−ℓ), k = 0..2^ℓ; level 0 is the single id N/2 (value 0).
//
// The interpolant is Σ_λ Σ_z s(z) ∏_i L^{λ_i}_{z_i}(x_i) where L^ℓ_z is
// the Lagrange polynomial of node z on the level-ℓ nodes and s(z) the
// hierarchical surplus f(z) − I(z) over the indices below λ.

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ctxdesc/doe.hpp"

namespace ctxdesc {

constexpr int kSpiMaxLevel = 30;

/// Level ℓ nodes, ascending.
std::vector<double> cc_nodes(int level);
/// Ids of level ℓ, in ascending node value order.
std::vector<std::uint32_t> cc_node_ids(int level);
/// Ids first appearing at level ℓ.
std::vector<std::uint32_t> cc_new_ids(int level);
double cc_value(std::uint32_t id);

using MultiIndex = std::vector<int>;
using NodeIds = std::vector<std::uint32_t>;

struct SpiTerm {
    NodeIds node;
    double surplus = 0.0;
    friend bool operator==(const SpiTerm&, const SpiTerm&) = default;
};

struct Surrogate {
    std::vector<std::string> params;
    std::vector<std::pair<double, double>> bounds;
    std::string observable;
    std::vector<MultiIndex> indices;                 // insertion order; downward closed
    std::map<MultiIndex, std::vector<SpiTerm>> terms;

    std::size_t dims() const { return params.size(); }
    std::size_t sample_count() const;
    /// Domain point of a node.
    Point point(const NodeIds& node) const;
    friend bool operator==(const Surrogate&, const Surrogate&) = default;
};

bool downward_closed(const std::vector<MultiIndex>& set);

/// Throws "out_of_bounds" outside the domain.
double spi_eval(const Surrogate& s, const Point& p);
/// Row-major n×d points in parameter order.
void spi_eval_batch(const Surrogate& s, const double* points, std::size_t n, double* out, Exec exec);

std::string surrogate_text(const Surrogate& s);
Surrogate parse_surrogate(std::string_view text);

/// Evaluates a batch of domain points; the swarm path.
using BatchProvider = std::function<std::vector<double>(const std::vector<Point>&)>;

struct SpiSpec {
    std::vector<std::string> params;
    std::vector<std::pair<double, double>> bounds;
    std::string observable = "f";
    double tol = 1e-4;
    std::size_t budget = 200;  // sample count
};

struct SpiIteration {
    MultiIndex added;          // empty for the initialization step
    double max_indicator = 0;  // over the active indices after the step
    std::size_t samples = 0;
};

struct SpiReport {
    std::vector<SpiIteration> iterations;
    std::vector<std::vector<Point>> batches;  // provider calls, in order
    bool converged = false;
    bool budget_reached = false;
};

/// Dimension-adaptive discovery. Starts with the 2^d summits, then the rest
/// of the {0,1}^d indices; afterwards repeatedly accepts the active index of
/// largest indicator Σ|s| and evaluates its admissible forward neighbors as
/// one batch. Stops when every active indicator is ≤ tol, or when the next
/// batch would exceed the budget. A provider failure propagates; surrogate()
/// keeps the state before the failed batch.
class SpiDiscovery {
public:
    SpiDiscovery(SpiSpec spec, BatchProvider provider);
    void run();
    const Surrogate& surrogate() const { return surrogate_; }
    const SpiReport& report() const { return report_; }
    const std::vector<MultiIndex>& accepted() const { return accepted_; }
    std::map<MultiIndex, double> active() const;

private:
    void evaluate(const std::vector<MultiIndex>& batch);
    void record(std::size_t samples, MultiIndex added);

    SpiSpec spec_;
    BatchProvider provider_;
    Surrogate surrogate_;
    SpiReport report_;
    std::vector<MultiIndex> accepted_;
    std::map<MultiIndex, double> indicator_;  // active set
};

struct Discovered {
    Surrogate surrogate;
    SpiReport report;
};
Discovered discover(const SpiSpec& spec, const BatchProvider& provider);

}  // namespace ctxdesc
