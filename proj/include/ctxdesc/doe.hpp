#pragma once

// Design-of-experiment layers: variator (script variations into a store),
// the spanning automaton with chaining and linearization, and swarms.

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ctxdesc/orchestrate.hpp"
#include "ctxdesc/store.hpp"

namespace ctxdesc {

struct DoEPoint {
    std::map<std::string, double> coords;  // "cfdpb.mach" -> 0.8
    std::string key;
    friend bool operator==(const DoEPoint&, const DoEPoint&) = default;
};

/// Weighted metric, hop bound and source/target pairing terms.
///
/// Pairing term paths are "src.<param>", "dst.<param>" or "delta.<param>"
/// (dst minus src); a source qualifies when every term holds.
struct ChainPolicy {
    std::map<std::string, double> weights;
    double max_jump = 0.0;  // 0: no linearization
    std::vector<SearchTerm> pairing;

    void validate() const;
};

double weighted_distance(const DoEPoint& a, const DoEPoint& b, const ChainPolicy& policy);
bool pairing_allows(const ChainPolicy& policy, const DoEPoint& src, const DoEPoint& dst);

enum class Exec { Serial, Parallel };

/// Dense kernel: squared weighted distances from `target` (d values) to each
/// row of `rows` (n×d, row-major).
void weighted_sq_distances(const double* target, const double* rows, const double* weights, std::size_t n,
                           std::size_t d, double* out, Exec exec);

/// Closest pairing-compatible completed point; ties go to the smaller key.
std::optional<DoEPoint> nearest_source(const DoEPoint& target, const std::vector<DoEPoint>& completed,
                                       const ChainPolicy& policy, Exec exec = Exec::Parallel);

/// n−1 evenly spaced points between src and dst, n = ceil(d / max_jump).
/// Keys are "<dst.key>.lin<k>".
std::vector<DoEPoint> linearize(const DoEPoint& src, const DoEPoint& dst, const ChainPolicy& policy);

struct SwarmSpec {
    enum class Kind { MaxJobs, NodeFraction };
    Kind kind = Kind::MaxJobs;
    int count = 1;
    double fraction = 1.0;

    static SwarmSpec max_jobs(int n);
    static SwarmSpec node_fraction(double f);
    /// Worker count: count, or floor(fraction × cores) and at least 1.
    int resolve(unsigned cores = 0) const;
};

/// One record per point: the base script with each coordinate set on the
/// first description of its class, relative file paths moved under
/// <base_dir>/<key>/, and a pending compute() when the base has none.
/// Coordinates are kept in the "doe.<param>" catalog tags.
std::vector<std::string> variator_build(const Study& base, const std::string& base_script,
                                        const std::vector<DoEPoint>& points, ScriptStore& db,
                                        const std::filesystem::path& base_dir);

/// Point read back from a catalog entry's "doe.*" tags.
DoEPoint doe_point(const CatalogEntry& e);
/// Observables read back from "obs.*" tags.
Observables recorded_observables(const CatalogEntry& e);

struct SpanOptions {
    std::shared_ptr<const ClassRegistry> registry;  // used to load records
    std::shared_ptr<const RuleSet> rules;
    ChainPolicy policy;
    SwarmSpec swarm;
    std::shared_ptr<const SolverKernel> kernel = std::make_shared<ToyKernel>();
    const ProcedureTable* procedures = &ProcedureTable::builtin();
    std::filesystem::path work_dir;  // default: <db>/runs
};

struct SpanReport {
    std::map<std::string, Observables> observables;  // every CMP record
    std::vector<std::string> computed;               // this run, completion order
    std::vector<std::string> inserted;               // linearization records
    std::vector<std::string> failed;                 // left NYS after two failures
    std::map<std::string, std::string> sources;      // key -> restart source
};

/// Runs every NYS job of the store through a worker pool bounded by the
/// swarm limit. Kernel failures hand the job back to NYS; a second failure
/// leaves it there and reports it.
SpanReport span(ScriptStore& db, const SpanOptions& options);

/// In-memory swarm: evaluates points on a bounded pool, results in order.
std::vector<Observables> swarm_evaluate(const SolverKernel& kernel, const std::vector<Point>& points,
                                        const SwarmSpec& swarm);

}  // namespace ctxdesc
