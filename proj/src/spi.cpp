#include "ctxdesc/spi.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace ctxdesc {

namespace {

constexpr std::int64_t kLattice = std::int64_t{1} << kSpiMaxLevel;

void check_level(int level) {
    if (level < 0 || level > kSpiMaxLevel)
        throw Error("bad_level", "Clenshaw-Curtis level " + std::to_string(level) + " out of range",
                    {"levels 0.." + std::to_string(kSpiMaxLevel)});
}

// Node k of level ℓ ≥ 1 (k = 0 is +1).
double level_value(int level, std::int64_t k) {
    const std::int64_t n = std::int64_t{1} << level;
    return std::sin(M_PI * static_cast<double>(n - 2 * k) / static_cast<double>(2 * n));
}

int id_shift(int level) { return kSpiMaxLevel - level; }

// Position of a level-ℓ node within its level, in id order.
std::size_t position(std::uint32_t id, int level) { return level == 0 ? 0 : id >> id_shift(level); }

/// Lagrange basis values of every level-ℓ node (id order) at t. The nodes
/// are Chebyshev extrema, so the barycentric weights are (−1)^k, halved at
/// both ends; the plain product overflows past level 6.
std::vector<double> lagrange_row(int level, double t) {
    if (level == 0) return {1.0};
    const std::size_t m = (std::size_t{1} << level) + 1;
    std::vector<double> out(m, 0.0);
    double denom = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
        double x = level_value(level, static_cast<std::int64_t>(k));
        if (t == x) {
            std::fill(out.begin(), out.end(), 0.0);
            out[k] = 1.0;
            return out;
        }
        double w = (k % 2 ? -1.0 : 1.0) * (k == 0 || k == m - 1 ? 0.5 : 1.0);
        out[k] = w / (t - x);
        denom += out[k];
    }
    for (auto& v : out) v /= denom;
    return out;
}

/// Interpolant at a point of [−1,1]^d.
double eval_reference(const Surrogate& s, const std::vector<double>& t) {
    const std::size_t d = s.dims();
    std::vector<int> top(d, 0);
    for (const auto& idx : s.indices)
        for (std::size_t i = 0; i < d; ++i) top[i] = std::max(top[i], idx[i]);
    std::vector<std::vector<std::vector<double>>> rows(d);
    for (std::size_t i = 0; i < d; ++i)
        for (int l = 0; l <= top[i]; ++l) rows[i].push_back(lagrange_row(l, t[i]));
    double sum = 0.0;
    for (const auto& idx : s.indices) {
        auto it = s.terms.find(idx);
        if (it == s.terms.end()) continue;
        for (const auto& term : it->second) {
            double b = term.surplus;
            for (std::size_t i = 0; i < d && b != 0.0; ++i) b *= rows[i][idx[i]][position(term.node[i], idx[i])];
            sum += b;
        }
    }
    return sum;
}

std::vector<double> to_reference(const Surrogate& s, const Point& p) {
    std::vector<double> t(s.dims());
    for (std::size_t i = 0; i < s.dims(); ++i) {
        auto it = p.find(s.params[i]);
        if (it == p.end())
            throw Error("bad_point", "point lacks parameter '" + s.params[i] + "'", {}, "");
        auto [lo, hi] = s.bounds[i];
        double x = it->second;
        if (!(x >= lo && x <= hi))
            throw Error("out_of_bounds", "parameter '" + s.params[i] + "' = " + format_float(x) + " outside the domain",
                        {"[" + format_float(lo) + ", " + format_float(hi) + "]"}, "");
        t[i] = x == hi ? 1.0 : x == lo ? -1.0 : (2.0 * x - lo - hi) / (hi - lo);
    }
    return t;
}

// Cartesian product of the new ids of each component of λ.
std::vector<NodeIds> new_nodes(const MultiIndex& idx) {
    std::vector<NodeIds> out{{}};
    for (int l : idx) {
        std::vector<NodeIds> next;
        for (const auto& prefix : out)
            for (auto id : cc_new_ids(l)) {
                auto n = prefix;
                n.push_back(id);
                next.push_back(std::move(n));
            }
        out = std::move(next);
    }
    return out;
}

int level_sum(const MultiIndex& m) { return std::accumulate(m.begin(), m.end(), 0); }

}  // namespace

std::vector<double> cc_nodes(int level) {
    check_level(level);
    if (level == 0) return {0.0};
    const std::int64_t n = std::int64_t{1} << level;
    std::vector<double> out;
    for (std::int64_t k = n; k >= 0; --k) out.push_back(level_value(level, k));
    return out;
}

std::vector<std::uint32_t> cc_node_ids(int level) {
    check_level(level);
    if (level == 0) return {static_cast<std::uint32_t>(kLattice / 2)};
    std::vector<std::uint32_t> out;
    for (std::int64_t k = std::int64_t{1} << level; k >= 0; --k)
        out.push_back(static_cast<std::uint32_t>(k << id_shift(level)));
    return out;
}

std::vector<std::uint32_t> cc_new_ids(int level) {
    check_level(level);
    if (level <= 1) {
        if (level == 0) return cc_node_ids(0);
        return {static_cast<std::uint32_t>(kLattice), 0};
    }
    std::vector<std::uint32_t> out;
    for (std::int64_t k = (std::int64_t{1} << level) - 1; k >= 1; k -= 2)
        out.push_back(static_cast<std::uint32_t>(k << id_shift(level)));
    return out;
}

double cc_value(std::uint32_t id) {
    return std::sin(M_PI * static_cast<double>(kLattice - 2 * static_cast<std::int64_t>(id)) /
                    static_cast<double>(2 * kLattice));
}

std::size_t Surrogate::sample_count() const {
    std::size_t n = 0;
    for (const auto& [k, v] : terms) n += v.size();
    return n;
}

Point Surrogate::point(const NodeIds& node) const {
    Point p;
    for (std::size_t i = 0; i < dims(); ++i) {
        double t = cc_value(node[i]);
        auto [lo, hi] = bounds[i];
        p[params[i]] = t == 1.0 ? hi : t == -1.0 ? lo : 0.5 * ((1.0 - t) * lo + (1.0 + t) * hi);
    }
    return p;
}

bool downward_closed(const std::vector<MultiIndex>& set) {
    std::set<MultiIndex> all(set.begin(), set.end());
    for (const auto& m : set)
        for (std::size_t i = 0; i < m.size(); ++i) {
            if (m[i] == 0) continue;
            auto b = m;
            --b[i];
            if (!all.count(b)) return false;
        }
    return true;
}

double spi_eval(const Surrogate& s, const Point& p) { return eval_reference(s, to_reference(s, p)); }

void spi_eval_batch(const Surrogate& s, const double* points, std::size_t n, double* out, Exec exec) {
    const std::size_t d = s.dims();
    auto one = [&](std::size_t r) {
        Point p;
        for (std::size_t i = 0; i < d; ++i) p[s.params[i]] = points[r * d + i];
        out[r] = spi_eval(s, p);
    };
    const auto count = static_cast<std::ptrdiff_t>(n);
    if (exec == Exec::Serial) {
        for (std::ptrdiff_t r = 0; r < count; ++r) one(static_cast<std::size_t>(r));
        return;
    }
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 8)
    for (std::ptrdiff_t r = 0; r < count; ++r) {
        try {
            one(static_cast<std::size_t>(r));
        } catch (...) {
#pragma omp critical
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
}

// ---------------------------------------------------------------- text form

std::string surrogate_text(const Surrogate& s) {
    Node doc = Node::map();
    doc.set("observable", Node::str(s.observable));
    Node params = Node::list(), bounds = Node::list(), terms = Node::list();
    for (std::size_t i = 0; i < s.dims(); ++i) {
        params.push_back(Node::str(s.params[i]));
        bounds.push_back(Node::list({Node::floating(s.bounds[i].first), Node::floating(s.bounds[i].second)}));
    }
    for (const auto& idx : s.indices) {
        Node m = Node::list(), ts = Node::list();
        for (int l : idx) m.push_back(Node::integer(l));
        auto it = s.terms.find(idx);
        if (it != s.terms.end())
            for (const auto& t : it->second) {
                Node ids = Node::list();
                for (auto id : t.node) ids.push_back(Node::integer(id));
                ts.push_back(Node::list({ids, Node::floating(t.surplus)}));
            }
        terms.push_back(Node::list({m, ts}));
    }
    doc.set("params", params);
    doc.set("bounds", bounds);
    doc.set("terms", terms);
    return "# sparse polynomial surrogate: [index, [[node ids], surplus]...]\n" + to_notation(doc) + "\n";
}

Surrogate parse_surrogate(std::string_view text) {
    Node doc = parse_notation(text);
    Surrogate s;
    try {
        s.observable = doc.at("observable").as_str();
        for (const auto& p : doc.at("params").items()) s.params.push_back(p.as_str());
        for (const auto& b : doc.at("bounds").items()) s.bounds.emplace_back(b[0].as_number(), b[1].as_number());
        for (const auto& t : doc.at("terms").items()) {
            MultiIndex idx;
            for (const auto& l : t[0].items()) idx.push_back(static_cast<int>(l.as_int()));
            std::vector<SpiTerm> ts;
            for (const auto& term : t[1].items()) {
                SpiTerm st;
                for (const auto& id : term[0].items()) st.node.push_back(static_cast<std::uint32_t>(id.as_int()));
                st.surplus = term[1].as_number();
                ts.push_back(std::move(st));
            }
            s.indices.push_back(idx);
            s.terms[idx] = std::move(ts);
        }
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw Error("bad_surrogate", "malformed surrogate document", {e.what()}, "");
    }
    if (s.bounds.size() != s.params.size() || !downward_closed(s.indices))
        throw Error("bad_surrogate", "malformed surrogate document", {"inconsistent dimensions or index set"}, "");
    return s;
}

// ---------------------------------------------------------------- discovery

SpiDiscovery::SpiDiscovery(SpiSpec spec, BatchProvider provider) : spec_(std::move(spec)), provider_(std::move(provider)) {
    const std::size_t d = spec_.params.size();
    if (d == 0 || spec_.bounds.size() != d)
        throw Error("bad_domain", "one bound pair per parameter is required",
                    {std::to_string(d) + " parameters, " + std::to_string(spec_.bounds.size()) + " bounds"}, "");
    for (std::size_t i = 0; i < d; ++i)
        if (!(spec_.bounds[i].first < spec_.bounds[i].second))
            throw Error("bad_domain", "empty interval for '" + spec_.params[i] + "'", {}, "give lower < upper");
    std::size_t init = 1;
    for (std::size_t i = 0; i < d; ++i) init *= 3;
    if (spec_.budget < init)
        throw Error("bad_budget", "budget below the initial grid", {std::to_string(init) + " samples needed"}, "");
    surrogate_.params = spec_.params;
    surrogate_.bounds = spec_.bounds;
    surrogate_.observable = spec_.observable;
}

std::map<MultiIndex, double> SpiDiscovery::active() const { return indicator_; }

void SpiDiscovery::evaluate(const std::vector<MultiIndex>& batch) {
    // Summits (the all-ones index) go out first as their own call.
    std::vector<std::vector<MultiIndex>> calls;
    MultiIndex ones(spec_.params.size(), 1);
    if (std::find(batch.begin(), batch.end(), ones) != batch.end() && batch.size() > 1) {
        calls.push_back({ones});
        std::vector<MultiIndex> rest;
        for (const auto& m : batch)
            if (m != ones) rest.push_back(m);
        calls.push_back(rest);
    } else {
        calls.push_back(batch);
    }
    std::map<NodeIds, double> samples;
    for (const auto& call : calls) {
        std::vector<NodeIds> nodes;
        std::vector<Point> pts;
        for (const auto& m : call)
            for (auto& n : new_nodes(m)) {
                pts.push_back(surrogate_.point(n));
                nodes.push_back(std::move(n));
            }
        std::vector<double> values = provider_(pts);
        if (values.size() != pts.size())
            throw Error("provider", "provider returned " + std::to_string(values.size()) + " values for " +
                                        std::to_string(pts.size()) + " points");
        report_.batches.push_back(pts);
        for (std::size_t i = 0; i < nodes.size(); ++i) samples[nodes[i]] = values[i];
    }
    // Surpluses in increasing |λ| so each sees every index below it.
    std::vector<MultiIndex> order = batch;
    std::stable_sort(order.begin(), order.end(),
                     [](const MultiIndex& a, const MultiIndex& b) { return level_sum(a) < level_sum(b); });
    for (const auto& m : order) {
        std::vector<SpiTerm> ts;
        double ind = 0.0;
        for (auto& n : new_nodes(m)) {
            std::vector<double> t(n.size());
            for (std::size_t i = 0; i < n.size(); ++i) t[i] = cc_value(n[i]);
            double s = samples.at(n) - eval_reference(surrogate_, t);
            ind += std::abs(s);
            ts.push_back({std::move(n), s});
        }
        surrogate_.indices.push_back(m);
        surrogate_.terms[m] = std::move(ts);
        indicator_[m] = ind;
    }
}

void SpiDiscovery::record(std::size_t samples, MultiIndex added) {
    double mx = 0.0;
    for (const auto& [m, v] : indicator_) mx = std::max(mx, v);
    report_.iterations.push_back({std::move(added), mx, samples});
}

void SpiDiscovery::run() {
    const std::size_t d = spec_.params.size();
    if (surrogate_.indices.empty()) {
        std::vector<MultiIndex> init;
        for (std::size_t mask = 0; mask < (std::size_t{1} << d); ++mask) {
            MultiIndex m(d);
            for (std::size_t i = 0; i < d; ++i) m[i] = (mask >> i) & 1;
            init.push_back(m);
        }
        evaluate(init);
        // The constant term is never refined away.
        accepted_.push_back(MultiIndex(d, 0));
        indicator_.erase(MultiIndex(d, 0));
        record(surrogate_.sample_count(), {});
    }
    for (;;) {
        if (indicator_.empty()) {
            report_.converged = true;
            return;
        }
        double worst = 0.0;
        for (const auto& [m, v] : indicator_) worst = std::max(worst, v);
        if (worst <= spec_.tol) {
            report_.converged = true;
            return;
        }
        // Largest indicator among the active indices whose backward
        // neighbors are all accepted, so the accepted set stays closed.
        std::set<MultiIndex> acc(accepted_.begin(), accepted_.end());
        auto admissible = [&](const MultiIndex& f) {
            for (std::size_t j = 0; j < d; ++j) {
                if (f[j] == 0) continue;
                MultiIndex b = f;
                --b[j];
                if (!acc.count(b)) return false;
            }
            return true;
        };
        auto best = indicator_.end();
        for (auto it = indicator_.begin(); it != indicator_.end(); ++it)
            if (admissible(it->first) && (best == indicator_.end() || it->second > best->second)) best = it;
        MultiIndex chosen = best->first;
        std::set<MultiIndex> known(surrogate_.indices.begin(), surrogate_.indices.end());
        acc.insert(chosen);
        // Admissible forward neighbors of the accepted set through `chosen`.
        std::vector<MultiIndex> batch;
        std::size_t cost = 0;
        for (std::size_t i = 0; i < d; ++i) {
            MultiIndex f = chosen;
            if (++f[i] > kSpiMaxLevel || known.count(f) || !admissible(f)) continue;
            std::size_t n = 1;
            for (int l : f) n *= cc_new_ids(l).size();
            cost += n;
            batch.push_back(f);
        }
        if (surrogate_.sample_count() + cost > spec_.budget) {
            report_.budget_reached = true;
            return;
        }
        if (!batch.empty()) evaluate(batch);
        indicator_.erase(chosen);
        accepted_.push_back(chosen);
        record(surrogate_.sample_count(), chosen);
    }
}

Discovered discover(const SpiSpec& spec, const BatchProvider& provider) {
    SpiDiscovery run(spec, provider);
    run.run();
    return {run.surrogate(), run.report()};
}

}  // namespace ctxdesc
