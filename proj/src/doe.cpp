#include "ctxdesc/doe.hpp"

#include <algorithm>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <fstream>
#include <functional>
#include <mutex>
#include <set>
#include <thread>

#include "ctxdesc/script.hpp"

namespace fs = std::filesystem;

namespace ctxdesc {

namespace {

[[noreturn]] void dimension_mismatch(const DoEPoint& p, const ChainPolicy& policy) {
    std::vector<std::string> want, have;
    for (const auto& [k, w] : policy.weights) want.push_back(k);
    for (const auto& [k, v] : p.coords) have.push_back(k);
    auto join = [](const std::vector<std::string>& v) {
        std::string s;
        for (const auto& x : v) s += (s.empty() ? "" : ", ") + x;
        return "(" + s + ")";
    };
    throw Error("dimension_mismatch", "point '" + p.key + "' does not match the metric",
                {"weights over " + join(want), "point over " + join(have)}, "give one weight per parameter");
}

void check_dims(const DoEPoint& p, const ChainPolicy& policy) {
    if (p.coords.size() != policy.weights.size()) dimension_mismatch(p, policy);
    auto a = p.coords.begin();
    for (auto b = policy.weights.begin(); b != policy.weights.end(); ++a, ++b)
        if (a->first != b->first) dimension_mismatch(p, policy);
}

std::vector<double> dense(const DoEPoint& p) {
    std::vector<double> v;
    for (const auto& [k, x] : p.coords) v.push_back(x);
    return v;
}

std::string tag_double(double v) { return format_float(v); }

double untag_double(const std::string& s) { return std::stod(s); }

constexpr std::string_view kDoeTag = "doe.";
constexpr std::string_view kObsTag = "obs.";

}  // namespace

void ChainPolicy::validate() const {
    for (const auto& [k, w] : weights)
        if (!(w > 0.0))
            throw Error("bad_policy", "weight of '" + k + "' must be positive", {"weight " + format_float(w)});
    if (max_jump < 0.0 || std::isnan(max_jump))
        throw Error("bad_policy", "max_jump must be positive", {"max_jump " + format_float(max_jump)},
                    "use 0 to disable linearization");
    for (const auto& t : pairing) {
        auto dot = t.path.find('.');
        std::string head = t.path.substr(0, dot);
        if (dot == std::string::npos || (head != "src" && head != "dst" && head != "delta"))
            throw Error("bad_pairing", "pairing term '" + t.path + "' names no side", {},
                        "prefix parameters with src., dst. or delta.");
    }
}

double weighted_distance(const DoEPoint& a, const DoEPoint& b, const ChainPolicy& policy) {
    check_dims(a, policy);
    check_dims(b, policy);
    std::vector<double> w;
    for (const auto& [k, x] : policy.weights) w.push_back(x);
    auto pa = dense(a), pb = dense(b);
    double d2 = 0;
    weighted_sq_distances(pa.data(), pb.data(), w.data(), 1, w.size(), &d2, Exec::Serial);
    return std::sqrt(d2);
}

bool pairing_allows(const ChainPolicy& policy, const DoEPoint& src, const DoEPoint& dst) {
    for (const auto& t : policy.pairing) {
        auto dot = t.path.find('.');
        std::string side = t.path.substr(0, dot), param = t.path.substr(dot + 1);
        auto s = src.coords.find(param), d = dst.coords.find(param);
        if (s == src.coords.end() || d == dst.coords.end()) return false;
        double v = side == "src" ? s->second : side == "dst" ? d->second : d->second - s->second;
        if (!term_holds(t, Value(v))) return false;
    }
    return true;
}

void weighted_sq_distances(const double* target, const double* rows, const double* weights, std::size_t n,
                           std::size_t d, double* out, Exec exec) {
    const auto count = static_cast<std::ptrdiff_t>(n);
    if (exec == Exec::Serial) {
        for (std::ptrdiff_t i = 0; i < count; ++i) {
            double s = 0;
            for (std::size_t j = 0; j < d; ++j) {
                double diff = rows[i * d + j] - target[j];
                s += weights[j] * diff * diff;
            }
            out[i] = s;
        }
        return;
    }
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
        double s = 0;
        for (std::size_t j = 0; j < d; ++j) {
            double diff = rows[i * d + j] - target[j];
            s += weights[j] * diff * diff;
        }
        out[i] = s;
    }
}

std::optional<DoEPoint> nearest_source(const DoEPoint& target, const std::vector<DoEPoint>& completed,
                                       const ChainPolicy& policy, Exec exec) {
    check_dims(target, policy);
    std::vector<const DoEPoint*> eligible;
    for (const auto& p : completed) {
        check_dims(p, policy);
        if (pairing_allows(policy, p, target)) eligible.push_back(&p);
    }
    if (eligible.empty()) return std::nullopt;
    const std::size_t d = policy.weights.size();
    std::vector<double> w, rows, dist(eligible.size());
    for (const auto& [k, x] : policy.weights) w.push_back(x);
    rows.reserve(eligible.size() * d);
    for (const DoEPoint* p : eligible)
        for (const auto& [k, x] : p->coords) rows.push_back(x);
    auto t = dense(target);
    weighted_sq_distances(t.data(), rows.data(), w.data(), eligible.size(), d, dist.data(), exec);
    std::size_t best = 0;
    for (std::size_t i = 1; i < eligible.size(); ++i)
        if (dist[i] < dist[best] || (dist[i] == dist[best] && eligible[i]->key < eligible[best]->key)) best = i;
    return *eligible[best];
}

std::vector<DoEPoint> linearize(const DoEPoint& src, const DoEPoint& dst, const ChainPolicy& policy) {
    if (policy.max_jump <= 0.0) return {};
    double d = weighted_distance(src, dst, policy);
    if (d <= policy.max_jump) return {};
    auto n = static_cast<long>(std::ceil(d / policy.max_jump));
    for (;; ++n) {
        // Rounding can push a hop a few ulps over the bound; one more split fixes it.
        std::vector<DoEPoint> out;
        for (long k = 1; k < n; ++k) {
            DoEPoint p;
            p.key = dst.key + ".lin" + std::to_string(k);
            for (const auto& [name, s] : src.coords) p.coords[name] = s + (dst.coords.at(name) - s) * k / n;
            out.push_back(std::move(p));
        }
        const DoEPoint* prev = &src;
        bool ok = true;
        for (const auto& p : out) {
            ok = ok && weighted_distance(*prev, p, policy) <= policy.max_jump;
            prev = &p;
        }
        if (ok && weighted_distance(*prev, dst, policy) <= policy.max_jump) return out;
    }
}

SwarmSpec SwarmSpec::max_jobs(int n) {
    if (n < 1) throw Error("bad_swarm", "max jobs must be at least 1", {"got " + std::to_string(n)});
    return {Kind::MaxJobs, n, 1.0};
}

SwarmSpec SwarmSpec::node_fraction(double f) {
    if (!(f > 0.0 && f <= 1.0))
        throw Error("bad_swarm", "node fraction must lie in (0, 1]", {"got " + format_float(f)});
    return {Kind::NodeFraction, 1, f};
}

int SwarmSpec::resolve(unsigned cores) const {
    if (kind == Kind::MaxJobs) return std::max(1, count);
    if (cores == 0) cores = std::max(1u, std::thread::hardware_concurrency());
    return std::max(1, static_cast<int>(std::floor(fraction * cores)));
}

// ---------------------------------------------------------------- variator

namespace {

const Description* first_of_class(const Study& s, const std::string& script, const std::string& cls) {
    for (const Description* d : s.closure(script_ref(script)))
        if (d->cls().name == cls) return d;
    return nullptr;
}

void check_parameter(const Study& s, const std::string& script, const std::string& param) {
    AttrPath path = AttrPath::parse(param);
    if (path.cls.empty())
        throw Error("bad_parameter", "parameter '" + param + "' must be class-qualified", {}, "write <class>.<attribute>");
    const Description* d = first_of_class(s, script, path.cls);
    if (!d)
        throw Error("bad_parameter", "no description of class '" + path.cls + "' in script '" + script + "'",
                    {"parameter " + param});
    if (!d->cls().attribute(path.attr)) {
        std::vector<std::string> names;
        names = d->cls().attribute_names();
        auto near = nearest_name(path.attr, names);
        throw Error("bad_parameter", "class '" + path.cls + "' has no attribute '" + path.attr + "'", {},
                    near.empty() ? "" : "did you mean '" + path.cls + "." + near + "'?");
    }
}

bool is_file_path(const AttributeDef& def) {
    const auto& c = def.domain.checkers;
    return std::find(c.begin(), c.end(), "file_path") != c.end();
}

std::string derived_key(const std::string& base, std::size_t i, std::size_t n) {
    std::string idx = std::to_string(i);
    std::size_t width = std::max<std::size_t>(3, std::to_string(n).size());
    return base + "_" + std::string(width - std::min(width, idx.size()), '0') + idx;
}

// Fresh study holding the base script re-created under `key`.
Study variant(const Study& base, const std::string& text, const std::string& key, const DoEPoint& p,
              const fs::path& base_dir) {
    Study v(base.registry_ptr(), base.rules_ptr());
    Script& sc = load_dump_text(v, text, key);
    for (const auto& [param, x] : p.coords) {
        AttrPath path = AttrPath::parse(param);
        auto* d = v.find_description(first_of_class(v, key, path.cls)->ident());
        v.set(*d, path.attr, Value(x));
    }
    for (const Description* cd : v.closure(script_ref(key))) {
        Description& d = v.description(cd->ident());
        for (const auto& b : d.bindings()) {
            if (b.origin.kind != Origin::Kind::User || !b.value.is_str()) continue;
            const AttributeDef* def = d.cls().attribute(b.attr);
            if (!def || !is_file_path(*def) || fs::path(b.value.as_str()).is_absolute()) continue;
            v.set(d, b.attr, Value((base_dir / key / b.value.as_str()).string()));
        }
    }
    bool has_compute = false;
    for (const auto& op : sc.pending_ops()) has_compute = has_compute || op.kind == PendingOp::Kind::Compute;
    if (!has_compute) sc.add_pending(PendingOp{});
    return v;
}

std::map<std::string, std::string> doe_tags(const DoEPoint& p) {
    std::map<std::string, std::string> t;
    for (const auto& [k, v] : p.coords) t[std::string(kDoeTag) + k] = tag_double(v);
    return t;
}

}  // namespace

std::vector<std::string> variator_build(const Study& base, const std::string& base_script,
                                        const std::vector<DoEPoint>& points, ScriptStore& db, const fs::path& base_dir) {
    for (const auto& p : points)
        for (const auto& [param, x] : p.coords) check_parameter(base, base_script, param);
    const std::string text = dump_text(base, script_ref(base_script));
    std::vector<std::string> keys;
    for (std::size_t i = 0; i < points.size(); ++i) {
        std::string key = points[i].key.empty() ? derived_key(base_script, i, points.size()) : points[i].key;
        Study v = variant(base, text, key, points[i], base_dir);
        db.dump(v, script_ref(key), key);
        db.set_tags(key, doe_tags(points[i]));
        keys.push_back(key);
    }
    return keys;
}

DoEPoint doe_point(const CatalogEntry& e) {
    DoEPoint p;
    p.key = e.key;
    for (const auto& [k, v] : e.tags)
        if (k.rfind(kDoeTag, 0) == 0) p.coords[k.substr(kDoeTag.size())] = untag_double(v);
    return p;
}

Observables recorded_observables(const CatalogEntry& e) {
    Observables o;
    for (const auto& [k, v] : e.tags)
        if (k.rfind(kObsTag, 0) == 0) o[k.substr(kObsTag.size())] = untag_double(v);
    return o;
}

// ---------------------------------------------------------------- workers

namespace {

/// Fixed set of threads draining a task queue.
class WorkerPool {
public:
    explicit WorkerPool(int n) {
        for (int i = 0; i < n; ++i) threads_.emplace_back([this] { loop(); });
    }
    ~WorkerPool() {
        {
            std::lock_guard lk(m_);
            stop_ = true;
        }
        cv_.notify_all();
        for (auto& t : threads_) t.join();
    }
    void submit(std::function<void()> f) {
        {
            std::lock_guard lk(m_);
            q_.push_back(std::move(f));
        }
        cv_.notify_one();
    }

private:
    void loop() {
        for (;;) {
            std::function<void()> f;
            {
                std::unique_lock lk(m_);
                cv_.wait(lk, [this] { return stop_ || !q_.empty(); });
                if (q_.empty()) return;
                f = std::move(q_.front());
                q_.pop_front();
            }
            f();
        }
    }
    std::mutex m_;
    std::condition_variable cv_;
    std::deque<std::function<void()>> q_;
    bool stop_ = false;
    std::vector<std::thread> threads_;
};

Observables to_observables(const std::vector<Node>& results) {
    Observables o;
    if (results.empty()) return o;
    const Node& r = results.back();
    if (r.is_number()) {
        o["value"] = r.as_number();
    } else if (r.is_map()) {
        for (std::size_t i = 0; i < r.keys().size(); ++i)
            if (r.value_at(i).is_number()) o[r.keys()[i].as_str()] = r.value_at(i).as_number();
    }
    return o;
}

struct Outcome {
    std::string key;
    std::optional<Observables> obs;
    std::string error;
};

}  // namespace

std::vector<Observables> swarm_evaluate(const SolverKernel& kernel, const std::vector<Point>& points,
                                        const SwarmSpec& swarm) {
    std::vector<Observables> out(points.size());
    std::vector<std::exception_ptr> errors(points.size());
    {
        WorkerPool pool(std::min<int>(swarm.resolve(), std::max<int>(1, static_cast<int>(points.size()))));
        for (std::size_t i = 0; i < points.size(); ++i)
            pool.submit([&, i] {
                try {
                    out[i] = kernel.evaluate(points[i]);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            });
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

// ---------------------------------------------------------------- span

SpanReport span(ScriptStore& db, const SpanOptions& opt) {
    opt.policy.validate();
    if (!opt.registry) throw Error("no_definitions", "span needs the class registry to load records");
    const int limit = opt.swarm.resolve();
    const fs::path work = opt.work_dir.empty() ? db.dir() / "runs" : opt.work_dir;
    const bool chaining = !opt.policy.weights.empty();

    SpanReport report;
    std::mutex m;
    std::condition_variable cv;
    std::deque<Outcome> done;
    std::set<std::string> in_flight;

    auto run_job = [&](const std::string& key, std::optional<Observables> restart) {
        Outcome out{key, std::nullopt, {}};
        try {
            Study s(opt.registry, opt.rules);
            db.load(s, key);
            Runtime rt(s, opt.kernel, *opt.procedures);
            rt.restart = std::move(restart);
            fs::create_directories(work / key);
            Observables o = to_observables(rt.run_pending(key));
            Node n = Node::map();
            for (const auto& [k, v] : o) n.set(k, Node::floating(v));
            std::ofstream(work / key / "observables") << to_notation(n) << "\n";
            out.obs = std::move(o);
        } catch (const Error& e) {
            out.error = e.diagnostic().headline;
        } catch (const std::exception& e) {
            out.error = e.what();
        }
        {
            std::lock_guard lk(m);
            done.push_back(std::move(out));
        }
        cv.notify_one();
    };

    auto failures = [](const CatalogEntry& e) {
        auto it = e.tags.find("failures");
        return it == e.tags.end() ? 0 : std::stoi(it->second);
    };

    // Copies a record under a new key with overridden coordinates.
    auto insert_point = [&](const std::string& from, const DoEPoint& p, const std::string& after) {
        Study s(opt.registry, opt.rules);
        db.load(s, from, p.key);
        for (const auto& [param, x] : p.coords) {
            AttrPath path = AttrPath::parse(param);
            const Description* d = first_of_class(s, p.key, path.cls);
            if (d) s.set(s.description(d->ident()), path.attr, Value(x));
        }
        db.dump(s, script_ref(p.key), p.key);
        auto tags = doe_tags(p);
        tags["after"] = after;
        db.set_tags(p.key, tags);
        report.inserted.push_back(p.key);
    };

    WorkerPool pool(limit);
    for (;;) {
        // Reap finished jobs; the coordinator alone touches the store.
        for (;;) {
            Outcome o;
            {
                std::lock_guard lk(m);
                if (done.empty()) break;
                o = std::move(done.front());
                done.pop_front();
            }
            in_flight.erase(o.key);
            if (o.obs) {
                std::map<std::string, std::string> tags;
                for (const auto& [k, v] : *o.obs) tags[std::string(kObsTag) + k] = tag_double(v);
                if (report.sources.count(o.key)) tags["source"] = report.sources[o.key];
                db.complete(o.key, tags);
                report.computed.push_back(o.key);
            } else {
                int n = failures(db.entry(o.key)) + 1;
                db.set_tags(o.key, {{"failures", std::to_string(n)}, {"error", o.error}});
                db.release(o.key);
                if (n >= 2) report.failed.push_back(o.key);
            }
        }

        auto catalog = db.catalog();
        auto jobs = db.jobs();
        std::map<std::string, const CatalogEntry*> by_key;
        std::vector<DoEPoint> completed;
        for (const auto& e : catalog) {
            by_key[e.key] = &e;
            if (jobs[e.key] != JobState::CMP) continue;
            DoEPoint p = doe_point(e);
            if (chaining && p.coords.size() == opt.policy.weights.size()) {
                bool same = true;
                for (const auto& [k, w] : opt.policy.weights) same = same && p.coords.count(k);
                if (same) completed.push_back(std::move(p));
            }
        }
        bool submitted = false, waiting = false;
        for (const auto& e : catalog) {
            if (static_cast<int>(in_flight.size()) >= limit) break;
            if (jobs[e.key] != JobState::NYS || in_flight.count(e.key) || failures(e) >= 2) continue;
            std::optional<Observables> restart;
            std::string source;
            auto after = e.tags.find("after");
            bool hop_done = false;
            if (after != e.tags.end() && jobs.count(after->second)) {
                const std::string& a = after->second;
                if (jobs[a] == JobState::CMP) {
                    source = a;
                    hop_done = true;
                } else if (in_flight.count(a) || (jobs[a] == JobState::NYS && failures(*by_key[a]) < 2)) {
                    waiting = true;  // an earlier hop is still pending
                    continue;
                }
            }
            if (!hop_done && chaining) {
                DoEPoint target = doe_point(e);
                if (target.coords.size() == opt.policy.weights.size()) {
                    if (auto src = nearest_source(target, completed, opt.policy)) {
                        auto hops = linearize(*src, target, opt.policy);
                        if (!hops.empty() && after == e.tags.end()) {
                            std::string prev = src->key;
                            for (const auto& h : hops) {
                                if (!db.contains(h.key)) insert_point(e.key, h, prev);
                                prev = h.key;
                            }
                            db.set_tags(e.key, {{"after", prev}});
                            submitted = true;  // catalog changed: rescan
                            break;
                        }
                        source = src->key;
                    }
                }
            }
            if (!source.empty()) restart = recorded_observables(*by_key[source]);
            if (!db.claim(e.key)) continue;
            if (!source.empty()) report.sources[e.key] = source;
            in_flight.insert(e.key);
            pool.submit([&run_job, key = e.key, restart] { run_job(key, restart); });
            submitted = true;
        }
        if (submitted) continue;
        if (in_flight.empty()) {
            if (!waiting) break;
            // Waiting on hops claimed elsewhere.
            std::this_thread::sleep_for(std::chrono::milliseconds(20));
            continue;
        }
        std::unique_lock lk(m);
        cv.wait(lk, [&] { return !done.empty(); });
    }

    auto jobs = db.jobs();
    for (const auto& e : db.catalog())
        if (jobs[e.key] == JobState::CMP) report.observables[e.key] = recorded_observables(e);
    return report;
}

}  // namespace ctxdesc
