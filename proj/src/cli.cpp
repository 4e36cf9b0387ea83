#include "ctxdesc/cli.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <sstream>
#include <iostream>
#include <pthread.h>

#include "ctxdesc/docgen.hpp"
#include "ctxdesc/doe.hpp"
#include "ctxdesc/net.hpp"
#include "ctxdesc/service.hpp"
#include "ctxdesc/spi.hpp"

namespace ctxdesc {

namespace fs = std::filesystem;

namespace {

struct Io {
    std::ostream& out;
    std::ostream& err;
    int status = 0;

    void diag(const Diagnostic& d) {
        err << format(d) << "\n";
        if (d.severity == Severity::Error) status = 1;
    }
};

Definitions definitions(const std::string& products) {
    return Definitions::with_products(products.empty() ? shipped_products_dir() : fs::path(products));
}

fs::path manual_path(const std::string& given) {
    return given.empty() ? shipped_products_dir().parent_path() / "resources" / "manual.txt" : fs::path(given);
}

// Blocks SIGINT/SIGTERM in every thread started afterwards; wait_signal()
// then picks them up synchronously.
sigset_t block_signals() {
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);
    return set;
}

void wait_signal(const sigset_t& set) {
    int sig = 0;
    sigwait(&set, &sig);
}

std::vector<double> split_doubles(const std::string& text, char sep = ',') {
    std::vector<double> out;
    std::stringstream ss(text);
    for (std::string item; std::getline(ss, item, sep);) out.push_back(std::stod(item));
    return out;
}

// ---------------------------------------------------------------- run

struct RunFlags {
    std::string script;
    bool check = false;
    bool dump = false;
    bool strict = false;
    bool filter = false;
    bool allow_obsolete = false;
    bool unlock = false;
    bool no_compute = false;
};

void print_report(Io& io, CheckReport rep) {
    for (const auto& d : rep.diagnostics) io.diag(d);
    rep.diagnostics.clear();
    io.out << rep.text();
}

int cmd_run(const RunFlags& f, const std::string& products, Io& io) {
    Definitions defs = definitions(products);
    Study study(defs.registry(), defs.rules());
    study.options = {f.strict, f.filter, f.allow_obsolete, f.unlock};
    CheckOptions copts;
    copts.strict = f.strict;

    ScriptHooks hooks;
    hooks.check = [&](const ContextRef& ctx, bool prune) {
        CheckOptions o = copts;
        o.prune = prune;
        print_report(io, check(study, ctx, o));
    };
    hooks.dump = [&](const ContextRef& ctx, const std::string& path) {
        if (path.empty()) io.out << dump_text(study, ctx);
        else dump_to_file(study, ctx, path);
    };
    hooks.view = [&](const ContextRef& ctx) { io.out << study.view(ctx); };
    hooks.man = [&](const std::string& topic) { io.out << man(study.registry(), *study.rules(), topic) << "\n"; };
    hooks.show_origin = [&](const Description& d, const std::string& attr) {
        io.out << show_origin(study, d, attr).text << "\n";
    };
    load_root(study, f.script, hooks);

    for (Diagnostic d : study.notices) io.diag(f.strict ? escalate(d) : d);
    if (f.check || f.strict) {
        CheckReport rep = check(study, root_ref(), copts);
        bool incomplete = !rep.status;
        print_report(io, rep);
        if (f.strict && incomplete) io.status = 1;
    }
    if (f.dump) io.out << dump_text(study, root_ref());
    if (io.status != 0 || f.no_compute || study.root().pending_ops().empty()) return io.status;

    Runtime rt(study);
    for (const Node& result : rt.run_pending()) io.out << "result: " << to_notation(result) << "\n";
    return io.status;
}

// ---------------------------------------------------------------- db, doe

void print_span(Io& io, const SpanReport& r) {
    for (const auto& key : r.inserted) io.out << "inserted " << key << "\n";
    for (const auto& key : r.computed) {
        io.out << "computed " << key;
        if (auto it = r.sources.find(key); it != r.sources.end()) io.out << " (from " << it->second << ")";
        io.out << "\n";
    }
    for (const auto& [key, obs] : r.observables) {
        io.out << key;
        for (const auto& [name, v] : obs) io.out << " " << name << "=" << Value(v).repr();
        io.out << "\n";
    }
    for (const auto& key : r.failed) {
        io.diag(Error("job_failed", "job '" + key + "' failed twice and stays NYS", {},
                      "inspect " + key + " with 'db load' and re-run span")
                    .diagnostic());
    }
}

std::vector<DoEPoint> grid(const std::vector<std::string>& specs) {
    std::vector<DoEPoint> points{DoEPoint{}};
    for (const auto& spec : specs) {
        auto eq = spec.find('=');
        if (eq == std::string::npos)
            throw Error("bad_grid", "grid axis '" + spec + "' has no values", {}, "write --grid cfdpb.mach=0.5,0.6");
        std::string param = spec.substr(0, eq);
        std::vector<DoEPoint> next;
        for (const auto& p : points)
            for (double v : split_doubles(spec.substr(eq + 1))) {
                DoEPoint q = p;
                q.coords[param] = v;
                next.push_back(q);
            }
        points = std::move(next);
    }
    return points;
}

ChainPolicy chain_policy(const std::vector<std::string>& weights, double max_jump, const std::string& pairing) {
    ChainPolicy p;
    for (const auto& w : weights) {
        auto eq = w.find('=');
        if (eq == std::string::npos)
            throw Error("bad_policy", "weight '" + w + "' is not param=value", {}, "write --weight cfdpb.mach=4");
        p.weights[w.substr(0, eq)] = std::stod(w.substr(eq + 1));
    }
    p.max_jump = max_jump;
    if (!pairing.empty()) p.pairing = parse_predicate(pairing);
    p.validate();
    return p;
}

SwarmSpec swarm_of(int max_jobs, double fraction) {
    return fraction > 0 ? SwarmSpec::node_fraction(fraction) : SwarmSpec::max_jobs(max_jobs);
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    Io io{out, err};
    CLI::App app{"Declarative simulation descriptions: scripts, rules, store and DoE"};
    app.require_subcommand(1);
    std::string products;
    app.add_option("--products", products, "Product manifest directory");

    RunFlags rf;
    auto* run = app.add_subcommand("run", "Run a script");
    run->add_option("script", rf.script)->required()->check(CLI::ExistingFile);
    run->add_flag("--check", rf.check, "check() the root once the script ends");
    run->add_flag("--dump", rf.dump, "dump() the root once the script ends");
    run->add_flag("--strict", rf.strict, "Escalate warnings and check before compute");
    run->add_flag("--filter", rf.filter, "Reject filterable attribute values with a warning");
    run->add_flag("--allow_obsolete", rf.allow_obsolete, "Accept obsolete attributes with a warning");
    run->add_flag("--unlock", rf.unlock, "Accept undocumented attributes");
    run->add_flag("--no-compute", rf.no_compute, "Skip pending compute/extract calls");

    std::string topic;
    auto* man_cmd = app.add_subcommand("man", "Show a manual page");
    man_cmd->add_option("topic", topic)->required();

    std::string db_dir, key, script, predicate, view;
    auto* db = app.add_subcommand("db", "Script database");
    db->require_subcommand(1);
    auto* db_init = db->add_subcommand("init", "Create a database");
    db_init->add_option("dir", db_dir)->required();
    db_init->add_option("--view", view, "Comma separated attribute paths")->required();
    auto* db_dump = db->add_subcommand("dump", "Store a script");
    db_dump->add_option("dir", db_dir)->required();
    db_dump->add_option("script", script)->required()->check(CLI::ExistingFile);
    db_dump->add_option("--key", key);
    auto* db_load = db->add_subcommand("load", "Print a stored script");
    db_load->add_option("dir", db_dir)->required();
    db_load->add_option("key", key)->required();
    auto* db_search = db->add_subcommand("search", "Keys matching a predicate");
    db_search->add_option("dir", db_dir)->required();
    db_search->add_option("predicate", predicate)->required();
    auto* db_clean = db->add_subcommand("clean", "Reset RUN jobs to NYS");
    db_clean->add_option("dir", db_dir)->required();
    auto* db_jobs = db->add_subcommand("jobs", "List job states");
    db_jobs->add_option("dir", db_dir)->required();

    std::vector<std::string> grid_specs;
    std::string base_dir;
    auto* vary = app.add_subcommand("vary", "Store one variant of a script per grid point");
    vary->add_option("dir", db_dir)->required();
    vary->add_option("script", script)->required()->check(CLI::ExistingFile);
    vary->add_option("--grid", grid_specs, "param=v1,v2,... (repeatable)")->required();
    vary->add_option("--base-dir", base_dir, "Root of the per-variant file paths");

    int max_jobs = 1;
    double fraction = 0;
    std::vector<std::string> weights;
    double max_jump = 0;
    std::string pairing, work_dir;
    auto* span_cmd = app.add_subcommand("span", "Run every NYS job of a database");
    span_cmd->add_option("dir", db_dir)->required();
    auto* mj = span_cmd->add_option("--max-jobs", max_jobs, "Concurrent job limit");
    span_cmd->add_option("--node-fraction", fraction, "Concurrent jobs as a fraction of the cores")->excludes(mj);
    span_cmd->add_option("--weight", weights, "param=w (repeatable)");
    span_cmd->add_option("--max-jump", max_jump, "Linearization hop bound; 0 disables");
    span_cmd->add_option("--pairing", pairing, "Source/target predicate on src./dst./delta. paths");
    span_cmd->add_option("--work-dir", work_dir);

    SpiSpec spi;
    spi.params = {"x", "y"};
    std::string bounds = "-1,1,-1,1", surrogate_out;
    int spi_jobs = 1;
    double spi_fraction = 0;
    auto* disc = app.add_subcommand("discover", "Adaptive sparse interpolation of a toy observable");
    disc->add_option("--tol", spi.tol);
    disc->add_option("--budget", spi.budget);
    disc->add_option("--observable", spi.observable);
    disc->add_option("--bounds", bounds, "xmin,xmax,ymin,ymax");
    auto* dj = disc->add_option("--max-jobs", spi_jobs);
    disc->add_option("--node-fraction", spi_fraction)->excludes(dj);
    disc->add_option("-o,--output", surrogate_out, "Surrogate file (default: standard output)");

    std::string host = "127.0.0.1";
    int port = 0;
    auto* serve = app.add_subcommand("serve", "Serve a database over the network");
    serve->add_option("dir", db_dir)->required();
    serve->add_option("--host", host);
    serve->add_option("--port", port);

    auto* serve_ui = app.add_subcommand("serve-ui", "HTTP service for interactive editing");
    serve_ui->add_option("script", script)->check(CLI::ExistingFile);
    serve_ui->add_option("--host", host);
    serve_ui->add_option("--port", port);

    std::string manual_file;
    auto* manual = app.add_subcommand("manual", "Manual maintenance");
    manual->require_subcommand(1);
    auto* skeleton = manual->add_subcommand("skeleton", "Entries missing from the manual");
    skeleton->add_option("--manual", manual_file);
    auto* coherency = manual->add_subcommand("coherency", "Compare the manual with the definitions");
    coherency->add_option("--manual", manual_file);

    std::vector<const char*> argv{"ctxdesc"};
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*run) return cmd_run(rf, products, io);

        Definitions defs = definitions(products);
        if (*man_cmd) {
            out << man(*defs.registry(), *defs.rules(), topic) << "\n";
        } else if (*db_init) {
            ViewSpec v;
            if (!view.empty()) {
                std::vector<std::string> paths;
                std::stringstream ss(view);
                for (std::string p; std::getline(ss, p, ',');) paths.push_back(p);
                v = ViewSpec::parse(paths);
            }
            ScriptStore::create(db_dir, v);
        } else if (*db_dump) {
            Study s(defs.registry(), defs.rules());
            load_root(s, script);
            ScriptStore store = ScriptStore::open(db_dir);
            out << store.dump(s, root_ref(), key.empty() ? fs::path(script).stem().string() : key) << "\n";
        } else if (*db_load) {
            out << ScriptStore::open(db_dir, StoreMode::Definitions).load_text(key);
        } else if (*db_search) {
            for (const auto& k : ScriptStore::open(db_dir, StoreMode::Definitions).search(parse_predicate(predicate)))
                out << k << "\n";
        } else if (*db_clean || *db_jobs) {
            ScriptStore store = ScriptStore::open(db_dir);
            if (*db_clean) store.clean();
            for (const auto& [k, st] : store.jobs()) out << k << " " << job_state_name(st) << "\n";
        } else if (*vary) {
            Study base(defs.registry(), defs.rules());
            std::string ident = fs::path(script).stem().string();
            load_script(base, script, ident);
            ScriptStore store = ScriptStore::open(db_dir);
            fs::path bd = base_dir.empty() ? fs::path(db_dir) / "runs" : fs::path(base_dir);
            for (const auto& k : variator_build(base, ident, grid(grid_specs), store, bd)) out << k << "\n";
        } else if (*span_cmd) {
            ScriptStore store = ScriptStore::open(db_dir);
            SpanOptions o;
            o.registry = defs.registry();
            o.rules = defs.rules();
            o.policy = chain_policy(weights, max_jump, pairing);
            o.swarm = swarm_of(max_jobs, fraction);
            o.work_dir = work_dir;
            print_span(io, ctxdesc::span(store, o));
        } else if (*disc) {
            auto b = split_doubles(bounds);
            if (b.size() != 4)
                throw Error("bad_domain", "--bounds takes four numbers", {}, "write --bounds -1,1,-1,1");
            spi.bounds = {{b[0], b[1]}, {b[2], b[3]}};
            ToyKernel kernel;
            SwarmSpec swarm = swarm_of(spi_jobs, spi_fraction);
            BatchProvider provider = [&](const std::vector<Point>& pts) {
                std::vector<double> values;
                for (const auto& obs : swarm_evaluate(kernel, pts, swarm)) {
                    auto it = obs.find(spi.observable);
                    if (it == obs.end())
                        throw Error("provider", "the kernel has no observable '" + spi.observable + "'", {},
                                    "use --observable f");
                    values.push_back(it->second);
                }
                return values;
            };
            Discovered d = discover(spi, provider);
            const auto& last = d.report.iterations.back();
            out << "samples: " << d.surrogate.sample_count() << "\n"
                << "iterations: " << d.report.iterations.size() << "\n"
                << "max_indicator: " << Value(last.max_indicator).repr() << "\n"
                << "converged: " << (d.report.converged ? "yes" : "no") << "\n";
            if (surrogate_out.empty()) {
                out << surrogate_text(d.surrogate) << "\n";
            } else {
                std::ofstream f(surrogate_out);
                f << surrogate_text(d.surrogate) << "\n";
                if (!f) throw Error("write", "cannot write '" + surrogate_out + "'");
            }
        } else if (*serve) {
            sigset_t set = block_signals();
            Server server(db_dir, defs.registry(), defs.rules(), Endpoint{host, port});
            out << "serving " << db_dir << " on " << server.endpoint().text() << std::endl;
            wait_signal(set);
            server.shutdown();
        } else if (*serve_ui) {
            sigset_t set = block_signals();
            Study study(defs.registry(), defs.rules());
            if (!script.empty()) load_root(study, script);
            Session session(study);
            ServiceServer server(session, host, port);
            out << "service on http://" << host << ":" << server.port() << std::endl;
            wait_signal(set);
            server.stop();
        } else if (*skeleton) {
            Manual m = read_manual(manual_path(manual_file).string());
            out << gen_manual_skeleton(*defs.registry(), *defs.rules(), m);
        } else if (*coherency) {
            CoherencyReport r = check_manual_coherency(*defs.registry(), *defs.rules(),
                                                       read_manual(manual_path(manual_file).string()));
            out << r.text();
            if (!r.empty()) io.status = 1;
        }
    } catch (const ParseError& e) {
        err << "ERROR: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        io.diag(e.diagnostic());
    } catch (const std::exception& e) {
        err << "ERROR: " << e.what() << "\n";
        return 1;
    }
    return io.status;
}

}  // namespace ctxdesc
