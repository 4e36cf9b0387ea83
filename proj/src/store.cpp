#include "ctxdesc/store.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <regex>
#include <sstream>
#include <thread>

#include "ctxdesc/script.hpp"

namespace fs = std::filesystem;

namespace ctxdesc {

std::string sha256_hex(std::string_view data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr);
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 15];
    }
    return out;
}

std::string_view job_state_name(JobState s) {
    switch (s) {
    case JobState::NYS: return "NYS";
    case JobState::RUN: return "RUN";
    case JobState::CMP: return "CMP";
    }
    return "?";
}

JobState parse_job_state(std::string_view text) {
    if (text == "NYS") return JobState::NYS;
    if (text == "RUN") return JobState::RUN;
    if (text == "CMP") return JobState::CMP;
    throw Error("bad_job_state", "unknown job state '" + std::string(text) + "'", {}, "use NYS, RUN or CMP");
}

ViewSpec ViewSpec::parse(const std::vector<std::string>& paths) {
    ViewSpec v;
    for (const auto& p : paths) {
        AttrPath ap = AttrPath::parse(p);
        if (ap.cls.empty())
            throw Error("bad_view", "view path '" + p + "' is not class-qualified", {}, "write it as <class>.<attribute>");
        v.attrs.push_back(ap);
    }
    return v;
}

const Value* CatalogEntry::find(std::string_view path) const {
    for (const auto& [p, v] : values)
        if (p == path) return &v;
    return nullptr;
}

CatalogEntry catalog_entry(const Study& study, const ContextRef& ctx, const ViewSpec& view) {
    CatalogEntry e;
    e.key = ctx.ident;
    auto closure = study.closure(ctx);
    for (const auto& path : view.attrs) {
        Value v;
        for (const Description* d : closure) {
            if (d->cls().name != path.cls || !d->cls().attribute(path.attr)) continue;
            v = get_or_deft(study, *d, path.attr, ctx);
            break;
        }
        e.values.emplace_back(path.text(), v);
    }
    return e;
}

// ---------------------------------------------------------------- predicates

namespace {

const std::pair<std::string_view, Comparator> kOps[] = {
    {"==", Comparator::Eq}, {"!=", Comparator::Ne}, {"<=", Comparator::Le}, {">=", Comparator::Ge},
    {"<", Comparator::Lt},  {">", Comparator::Gt},  {"~", Comparator::Match},
};

std::string_view op_text(Comparator c) {
    for (const auto& [t, op] : kOps)
        if (op == c) return t;
    return "?";
}

}  // namespace

std::vector<SearchTerm> parse_predicate(std::string_view text) {
    std::vector<SearchTerm> out;
    std::size_t i = 0;
    auto fail = [&](const std::string& what) -> void {
        throw Error("bad_predicate", what + " at offset " + std::to_string(i), {std::string(text)},
                    "write terms as <class>.<attr> <op> <value> joined by 'and'");
    };
    auto skip = [&] {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    };
    skip();
    while (i < text.size()) {
        SearchTerm t;
        std::size_t s = i;
        while (i < text.size() && (std::isalnum(static_cast<unsigned char>(text[i])) || text[i] == '_' || text[i] == '.')) ++i;
        t.path = std::string(text.substr(s, i - s));
        if (t.path.empty()) fail("expected an attribute path");
        skip();
        bool found = false;
        for (const auto& [tok, op] : kOps) {
            if (text.substr(i, tok.size()) == tok) {
                t.op = op;
                i += tok.size();
                found = true;
                break;
            }
        }
        if (!found) fail("expected a comparator");
        skip();
        s = i;
        if (i < text.size() && (text[i] == '\'' || text[i] == '"')) {
            char q = text[i++];
            while (i < text.size() && text[i] != q) i += text[i] == '\\' ? 2 : 1;
            if (i >= text.size()) fail("unterminated string");
            ++i;
        } else {
            while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        }
        try {
            t.value = parse_notation(text.substr(s, i - s)).to_value();
        } catch (const std::exception&) {
            fail("expected a scalar value");
        }
        out.push_back(std::move(t));
        skip();
        if (i == text.size()) break;
        if (text.substr(i, 3) != "and") fail("expected 'and'");
        i += 3;
        skip();
        if (i == text.size()) fail("dangling 'and'");
    }
    return out;
}

std::string predicate_text(const std::vector<SearchTerm>& terms) {
    std::string out;
    for (const auto& t : terms) {
        if (!out.empty()) out += " and ";
        out += t.path + " " + std::string(op_text(t.op)) + " " + t.value.repr();
    }
    return out;
}

bool term_holds(const SearchTerm& t, const Value& v) {
    switch (t.op) {
    case Comparator::Eq: return loosely_equal(v, t.value);
    case Comparator::Ne: return !loosely_equal(v, t.value);
    case Comparator::Match:
        return v.is_str() && t.value.is_str() && std::regex_match(v.as_str(), std::regex(t.value.as_str()));
    default: break;
    }
    auto c = compare_values(v, t.value);
    if (!c) return false;
    switch (t.op) {
    case Comparator::Lt: return *c < 0;
    case Comparator::Le: return *c <= 0;
    case Comparator::Gt: return *c > 0;
    case Comparator::Ge: return *c >= 0;
    default: return false;
    }
}

// ---------------------------------------------------------------- files

namespace {

void write_atomic(const fs::path& path, const std::string& content) {
    std::ostringstream tmpname;
    tmpname << path.filename().string() << ".tmp." << ::getpid() << "." << std::this_thread::get_id();
    fs::path tmp = path.parent_path() / tmpname.str();
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("io", "cannot write '" + tmp.string() + "'", {}, "check directory permissions");
        out << content;
        out.flush();
        if (!out) throw Error("io", "short write to '" + tmp.string() + "'", {}, "check free disk space");
    }
    fs::rename(tmp, path);
}

std::string read_or_empty(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return {};
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

bool valid_key(const std::string& key) {
    static const std::regex re("[A-Za-z0-9_@][A-Za-z0-9_@.\\-]*");
    return std::regex_match(key, re);
}

constexpr std::string_view kViewHeader = "# view: ";

template <class Snap>
std::vector<std::string> snapshot_keys(const Snap& s) {
    std::vector<std::string> out;
    for (const auto& [k, _] : s.jobs) out.push_back(k);
    return out;
}

}  // namespace

class ScriptStore::Guard {
public:
    Guard(const ScriptStore& s, bool exclusive) : store_(s), lock_(*s.mutex_) {
        if (s.lock_fd_ < 0) return;
        auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(s.lock_timeout);
        int how = (exclusive ? LOCK_EX : LOCK_SH) | LOCK_NB;
        while (::flock(s.lock_fd_, how) != 0) {
            if (std::chrono::steady_clock::now() > deadline)
                throw Error("lock_timeout", "could not lock database '" + s.dir_.string() + "'", {},
                            "another process holds the lock; retry later");
            std::this_thread::sleep_for(std::chrono::milliseconds(1));
        }
        held_ = true;
    }
    ~Guard() {
        if (held_) ::flock(store_.lock_fd_, LOCK_UN);
    }

private:
    const ScriptStore& store_;
    std::lock_guard<std::mutex> lock_;
    bool held_ = false;
};

ScriptStore::ScriptStore(fs::path dir, StoreMode mode)
    : dir_(std::move(dir)), mode_(mode), mutex_(std::make_unique<std::mutex>()) {
    if (mode_ == StoreMode::Execution) {
        lock_fd_ = ::open((dir_ / "LOCK").c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
        if (lock_fd_ < 0)
            throw Error("io", "cannot open lock file in '" + dir_.string() + "'", {}, "check directory permissions");
    }
}

ScriptStore::ScriptStore(ScriptStore&& o) noexcept
    : lock_timeout(o.lock_timeout), dir_(std::move(o.dir_)), mode_(o.mode_), lock_fd_(o.lock_fd_),
      mutex_(std::move(o.mutex_)) {
    o.lock_fd_ = -1;
}

ScriptStore& ScriptStore::operator=(ScriptStore&& o) noexcept {
    if (this != &o) {
        if (lock_fd_ >= 0) ::close(lock_fd_);
        dir_ = std::move(o.dir_);
        mode_ = o.mode_;
        lock_fd_ = o.lock_fd_;
        mutex_ = std::move(o.mutex_);
        lock_timeout = o.lock_timeout;
        o.lock_fd_ = -1;
    }
    return *this;
}

ScriptStore::~ScriptStore() {
    if (lock_fd_ >= 0) ::close(lock_fd_);
}

ScriptStore ScriptStore::create(const fs::path& dir, const ViewSpec& view) {
    if (view.empty()) throw Error("empty_view", "view must be declared", {}, "pass at least one <class>.<attribute> path");
    fs::create_directories(dir / "records");
    ScriptStore s(dir, StoreMode::Execution);
    Guard g(s, true);
    Snapshot snap = s.read_snapshot();
    snap.view = view;
    s.write_catalog(snap);
    s.write_jobs(snap);
    return s;
}

ScriptStore ScriptStore::open(const fs::path& dir, StoreMode mode) {
    if (!fs::exists(dir / "catalog") || !fs::is_directory(dir / "records"))
        throw Error("no_database", "'" + dir.string() + "' is not a script database", {},
                    "create it first (db init)");
    return ScriptStore(dir, mode);
}

void ScriptStore::require_writable(std::string_view op) const {
    if (mode_ == StoreMode::Definitions)
        throw Error("read_only", std::string(op) + " refused: database opened for definitions (read-only)", {dir_.string()},
                    "open the database in execution mode");
}

void ScriptStore::unknown_key(const std::string& key) const { unknown_key(key, keys()); }

void ScriptStore::unknown_key(const std::string& key, const std::vector<std::string>& ks) const {
    std::string near = nearest_name(key, ks);
    throw Error("unknown_key", "no record '" + key + "' in database", {dir_.string()},
                near.empty() ? "list the keys with db list" : "did you mean '" + near + "'?");
}

void ScriptStore::check_key(const std::string& key) const {
    if (!valid_key(key))
        throw Error("bad_key", "invalid record key '" + key + "'", {}, "keys use letters, digits, '_', '@', '.', '-'");
}

ScriptStore::Snapshot ScriptStore::read_snapshot() const {
    Snapshot s;
    std::istringstream cat(read_or_empty(dir_ / "catalog"));
    for (std::string line; std::getline(cat, line);) {
        if (line.empty()) continue;
        if (line.rfind(kViewHeader, 0) == 0) {
            Node paths = parse_notation(line.substr(kViewHeader.size()));
            for (const auto& p : paths.items()) s.view.attrs.push_back(AttrPath::parse(p.as_str()));
            continue;
        }
        auto t1 = line.find('\t');
        auto t2 = line.find('\t', t1 + 1);
        if (t1 == std::string::npos || t2 == std::string::npos)
            throw Error("corrupt_catalog", "malformed catalog line", {line}, "re-dump the scripts to rebuild the catalog");
        CatalogEntry e;
        e.key = line.substr(0, t1);
        Node vals = parse_notation(line.substr(t1 + 1, t2 - t1 - 1));
        for (std::size_t i = 0; i < vals.keys().size(); ++i)
            e.values.emplace_back(vals.keys()[i].as_str(), vals.value_at(i).to_value());
        Node tags = parse_notation(line.substr(t2 + 1));
        for (std::size_t i = 0; i < tags.keys().size(); ++i) e.tags[tags.keys()[i].as_str()] = tags.value_at(i).as_str();
        s.catalog.push_back(std::move(e));
    }
    std::istringstream jobs(read_or_empty(dir_ / "jobs"));
    for (std::string line; std::getline(jobs, line);) {
        auto sp = line.rfind(' ');
        if (sp == std::string::npos) continue;
        s.jobs[line.substr(0, sp)] = parse_job_state(line.substr(sp + 1));
    }
    return s;
}

void ScriptStore::write_catalog(const Snapshot& s) const {
    Node paths = Node::list();
    for (const auto& p : s.view.attrs) paths.push_back(Node::str(p.text()));
    std::string out = std::string(kViewHeader) + to_notation(paths) + "\n";
    for (const auto& e : s.catalog) {
        Node vals = Node::map();
        for (const auto& [p, v] : e.values) vals.set(p, Node::from_value(v));
        Node tags = Node::map();
        for (const auto& [k, v] : e.tags) tags.set(k, Node::str(v));
        out += e.key + "\t" + to_notation(vals) + "\t" + to_notation(tags) + "\n";
    }
    write_atomic(dir_ / "catalog", out);
}

void ScriptStore::write_jobs(const Snapshot& s) const {
    std::string out;
    for (const auto& [k, st] : s.jobs) out += k + " " + std::string(job_state_name(st)) + "\n";
    write_atomic(dir_ / "jobs", out);
}

ViewSpec ScriptStore::view() const {
    Guard g(*this, false);
    return read_snapshot().view;
}

void ScriptStore::set_view(const ViewSpec& view) {
    require_writable("set_view");
    if (view.empty()) throw Error("empty_view", "view must be declared", {}, "pass at least one <class>.<attribute> path");
    Guard g(*this, true);
    Snapshot s = read_snapshot();
    s.view = view;
    write_catalog(s);
}

std::string ScriptStore::dump(const Study& study, const ContextRef& ctx, std::optional<std::string> key) {
    require_writable("dump");
    std::string k = key ? *key : ctx.ident;
    check_key(k);
    std::string text = dump_text(study, ctx);
    Guard g(*this, true);
    Snapshot s = read_snapshot();
    if (s.view.empty()) throw Error("empty_view", "view must be declared", {}, "declare the view with db init --view");
    CatalogEntry e = catalog_entry(study, ctx, s.view);
    e.key = k;
    write_atomic(dir_ / "records" / (k + ".rec"), "sha256:" + sha256_hex(text) + "\n" + text);
    auto it = std::lower_bound(s.catalog.begin(), s.catalog.end(), k,
                               [](const CatalogEntry& a, const std::string& b) { return a.key < b; });
    if (it != s.catalog.end() && it->key == k) {
        e.tags = it->tags;
        if (*it != e) {
            *it = e;
            write_catalog(s);
        }
    } else {
        s.catalog.insert(it, e);
        write_catalog(s);
    }
    if (!s.jobs.count(k)) {
        s.jobs[k] = JobState::NYS;
        write_jobs(s);
    }
    return k;
}

std::string ScriptStore::load_text(const std::string& key) const {
    check_key(key);
    std::string raw;
    {
        Guard g(*this, false);
        raw = read_or_empty(dir_ / "records" / (key + ".rec"));
    }
    if (raw.empty()) unknown_key(key);
    auto nl = raw.find('\n');
    std::string head = raw.substr(0, nl);
    std::string text = nl == std::string::npos ? std::string() : raw.substr(nl + 1);
    if (head.rfind("sha256:", 0) != 0 || head.substr(7) != sha256_hex(text))
        throw Error("corrupt_record", "record '" + key + "' fails its digest check", {dir_.string()},
                    "re-dump the script from its source");
    return text;
}

Script& ScriptStore::load(Study& study, const std::string& key, std::optional<std::string> ident,
                          std::string_view parent) const {
    std::string text = load_text(key);
    return load_dump_text(study, text, ident ? *ident : key, parent);
}

std::vector<std::string> ScriptStore::keys() const {
    std::vector<std::string> out;
    for (const auto& e : catalog()) out.push_back(e.key);
    return out;
}

bool ScriptStore::contains(const std::string& key) const {
    Guard g(*this, false);
    return read_snapshot().jobs.count(key) > 0;
}

std::vector<CatalogEntry> ScriptStore::catalog() const {
    Guard g(*this, false);
    return read_snapshot().catalog;
}

CatalogEntry ScriptStore::entry(const std::string& key) const {
    for (auto& e : catalog())
        if (e.key == key) return e;
    unknown_key(key);
}

std::vector<std::string> ScriptStore::search(const std::vector<SearchTerm>& predicate) const {
    Snapshot s;
    {
        Guard g(*this, false);
        s = read_snapshot();
    }
    for (const auto& t : predicate) {
        bool known = std::any_of(s.view.attrs.begin(), s.view.attrs.end(), [&](const AttrPath& p) { return p.text() == t.path; });
        if (!known) {
            std::vector<std::string> paths;
            for (const auto& p : s.view.attrs) paths.push_back(p.text());
            std::string near = nearest_name(t.path, paths);
            throw Error("path_outside_view", "'" + t.path + "' is not in the catalog view",
                        near.empty() ? std::vector<std::string>{} : std::vector<std::string>{"closest view path: " + near},
                        "extend the view and re-catalog");
        }
    }
    std::vector<std::string> out;
    for (const auto& e : s.catalog) {
        bool ok = std::all_of(predicate.begin(), predicate.end(), [&](const SearchTerm& t) {
            const Value* v = e.find(t.path);
            return term_holds(t, v ? *v : Value());
        });
        if (ok) out.push_back(e.key);
    }
    return out;
}

void ScriptStore::set_tags(const std::string& key, const std::map<std::string, std::string>& tags) {
    require_writable("set_tags");
    Guard g(*this, true);
    Snapshot s = read_snapshot();
    for (auto& e : s.catalog) {
        if (e.key != key) continue;
        for (const auto& [k, v] : tags) e.tags[k] = v;
        write_catalog(s);
        return;
    }
    unknown_key(key, snapshot_keys(s));
}

JobState ScriptStore::job_state(const std::string& key) const {
    auto js = jobs();
    auto it = js.find(key);
    if (it == js.end()) unknown_key(key);
    return it->second;
}

std::map<std::string, JobState> ScriptStore::jobs() const {
    Guard g(*this, false);
    return read_snapshot().jobs;
}

void ScriptStore::set_job_state(const std::string& key, JobState st) {
    require_writable("set_job_state");
    Guard g(*this, true);
    Snapshot s = read_snapshot();
    auto it = s.jobs.find(key);
    if (it == s.jobs.end()) unknown_key(key, snapshot_keys(s));
    JobState from = it->second;
    bool legal = (from == JobState::NYS && st == JobState::RUN) || (from == JobState::RUN && st == JobState::CMP);
    if (!legal)
        throw Error("illegal_transition",
                    "job '" + key + "' cannot go from " + std::string(job_state_name(from)) + " to " +
                        std::string(job_state_name(st)),
                    {}, from == JobState::RUN ? "use clean() to reset running jobs" : "legal moves are NYS→RUN and RUN→CMP");
    it->second = st;
    write_jobs(s);
}

bool ScriptStore::claim(const std::string& key) {
    require_writable("claim");
    Guard g(*this, true);
    Snapshot s = read_snapshot();
    auto it = s.jobs.find(key);
    if (it == s.jobs.end()) unknown_key(key, snapshot_keys(s));
    if (it->second != JobState::NYS) return false;
    it->second = JobState::RUN;
    write_jobs(s);
    return true;
}

std::optional<std::string> ScriptStore::claim_next() {
    require_writable("claim");
    Guard g(*this, true);
    Snapshot s = read_snapshot();
    for (auto& [k, st] : s.jobs) {
        if (st != JobState::NYS) continue;
        st = JobState::RUN;
        write_jobs(s);
        return k;
    }
    return std::nullopt;
}

void ScriptStore::clean() {
    require_writable("clean");
    Guard g(*this, true);
    Snapshot s = read_snapshot();
    bool changed = false;
    for (auto& [k, st] : s.jobs) {
        if (st == JobState::RUN) {
            st = JobState::NYS;
            changed = true;
        }
    }
    if (changed) write_jobs(s);
}

void ScriptStore::release(const std::string& key) {
    require_writable("release");
    Guard g(*this, true);
    Snapshot s = read_snapshot();
    auto it = s.jobs.find(key);
    if (it == s.jobs.end()) unknown_key(key, snapshot_keys(s));
    if (it->second != JobState::RUN)
        throw Error("illegal_transition", "job '" + key + "' is not running", {"state " + std::string(job_state_name(it->second))});
    it->second = JobState::NYS;
    write_jobs(s);
}

void ScriptStore::complete(const std::string& key, const std::map<std::string, std::string>& tags) {
    require_writable("complete");
    Guard g(*this, true);
    Snapshot s = read_snapshot();
    auto it = s.jobs.find(key);
    if (it == s.jobs.end()) unknown_key(key, snapshot_keys(s));
    if (it->second != JobState::RUN)
        throw Error("illegal_transition",
                    "job '" + key + "' cannot go from " + std::string(job_state_name(it->second)) + " to CMP", {},
                    "claim the job first");
    for (auto& e : s.catalog)
        if (e.key == key)
            for (const auto& [k, v] : tags) e.tags[k] = v;
    write_catalog(s);
    it->second = JobState::CMP;
    write_jobs(s);
}

}  // namespace ctxdesc
