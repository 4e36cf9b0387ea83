#pragma once

// Script database: a directory of dumped scripts with a catalog over a
// user-declared view, job states and an advisory lock.
//
//   <dir>/records/<key>.rec   digest line, then the canonical dump text
//   <dir>/catalog             view header, then one entry per key
//   <dir>/jobs                "<key> NYS|RUN|CMP" lines
//   <dir>/LOCK                flock target for read-write handles

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "ctxdesc/model.hpp"
#include "ctxdesc/rules.hpp"

namespace ctxdesc {

enum class JobState { NYS, RUN, CMP };
std::string_view job_state_name(JobState s);
JobState parse_job_state(std::string_view text);

struct ViewSpec {
    std::vector<AttrPath> attrs;
    bool empty() const { return attrs.empty(); }
    static ViewSpec parse(const std::vector<std::string>& paths);
    friend bool operator==(const ViewSpec&, const ViewSpec&) = default;
};

struct CatalogEntry {
    std::string key;
    std::vector<std::pair<std::string, Value>> values;  // view order; Undefined allowed
    std::map<std::string, std::string> tags;

    const Value* find(std::string_view path) const;
    friend bool operator==(const CatalogEntry&, const CatalogEntry&) = default;
};

/// Catalog row of a context: each view path resolved with get_or_deft on the
/// first closure description of the path's class.
CatalogEntry catalog_entry(const Study& study, const ContextRef& ctx, const ViewSpec& view);

enum class Comparator { Eq, Ne, Lt, Le, Gt, Ge, Match };

struct SearchTerm {
    std::string path;
    Comparator op = Comparator::Eq;
    Value value;
    friend bool operator==(const SearchTerm&, const SearchTerm&) = default;
};

/// "model.phymod == 'nslam' and cfdpb.mach < 0.8"; "~" is an anchored regex
/// match on strings. Empty text is the empty conjunction.
std::vector<SearchTerm> parse_predicate(std::string_view text);
std::string predicate_text(const std::vector<SearchTerm>& terms);
bool term_holds(const SearchTerm& t, const Value& v);

enum class StoreMode { Definitions, Execution };

class ScriptStore {
public:
    /// Initializes a database directory (creating it) with a declared view.
    static ScriptStore create(const std::filesystem::path& dir, const ViewSpec& view);
    /// Opens an existing database. Definitions mode is read-only and lock-free.
    static ScriptStore open(const std::filesystem::path& dir, StoreMode mode = StoreMode::Execution);

    ScriptStore(ScriptStore&&) noexcept;
    ScriptStore& operator=(ScriptStore&&) noexcept;
    ~ScriptStore();

    const std::filesystem::path& dir() const { return dir_; }
    StoreMode mode() const { return mode_; }
    ViewSpec view() const;
    /// Replaces the view and re-catalogs nothing; callers re-dump to refresh.
    void set_view(const ViewSpec& view);

    /// Serializes `ctx` under `key` (default: the context identifier),
    /// recomputes its catalog entry and initializes its job state to NYS.
    std::string dump(const Study& study, const ContextRef& ctx, std::optional<std::string> key = std::nullopt);
    /// Verified dump text of a record.
    std::string load_text(const std::string& key) const;
    /// Re-creates the record as a script nested under `parent`.
    Script& load(Study& study, const std::string& key, std::optional<std::string> ident = std::nullopt,
                 std::string_view parent = Study::kRootIdent) const;

    std::vector<std::string> keys() const;
    bool contains(const std::string& key) const;
    std::vector<CatalogEntry> catalog() const;
    CatalogEntry entry(const std::string& key) const;
    std::vector<std::string> search(const std::vector<SearchTerm>& predicate) const;
    void set_tags(const std::string& key, const std::map<std::string, std::string>& tags);

    JobState job_state(const std::string& key) const;
    std::map<std::string, JobState> jobs() const;
    /// Legal transitions: NYS→RUN, RUN→CMP.
    void set_job_state(const std::string& key, JobState s);
    /// Atomic NYS→RUN; false when the job is not NYS.
    bool claim(const std::string& key);
    /// Claims the first NYS job in key order.
    std::optional<std::string> claim_next();
    /// RUN→NYS for every job. Idempotent.
    void clean();
    /// RUN→NYS for one job (a failed attempt handed back).
    void release(const std::string& key);
    /// Merges `tags` and moves RUN→CMP under one lock hold.
    void complete(const std::string& key, const std::map<std::string, std::string>& tags);

    /// Seconds to wait for the lock before failing with "lock_timeout".
    double lock_timeout = 30.0;

private:
    ScriptStore(std::filesystem::path dir, StoreMode mode);

    class Guard;
    void require_writable(std::string_view op) const;
    void check_key(const std::string& key) const;
    [[noreturn]] void unknown_key(const std::string& key) const;
    [[noreturn]] void unknown_key(const std::string& key, const std::vector<std::string>& candidates) const;

    struct Snapshot {
        ViewSpec view;
        std::vector<CatalogEntry> catalog;  // key order
        std::map<std::string, JobState> jobs;
    };
    Snapshot read_snapshot() const;
    void write_catalog(const Snapshot& s) const;
    void write_jobs(const Snapshot& s) const;

    std::filesystem::path dir_;
    StoreMode mode_ = StoreMode::Execution;
    int lock_fd_ = -1;
    mutable std::unique_ptr<std::mutex> mutex_;
};

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);

}  // namespace ctxdesc
