#pragma once

// The script command language: one statement per line, '#' comments.
//
//   mod1 = model(name='mod1')
//   mod1.set('phymod', 'nslam')
//   cfd1.attach(mod1, num1)
//   sub = load('sub.scr')
//   compute()
//
// There are no loops or tests. compute/extract/set_boot_objt calls are
// recorded as pending operations of the enclosing script; check, view,
// dump and man are forwarded to host hooks.

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ctxdesc/model.hpp"

namespace ctxdesc {

struct ScriptHooks {
    std::function<void(const ContextRef&, bool prune)> check;
    std::function<void(const ContextRef&, const std::string& path)> dump;
    std::function<void(const ContextRef&)> view;
    std::function<void(const std::string& topic)> man;
    std::function<void(const Description&, const std::string& attr)> show_origin;
    /// provide(cls, ident): defaults to get-or-create in the current script.
    std::function<Description&(const std::string& cls, const std::string& ident)> provide;
};

/// Runtime value of a script expression.
struct RtValue {
    enum class Kind { Nothing, Scalar, List, Map, Context, Forward };
    Kind kind = Kind::Nothing;
    Value scalar;
    std::vector<RtValue> items;  // list items or map values
    std::vector<RtValue> keys;   // map keys
    ContextRef ctx{ChildRef::Kind::Description, {}};
    std::string ident;           // for Forward

    static RtValue of(Value v);
    static RtValue context(ContextRef r);
};

class Interpreter {
public:
    explicit Interpreter(Study& study, ScriptHooks hooks = {});

    /// Executes a whole file into an existing script (the root by default).
    void run_file(const std::string& path, std::string_view into_script = Study::kRootIdent);
    /// Executes text into an existing script; `origin` names it in errors.
    void run_text(std::string_view text, std::string_view into_script = Study::kRootIdent,
                  const std::string& origin = "<text>", const std::filesystem::path& base_dir = {});
    /// Creates a nested script from a file.
    Script& load(const std::string& path, std::optional<std::string> ident,
                 std::string_view parent = Study::kRootIdent);
    /// Executes a single statement into the current script.
    void exec_line(std::string_view line);

    bool closed() const { return closed_; }
    const std::map<std::string, RtValue>& variables() const { return vars_; }
    Study& study() { return study_; }

private:
    friend class StatementParser;
    void exec_statement(std::string_view line, int line_no);

    Study& study_;
    ScriptHooks hooks_;
    std::map<std::string, RtValue> vars_;
    std::vector<std::filesystem::path> loading_;  // include stack (canonical paths)
    std::string current_script_;
    std::filesystem::path base_dir_;
    std::string origin_;
    bool closed_ = false;
};

/// Convenience wrappers around Interpreter.
Script& load_script(Study& study, const std::string& path, std::optional<std::string> ident = std::nullopt,
                    std::string_view parent = Study::kRootIdent);
void load_root(Study& study, const std::string& path, ScriptHooks hooks = {});

/// Canonical flat script reproducing a context: creates, user/interface
/// sets, attaches, pending operations. Never emits control structures.
std::string dump_text(const Study& study, const ContextRef& ctx);
void dump_to_file(const Study& study, const ContextRef& ctx, const std::string& path);
/// Re-creates a dumped script in `study` under a new nested script.
Script& load_dump_text(Study& study, std::string_view text, const std::string& ident,
                       std::string_view parent = Study::kRootIdent);

std::string pending_op_text(const PendingOp& op, const std::string& in_script = {});

}  // namespace ctxdesc
