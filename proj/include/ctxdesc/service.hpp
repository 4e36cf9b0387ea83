#pragma once

// JSON-over-HTTP facade for interactive editing of a study.
//
// Every GUI action is turned into the script statement a console user would
// type, executed by one persistent interpreter and appended to the command
// log. Replaying log() through the script loader rebuilds the session.

#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include <json.hpp>

#include "ctxdesc/rules.hpp"
#include "ctxdesc/script.hpp"

namespace httplib {
class Server;
}

namespace ctxdesc {

using Json = nlohmann::json;

Json to_json(const Value& v);
Json to_json(const Diagnostic& d);
/// Report document plus per-description markers:
/// {"status", "diagnostics", "missing", ..., "markers": {ident: {"red", "green", "folded"}}}.
Json to_json(const CheckReport& r, const Study& study);

/// One editing session. All public calls are serialized by one mutex, so the
/// log order is the application order. Calls throw Error on bad input.
class Session {
public:
    /// The study must outlive the session. A non-empty study seeds the log
    /// with its dump.
    explicit Session(Study& study);

    Json contexts();
    Json context(const std::string& ident);
    Json set(const std::string& ident, const std::string& attr, const Json& value);
    Json unset(const std::string& ident, const std::string& attr);
    /// One console statement.
    Json exec(const std::string& line);
    /// Body: {"context"?, "what_if"?: [{"ident","attr","value"}], "prune"?: "preview"|"confirm"}.
    /// Only the plain check and prune confirmation change the study.
    Json check(const Json& body);
    Json origin(const std::string& ident, const std::string& attr);
    Json man(const std::string& topic);
    Json dump(const std::string& ident);
    std::string log();

    Study& study() { return study_; }

private:
    ScriptHooks hooks();
    Json run_logged(const std::string& line);
    Json fresh_report() const;

    Study& study_;
    Interpreter interp_;
    std::mutex mu_;
    std::string log_;
    std::string output_;                    // hook output of the statement in flight
    std::optional<CheckReport> last_check_;
};

/// Script literal for a JSON value: strings quoted, arrays as lists.
std::string script_literal(const Json& value);

/// Background HTTP server over a session. Port 0 picks a free port.
class ServiceServer {
public:
    ServiceServer(Session& session, const std::string& host = "127.0.0.1", int port = 0);
    ~ServiceServer();
    ServiceServer(const ServiceServer&) = delete;
    ServiceServer& operator=(const ServiceServer&) = delete;

    int port() const { return port_; }
    void stop();
    /// Blocks until stop() is called from another thread.
    void wait();

private:
    Session& session_;
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
    int port_ = 0;
};

}  // namespace ctxdesc
