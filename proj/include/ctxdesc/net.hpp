#pragma once

// Remote access to a script database over TCP, one request per connection.
//
// Frame: 4-byte big-endian length N, then N bytes:
//   VERB "\n" body "\n" sha256-hex(VERB "\n" body)
// Requests: DUMP (key line, view line, dump text), LOAD (key), SEARCH
// (predicate text), CLAIM (key). Responses: OK (payload) or ERR (diagnostic
// as a notation map).

#include <atomic>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "ctxdesc/store.hpp"

namespace ctxdesc {

struct Frame {
    std::string verb;
    std::string body;
    friend bool operator==(const Frame&, const Frame&) = default;
};

std::string encode_frame(const Frame& f);
/// Decodes the bytes after the length prefix; throws "bad_frame".
Frame decode_frame(std::string_view payload);

Frame error_frame(const Diagnostic& d);
Diagnostic diagnostic_from_frame(const Frame& f);

/// Server-side dispatch: the exact response a server on `db` sends.
Frame handle_request(ScriptStore& db, const std::shared_ptr<const ClassRegistry>& registry,
                     const std::shared_ptr<const RuleSet>& rules, const Frame& request);

struct Endpoint {
    std::string host = "127.0.0.1";
    int port = 0;
    static Endpoint parse(std::string_view text);  // "host:port" or "port"
    std::string text() const { return host + ":" + std::to_string(port); }
};

class Server {
public:
    /// Binds and starts serving; port 0 picks a free port.
    Server(std::filesystem::path db_dir, std::shared_ptr<const ClassRegistry> registry,
           std::shared_ptr<const RuleSet> rules, Endpoint endpoint);
    ~Server();
    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    Endpoint endpoint() const { return endpoint_; }
    /// Stops accepting, lets the in-flight request finish, then returns.
    void shutdown();
    std::size_t served() const { return served_; }

private:
    void loop();

    std::filesystem::path db_dir_;
    std::shared_ptr<const ClassRegistry> registry_;
    std::shared_ptr<const RuleSet> rules_;
    Endpoint endpoint_;
    int listen_fd_ = -1;
    std::atomic<bool> stop_{false};
    std::atomic<std::size_t> served_{0};
    std::thread thread_;
};

/// Sends one request and returns the raw response frame. Transport failures
/// throw "transport" with the endpoint in the detail.
Frame roundtrip(const Endpoint& ep, const Frame& request, double timeout_s = 10.0);
/// Raw bytes exchange, for tests of malformed input.
std::string roundtrip_bytes(const Endpoint& ep, const std::string& bytes, double timeout_s = 10.0);

// Client operations mirroring the local store; ERR frames are rethrown as
// Error with the server's diagnostic.
std::string remote_dump(const Endpoint& ep, const Study& study, const ContextRef& ctx,
                        const ViewSpec& view = {}, std::optional<std::string> key = std::nullopt);
Script& remote_load(const Endpoint& ep, Study& study, const std::string& key,
                    std::optional<std::string> ident = std::nullopt);
std::string remote_load_text(const Endpoint& ep, const std::string& key);
std::vector<std::string> remote_db_search(const Endpoint& ep, const std::vector<SearchTerm>& predicate);
bool remote_claim(const Endpoint& ep, const std::string& key);

/// Request frames as the client builds them.
Frame dump_request(const Study& study, const ContextRef& ctx, const ViewSpec& view, std::optional<std::string> key);
Frame load_request(const std::string& key);
Frame search_request(const std::vector<SearchTerm>& predicate);
Frame claim_request(const std::string& key);

}  // namespace ctxdesc
