#include "ctxdesc/net.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <cstring>

#include "ctxdesc/script.hpp"

namespace ctxdesc {

namespace {

constexpr std::size_t kMaxFrame = 64u << 20;

[[noreturn]] void bad_frame(const std::string& why) {
    throw Error("bad_frame", "malformed frame: " + why, {}, "send 4-byte length, verb line, body, digest");
}

std::string split_line(std::string_view& rest) {
    auto nl = rest.find('\n');
    std::string line(rest.substr(0, nl));
    rest = nl == std::string_view::npos ? std::string_view() : rest.substr(nl + 1);
    return line;
}

Frame ok(std::string body) { return {"OK", std::move(body)}; }

}  // namespace

std::string encode_frame(const Frame& f) {
    std::string inner = f.verb + "\n" + f.body;
    std::string payload = inner + "\n" + sha256_hex(inner);
    auto n = static_cast<std::uint32_t>(payload.size());
    std::string out(4, '\0');
    out[0] = static_cast<char>(n >> 24);
    out[1] = static_cast<char>(n >> 16);
    out[2] = static_cast<char>(n >> 8);
    out[3] = static_cast<char>(n);
    return out + payload;
}

Frame decode_frame(std::string_view payload) {
    auto last = payload.rfind('\n');
    if (last == std::string_view::npos) bad_frame("no digest line");
    std::string_view inner = payload.substr(0, last);
    if (payload.substr(last + 1) != sha256_hex(inner)) bad_frame("digest mismatch");
    auto nl = inner.find('\n');
    if (nl == std::string_view::npos) bad_frame("no verb line");
    Frame f{std::string(inner.substr(0, nl)), std::string(inner.substr(nl + 1))};
    if (f.verb.empty()) bad_frame("empty verb");
    return f;
}

Frame error_frame(const Diagnostic& d) {
    Node n = Node::map();
    n.set("severity", Node::str(std::string(severity_name(d.severity))));
    n.set("code", Node::str(d.code));
    n.set("headline", Node::str(d.headline));
    Node detail = Node::list();
    for (const auto& l : d.detail) detail.push_back(Node::str(l));
    n.set("detail", detail);
    n.set("suggestion", Node::str(d.suggestion));
    return {"ERR", to_notation(n)};
}

Diagnostic diagnostic_from_frame(const Frame& f) {
    Node n = parse_notation(f.body);
    Diagnostic d;
    d.severity = n.at("severity").as_str() == "WARNING" ? Severity::Warning : Severity::Error;
    d.code = n.at("code").as_str();
    d.headline = n.at("headline").as_str();
    for (const auto& l : n.at("detail").items()) d.detail.push_back(l.as_str());
    d.suggestion = n.at("suggestion").as_str();
    return d;
}

// ---------------------------------------------------------------- requests

Frame dump_request(const Study& study, const ContextRef& ctx, const ViewSpec& view, std::optional<std::string> key) {
    Node paths = Node::list();
    for (const auto& p : view.attrs) paths.push_back(Node::str(p.text()));
    return {"DUMP", (key ? *key : ctx.ident) + "\n" + to_notation(paths) + "\n" + dump_text(study, ctx)};
}

Frame load_request(const std::string& key) { return {"LOAD", key}; }
Frame search_request(const std::vector<SearchTerm>& predicate) { return {"SEARCH", predicate_text(predicate)}; }
Frame claim_request(const std::string& key) { return {"CLAIM", key}; }

Frame handle_request(ScriptStore& db, const std::shared_ptr<const ClassRegistry>& registry,
                     const std::shared_ptr<const RuleSet>& rules, const Frame& req) {
    try {
        if (req.verb == "DUMP") {
            std::string_view rest = req.body;
            std::string key = split_line(rest);
            Node paths = parse_notation(split_line(rest));
            std::vector<std::string> names;
            for (const auto& p : paths.items()) names.push_back(p.as_str());
            if (!names.empty() && ViewSpec::parse(names) != db.view())
                throw Error("view_mismatch", "requested view differs from the database view", {},
                            "send an empty view or re-create the database with this view");
            Study s(registry, rules);
            load_dump_text(s, rest, key);
            return ok(db.dump(s, script_ref(key), key));
        }
        if (req.verb == "LOAD") return ok(db.load_text(req.body));
        if (req.verb == "SEARCH") {
            std::string out;
            for (const auto& k : db.search(parse_predicate(req.body))) out += k + "\n";
            return ok(out);
        }
        if (req.verb == "CLAIM") return ok(db.claim(req.body) ? "1" : "0");
        throw Error("bad_verb", "unknown request verb '" + req.verb + "'", {}, "use DUMP, LOAD, SEARCH or CLAIM");
    } catch (const Error& e) {
        return error_frame(e.diagnostic());
    } catch (const ParseError& e) {
        return error_frame({Severity::Error, "parse", e.what(), {}, "check the request payload"});
    } catch (const std::exception& e) {
        return error_frame({Severity::Error, "internal", e.what(), {}, "report the request that triggered it"});
    }
}

// ---------------------------------------------------------------- sockets

namespace {

[[noreturn]] void transport(const Endpoint& ep, const std::string& what) {
    throw Error("transport", what, {"endpoint " + ep.text()}, "check that the server is running and reachable");
}

bool wait_fd(int fd, short events, double timeout_s) {
    pollfd p{fd, events, 0};
    return ::poll(&p, 1, static_cast<int>(timeout_s * 1000)) > 0;
}

bool send_all(int fd, std::string_view data) {
    while (!data.empty()) {
        ssize_t n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
        if (n <= 0) return false;
        data.remove_prefix(static_cast<std::size_t>(n));
    }
    return true;
}

bool recv_exact(int fd, std::size_t n, std::string& out, double timeout_s) {
    out.resize(n);
    std::size_t got = 0;
    while (got < n) {
        if (!wait_fd(fd, POLLIN, timeout_s)) return false;
        ssize_t r = ::recv(fd, out.data() + got, n - got, 0);
        if (r <= 0) return false;
        got += static_cast<std::size_t>(r);
    }
    return true;
}

/// Reads one length-prefixed payload; nullopt on EOF/timeout, throws on size.
std::optional<std::string> read_payload(int fd, double timeout_s) {
    std::string len;
    if (!recv_exact(fd, 4, len, timeout_s)) return std::nullopt;
    std::uint32_t n = (std::uint32_t(static_cast<unsigned char>(len[0])) << 24) |
                      (std::uint32_t(static_cast<unsigned char>(len[1])) << 16) |
                      (std::uint32_t(static_cast<unsigned char>(len[2])) << 8) | std::uint32_t(static_cast<unsigned char>(len[3]));
    if (n > kMaxFrame) bad_frame("length " + std::to_string(n) + " exceeds limit");
    std::string payload;
    if (!recv_exact(fd, n, payload, timeout_s)) bad_frame("truncated payload");
    return payload;
}

int connect_to(const Endpoint& ep, double timeout_s) {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (::getaddrinfo(ep.host.c_str(), std::to_string(ep.port).c_str(), &hints, &res) != 0 || !res)
        transport(ep, "cannot resolve host");
    int fd = ::socket(res->ai_family, res->ai_socktype | SOCK_CLOEXEC, res->ai_protocol);
    if (fd < 0) {
        ::freeaddrinfo(res);
        transport(ep, "cannot create socket");
    }
    timeval tv{static_cast<time_t>(timeout_s), 0};
    ::setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
    int rc = ::connect(fd, res->ai_addr, res->ai_addrlen);
    ::freeaddrinfo(res);
    if (rc != 0) {
        ::close(fd);
        transport(ep, std::string("connection failed: ") + std::strerror(errno));
    }
    return fd;
}

}  // namespace

Endpoint Endpoint::parse(std::string_view text) {
    Endpoint ep;
    auto colon = text.rfind(':');
    std::string port(colon == std::string_view::npos ? text : text.substr(colon + 1));
    if (colon != std::string_view::npos) ep.host = std::string(text.substr(0, colon));
    try {
        std::size_t used = 0;
        ep.port = std::stoi(port, &used);
        if (used != port.size() || ep.port < 0 || ep.port > 65535) throw std::out_of_range("port");
    } catch (const std::exception&) {
        throw Error("bad_endpoint", "invalid endpoint '" + std::string(text) + "'", {}, "write host:port");
    }
    return ep;
}

std::string roundtrip_bytes(const Endpoint& ep, const std::string& bytes, double timeout_s) {
    int fd = connect_to(ep, timeout_s);
    if (!send_all(fd, bytes)) {
        ::close(fd);
        transport(ep, "send failed");
    }
    ::shutdown(fd, SHUT_WR);
    std::string out;
    char buf[65536];
    while (wait_fd(fd, POLLIN, timeout_s)) {
        ssize_t n = ::recv(fd, buf, sizeof buf, 0);
        if (n <= 0) break;
        out.append(buf, static_cast<std::size_t>(n));
    }
    ::close(fd);
    return out;
}

Frame roundtrip(const Endpoint& ep, const Frame& request, double timeout_s) {
    std::string raw = roundtrip_bytes(ep, encode_frame(request), timeout_s);
    if (raw.size() < 4) transport(ep, "connection closed without a response");
    std::uint32_t n = (std::uint32_t(static_cast<unsigned char>(raw[0])) << 24) |
                      (std::uint32_t(static_cast<unsigned char>(raw[1])) << 16) |
                      (std::uint32_t(static_cast<unsigned char>(raw[2])) << 8) | std::uint32_t(static_cast<unsigned char>(raw[3]));
    if (raw.size() != 4 + std::size_t(n)) transport(ep, "truncated response");
    try {
        return decode_frame(std::string_view(raw).substr(4));
    } catch (const Error& e) {
        transport(ep, e.diagnostic().headline);
    }
}

namespace {

std::string expect_ok(const Frame& f) {
    if (f.verb == "ERR") throw Error(diagnostic_from_frame(f));
    if (f.verb != "OK") throw Error("bad_frame", "unexpected response verb '" + f.verb + "'", {}, "check server version");
    return f.body;
}

}  // namespace

std::string remote_dump(const Endpoint& ep, const Study& study, const ContextRef& ctx, const ViewSpec& view,
                        std::optional<std::string> key) {
    return expect_ok(roundtrip(ep, dump_request(study, ctx, view, std::move(key))));
}

std::string remote_load_text(const Endpoint& ep, const std::string& key) {
    return expect_ok(roundtrip(ep, load_request(key)));
}

Script& remote_load(const Endpoint& ep, Study& study, const std::string& key, std::optional<std::string> ident) {
    return load_dump_text(study, remote_load_text(ep, key), ident ? *ident : key);
}

std::vector<std::string> remote_db_search(const Endpoint& ep, const std::vector<SearchTerm>& predicate) {
    std::string body = expect_ok(roundtrip(ep, search_request(predicate)));
    std::vector<std::string> out;
    std::string_view rest = body;
    while (!rest.empty()) out.push_back(split_line(rest));
    return out;
}

bool remote_claim(const Endpoint& ep, const std::string& key) { return expect_ok(roundtrip(ep, claim_request(key))) == "1"; }

// ---------------------------------------------------------------- server

Server::Server(std::filesystem::path db_dir, std::shared_ptr<const ClassRegistry> registry,
               std::shared_ptr<const RuleSet> rules, Endpoint endpoint)
    : db_dir_(std::move(db_dir)), registry_(std::move(registry)), rules_(std::move(rules)), endpoint_(std::move(endpoint)) {
    ScriptStore::open(db_dir_);  // fail early on a missing database
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
    int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<std::uint16_t>(endpoint_.port));
    if (::inet_pton(AF_INET, endpoint_.host.c_str(), &addr.sin_addr) != 1) addr.sin_addr.s_addr = htonl(INADDR_ANY);
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(listen_fd_, 16) != 0) {
        std::string why = std::strerror(errno);
        ::close(listen_fd_);
        throw Error("bind", "cannot listen on " + endpoint_.text() + ": " + why, {}, "pick another --port");
    }
    socklen_t len = sizeof addr;
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    endpoint_.port = ntohs(addr.sin_port);
    thread_ = std::thread([this] { loop(); });
}

Server::~Server() { shutdown(); }

void Server::shutdown() {
    stop_ = true;
    if (thread_.joinable()) thread_.join();
    if (listen_fd_ >= 0) {
        ::close(listen_fd_);
        listen_fd_ = -1;
    }
}

void Server::loop() {
    ScriptStore db = ScriptStore::open(db_dir_);
    while (!stop_) {
        if (!wait_fd(listen_fd_, POLLIN, 0.05)) continue;
        int fd = ::accept4(listen_fd_, nullptr, nullptr, SOCK_CLOEXEC);
        if (fd < 0) continue;
        Frame resp;
        try {
            auto payload = read_payload(fd, 10.0);
            if (!payload) {
                ::close(fd);
                continue;
            }
            resp = handle_request(db, registry_, rules_, decode_frame(*payload));
        } catch (const Error& e) {
            resp = error_frame(e.diagnostic());
        }
        send_all(fd, encode_frame(resp));
        ::close(fd);
        ++served_;
    }
}

}  // namespace ctxdesc
