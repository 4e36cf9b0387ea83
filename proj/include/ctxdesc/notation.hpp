#pragma once

// Resource data notation: nested maps, sequences and scalars written as
// literals, e.g.
//
//   {'phymod': ["""fluid model""", ['S','I'], {'euler':0,'nslam':1}, [CNTX_DEFV, None]]}
//
// Bare identifiers (CNTX_DEFV, strictly_positive, ...) are kept as symbols.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ctxdesc/value.hpp"

namespace ctxdesc {

struct SourcePos {
    int line = 1;
    int column = 1;
};

class ParseError : public std::runtime_error {
public:
    ParseError(SourcePos pos, std::string token, const std::string& what);
    SourcePos pos;
    std::string token;
};

enum class TokenKind { End, Ident, Str, Int, Float, Punct };

struct Token {
    TokenKind kind = TokenKind::End;
    std::string text;  // identifier, punct, or decoded string contents
    std::int64_t ival = 0;
    double fval = 0.0;
    SourcePos pos;
};

/// Tokenizer shared by the resource notation and the script language.
/// Identifiers may contain '@' (derived identifiers of copied scripts).
class Lexer {
public:
    explicit Lexer(std::string_view src, SourcePos origin = {});
    const Token& peek();
    Token next();
    bool accept(std::string_view punct);
    void expect(std::string_view punct);
    [[noreturn]] void fail(const Token& at, const std::string& what) const;
    bool at_end() { return peek().kind == TokenKind::End; }

private:
    Token scan();
    void skip_space();
    char cur() const { return i_ < src_.size() ? src_[i_] : '\0'; }
    char ahead(std::size_t k) const { return i_ + k < src_.size() ? src_[i_ + k] : '\0'; }
    void advance(std::size_t n = 1);

    std::string_view src_;
    std::size_t i_ = 0;
    SourcePos pos_;
    bool has_peek_ = false;
    Token peeked_;
};

class Node {
public:
    enum class Type { None, Int, Float, Str, Symbol, List, Map };

    Node() = default;
    static Node none() { return Node(); }
    static Node integer(std::int64_t v);
    static Node floating(double v);
    static Node str(std::string v);
    static Node symbol(std::string v);
    static Node list(std::vector<Node> items = {});
    static Node map();
    static Node from_value(const Value& v);

    Type type() const { return type_; }
    bool is_none() const { return type_ == Type::None; }
    bool is_int() const { return type_ == Type::Int; }
    bool is_float() const { return type_ == Type::Float; }
    bool is_number() const { return is_int() || is_float(); }
    bool is_str() const { return type_ == Type::Str; }
    bool is_symbol() const { return type_ == Type::Symbol; }
    bool is_list() const { return type_ == Type::List; }
    bool is_map() const { return type_ == Type::Map; }
    bool is_scalar() const { return is_none() || is_number() || is_str(); }

    std::int64_t as_int() const;
    double as_number() const;
    const std::string& as_str() const;     // Str or Symbol text
    /// Scalar payload as a Value (None -> Undefined). Throws for containers.
    Value to_value() const;

    // list access
    const std::vector<Node>& items() const { return items_; }
    std::vector<Node>& items() { return items_; }
    std::size_t size() const { return items_.size(); }
    const Node& operator[](std::size_t i) const { return items_.at(i); }
    void push_back(Node n) { items_.push_back(std::move(n)); }

    // map access (insertion-ordered)
    const std::vector<Node>& keys() const { return keys_; }
    const Node* find(std::string_view key) const;
    const Node& at(std::string_view key) const;
    void set(Node key, Node value);
    /// Appends without replacing; the parser keeps duplicate keys so that
    /// loaders can report them.
    void append(Node key, Node value);
    void set(std::string key, Node value) { set(Node::str(std::move(key)), std::move(value)); }
    const Node& value_at(std::size_t i) const { return items_.at(i); }

    friend bool operator==(const Node& a, const Node& b);
    friend bool operator!=(const Node& a, const Node& b) { return !(a == b); }

    SourcePos pos;  // where the node started in its source, when parsed

private:
    Type type_ = Type::None;
    std::int64_t i_ = 0;
    double f_ = 0.0;
    std::string s_;
    std::vector<Node> keys_;   // map keys, parallel to items_
    std::vector<Node> items_;  // list items or map values
};

/// Parses one notation document (a single literal, possibly preceded and
/// followed by comments).
Node parse_notation(std::string_view text);
/// Parses one literal from a running lexer.
Node parse_literal(Lexer& lex);

/// Canonical single-line text.
std::string to_notation(const Node& n);
/// Canonical multi-line text: maps nested up to `depth` levels are broken
/// one entry per line.
std::string to_notation_pretty(const Node& n, int depth = 2);

std::string read_text_file(const std::string& path);

}  // namespace ctxdesc
