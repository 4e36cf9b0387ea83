#include "ctxdesc/notation.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

namespace ctxdesc {

ParseError::ParseError(SourcePos p, std::string tok, const std::string& what)
    : std::runtime_error("parse error at line " + std::to_string(p.line) + ", column " +
                         std::to_string(p.column) + " near '" + tok + "': " + what),
      pos(p),
      token(std::move(tok)) {}

Lexer::Lexer(std::string_view src, SourcePos origin) : src_(src), pos_(origin) {}

void Lexer::advance(std::size_t n) {
    for (std::size_t k = 0; k < n && i_ < src_.size(); ++k, ++i_) {
        if (src_[i_] == '\n') {
            ++pos_.line;
            pos_.column = 1;
        } else {
            ++pos_.column;
        }
    }
}

void Lexer::skip_space() {
    for (;;) {
        char c = cur();
        if (c == '#') {
            while (cur() != '\0' && cur() != '\n') advance();
        } else if (c != '\0' && std::isspace(static_cast<unsigned char>(c))) {
            advance();
        } else {
            return;
        }
    }
}

const Token& Lexer::peek() {
    if (!has_peek_) {
        peeked_ = scan();
        has_peek_ = true;
    }
    return peeked_;
}

Token Lexer::next() {
    if (has_peek_) {
        has_peek_ = false;
        return std::move(peeked_);
    }
    return scan();
}

bool Lexer::accept(std::string_view punct) {
    const Token& t = peek();
    if (t.kind == TokenKind::Punct && t.text == punct) {
        next();
        return true;
    }
    return false;
}

void Lexer::expect(std::string_view punct) {
    if (!accept(punct)) fail(peek(), "expected '" + std::string(punct) + "'");
}

void Lexer::fail(const Token& at, const std::string& what) const {
    std::string tok = at.kind == TokenKind::End ? "<end>" : at.text;
    if (at.kind == TokenKind::Int) tok = std::to_string(at.ival);
    if (at.kind == TokenKind::Float) tok = format_float(at.fval);
    throw ParseError(at.pos, tok, what);
}

static bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
static bool ident_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '@';
}

Token Lexer::scan() {
    skip_space();
    Token t;
    t.pos = pos_;
    char c = cur();
    if (c == '\0') return t;

    if (ident_start(c)) {
        std::size_t b = i_;
        while (ident_char(cur())) advance();
        t.kind = TokenKind::Ident;
        t.text = std::string(src_.substr(b, i_ - b));
        return t;
    }

    bool num_start = std::isdigit(static_cast<unsigned char>(c)) ||
                     (c == '.' && std::isdigit(static_cast<unsigned char>(ahead(1)))) ||
                     ((c == '-' || c == '+') &&
                      (std::isdigit(static_cast<unsigned char>(ahead(1))) ||
                       (ahead(1) == '.' && std::isdigit(static_cast<unsigned char>(ahead(2))))));
    if (num_start) {
        std::size_t b = i_;
        bool is_float = false;
        if (c == '-' || c == '+') advance();
        while (std::isdigit(static_cast<unsigned char>(cur()))) advance();
        if (cur() == '.') {
            is_float = true;
            advance();
            while (std::isdigit(static_cast<unsigned char>(cur()))) advance();
        }
        if (cur() == 'e' || cur() == 'E') {
            char s = ahead(1);
            if (std::isdigit(static_cast<unsigned char>(s)) ||
                ((s == '-' || s == '+') && std::isdigit(static_cast<unsigned char>(ahead(2))))) {
                is_float = true;
                advance(2);
                while (std::isdigit(static_cast<unsigned char>(cur()))) advance();
            }
        }
        std::string text(src_.substr(b, i_ - b));
        t.text = text;
        if (text[0] == '+') text.erase(0, 1);
        if (is_float) {
            t.kind = TokenKind::Float;
            // from_chars rejects a leading '.', so normalise "-.5" / ".5"
            std::string norm = text;
            std::size_t dot = norm.find('.');
            if (dot != std::string::npos && (dot == 0 || !std::isdigit(static_cast<unsigned char>(norm[dot - 1]))))
                norm.insert(dot, "0");
            auto [p, ec] = std::from_chars(norm.data(), norm.data() + norm.size(), t.fval);
            if (ec != std::errc()) fail(t, "malformed number");
        } else {
            t.kind = TokenKind::Int;
            auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), t.ival);
            if (ec != std::errc()) fail(t, "integer out of range");
        }
        return t;
    }

    if (c == '\'' || c == '"') {
        bool triple = ahead(1) == c && ahead(2) == c;
        advance(triple ? 3 : 1);
        std::string out;
        for (;;) {
            char d = cur();
            if (d == '\0') {
                t.text = out;
                fail(t, "unterminated string");
            }
            if (triple) {
                if (d == c && ahead(1) == c && ahead(2) == c) {
                    advance(3);
                    break;
                }
            } else if (d == c) {
                advance();
                break;
            } else if (d == '\n') {
                t.text = out;
                fail(t, "newline in string");
            }
            if (d == '\\') {
                char e = ahead(1);
                switch (e) {
                case 'n': out += '\n'; break;
                case 't': out += '\t'; break;
                case '\\': out += '\\'; break;
                case '\'': out += '\''; break;
                case '"': out += '"'; break;
                default: out += '\\'; out += e;
                }
                advance(2);
                continue;
            }
            out += d;
            advance();
        }
        t.kind = TokenKind::Str;
        t.text = std::move(out);
        return t;
    }

    static constexpr std::string_view puncts = "{}[](),:=.";
    if (puncts.find(c) != std::string_view::npos) {
        t.kind = TokenKind::Punct;
        t.text = std::string(1, c);
        advance();
        return t;
    }
    t.text = std::string(1, c);
    fail(t, "unexpected character");
}

// ---------------------------------------------------------------- Node

Node Node::integer(std::int64_t v) {
    Node n;
    n.type_ = Type::Int;
    n.i_ = v;
    return n;
}
Node Node::floating(double v) {
    Node n;
    n.type_ = Type::Float;
    n.f_ = v;
    return n;
}
Node Node::str(std::string v) {
    Node n;
    n.type_ = Type::Str;
    n.s_ = std::move(v);
    return n;
}
Node Node::symbol(std::string v) {
    Node n;
    n.type_ = Type::Symbol;
    n.s_ = std::move(v);
    return n;
}
Node Node::list(std::vector<Node> items) {
    Node n;
    n.type_ = Type::List;
    n.items_ = std::move(items);
    return n;
}
Node Node::map() {
    Node n;
    n.type_ = Type::Map;
    return n;
}
Node Node::from_value(const Value& v) {
    if (v.is_int()) return integer(v.as_int());
    if (v.is_float()) return floating(v.as_float());
    if (v.is_str()) return str(v.as_str());
    return none();
}

std::int64_t Node::as_int() const {
    if (type_ != Type::Int) throw std::runtime_error("expected an integer, got " + to_notation(*this));
    return i_;
}
double Node::as_number() const {
    if (type_ == Type::Int) return static_cast<double>(i_);
    if (type_ == Type::Float) return f_;
    throw std::runtime_error("expected a number, got " + to_notation(*this));
}
const std::string& Node::as_str() const {
    if (type_ != Type::Str && type_ != Type::Symbol)
        throw std::runtime_error("expected a string, got " + to_notation(*this));
    return s_;
}
Value Node::to_value() const {
    switch (type_) {
    case Type::None: return Value();
    case Type::Int: return Value(i_);
    case Type::Float: return Value(f_);
    case Type::Str: return Value(s_);
    default: throw std::runtime_error("expected a scalar, got " + to_notation(*this));
    }
}

const Node* Node::find(std::string_view key) const {
    for (std::size_t i = 0; i < keys_.size(); ++i)
        if ((keys_[i].is_str() || keys_[i].is_symbol()) && keys_[i].s_ == key) return &items_[i];
    return nullptr;
}
const Node& Node::at(std::string_view key) const {
    const Node* n = find(key);
    if (!n) throw std::runtime_error("missing key '" + std::string(key) + "'");
    return *n;
}
void Node::append(Node key, Node value) {
    keys_.push_back(std::move(key));
    items_.push_back(std::move(value));
}

void Node::set(Node key, Node value) {
    for (std::size_t i = 0; i < keys_.size(); ++i) {
        if (keys_[i] == key) {
            items_[i] = std::move(value);
            return;
        }
    }
    keys_.push_back(std::move(key));
    items_.push_back(std::move(value));
}

bool operator==(const Node& a, const Node& b) {
    if (a.type_ != b.type_) return false;
    switch (a.type_) {
    case Node::Type::None: return true;
    case Node::Type::Int: return a.i_ == b.i_;
    case Node::Type::Float: return a.f_ == b.f_;
    case Node::Type::Str:
    case Node::Type::Symbol: return a.s_ == b.s_;
    case Node::Type::List: return a.items_ == b.items_;
    case Node::Type::Map: return a.keys_ == b.keys_ && a.items_ == b.items_;
    }
    return false;
}

// ---------------------------------------------------------------- parsing

Node parse_literal(Lexer& lex) {
    Token t = lex.next();
    Node n;
    switch (t.kind) {
    case TokenKind::Int: n = Node::integer(t.ival); break;
    case TokenKind::Float: n = Node::floating(t.fval); break;
    case TokenKind::Str: n = Node::str(t.text); break;
    case TokenKind::Ident:
        n = t.text == "None" ? Node::none() : Node::symbol(t.text);
        break;
    case TokenKind::Punct:
        if (t.text == "[" || t.text == "(") {
            std::string close = t.text == "[" ? "]" : ")";
            n = Node::list();
            while (!lex.accept(close)) {
                n.push_back(parse_literal(lex));
                if (!lex.accept(",")) {
                    lex.expect(close);
                    break;
                }
            }
        } else if (t.text == "{") {
            n = Node::map();
            while (!lex.accept("}")) {
                Node k = parse_literal(lex);
                if (!k.is_scalar() && !k.is_symbol()) lex.fail(t, "map keys must be scalars");
                if (k.is_none()) lex.fail(t, "None is not a valid map key");
                lex.expect(":");
                Node v = parse_literal(lex);
                n.append(std::move(k), std::move(v));
                if (!lex.accept(",")) {
                    lex.expect("}");
                    break;
                }
            }
        } else {
            lex.fail(t, "unexpected punctuation");
        }
        break;
    case TokenKind::End: lex.fail(t, "unexpected end of input");
    }
    n.pos = t.pos;
    return n;
}

Node parse_notation(std::string_view text) {
    Lexer lex(text);
    Node n = parse_literal(lex);
    if (!lex.at_end()) lex.fail(lex.peek(), "trailing content after document");
    return n;
}

// ---------------------------------------------------------------- output

static void emit(const Node& n, std::string& out, int depth, int indent) {
    switch (n.type()) {
    case Node::Type::None: out += "None"; return;
    case Node::Type::Int: out += std::to_string(n.as_int()); return;
    case Node::Type::Float: out += format_float(n.as_number()); return;
    case Node::Type::Str: out += quote_str(n.as_str()); return;
    case Node::Type::Symbol: out += n.as_str(); return;
    case Node::Type::List:
        out += '[';
        for (std::size_t i = 0; i < n.size(); ++i) {
            if (i) out += ", ";
            emit(n[i], out, 0, indent);
        }
        out += ']';
        return;
    case Node::Type::Map: {
        bool broken = depth > 0 && !n.keys().empty();
        out += '{';
        for (std::size_t i = 0; i < n.keys().size(); ++i) {
            if (broken) {
                out += '\n';
                out.append(static_cast<std::size_t>(indent + 2), ' ');
            } else if (i) {
                out += ", ";
            }
            emit(n.keys()[i], out, 0, indent);
            out += ": ";
            emit(n.value_at(i), out, depth - 1, indent + 2);
            if (broken) out += ',';
        }
        if (broken) {
            out += '\n';
            out.append(static_cast<std::size_t>(indent), ' ');
        }
        out += '}';
        return;
    }
    }
}

std::string to_notation(const Node& n) {
    std::string out;
    emit(n, out, 0, 0);
    return out;
}

std::string to_notation_pretty(const Node& n, int depth) {
    std::string out;
    emit(n, out, depth, 0);
    return out;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace ctxdesc
