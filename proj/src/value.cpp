#include "ctxdesc/value.hpp"

#include <charconv>
#include <stdexcept>

namespace ctxdesc {

std::string_view kind_name(ValueKind k) {
    switch (k) {
    case ValueKind::Float: return "float";
    case ValueKind::Int: return "int";
    case ValueKind::Str: return "string";
    }
    return "?";
}

std::string_view kind_placeholder(ValueKind k) {
    switch (k) {
    case ValueKind::Float: return "<float>";
    case ValueKind::Int: return "<int>";
    case ValueKind::Str: return "<string>";
    }
    return "<?>";
}

double Value::number() const {
    if (is_int()) return static_cast<double>(as_int());
    if (is_float()) return as_float();
    throw std::logic_error("value is not numeric: " + repr());
}

std::optional<ValueKind> Value::kind() const {
    if (is_int()) return ValueKind::Int;
    if (is_float()) return ValueKind::Float;
    if (is_str()) return ValueKind::Str;
    return std::nullopt;
}

std::string format_float(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    std::string s(buf, end);
    if (s.find_first_of(".eEn") == std::string::npos) s += ".0";  // 'n' covers nan/inf
    return s;
}

std::string quote_str(std::string_view s) {
    std::string out = "'";
    for (char c : s) {
        switch (c) {
        case '\\': out += "\\\\"; break;
        case '\'': out += "\\'"; break;
        case '\n': out += "\\n"; break;
        case '\t': out += "\\t"; break;
        default: out += c;
        }
    }
    out += '\'';
    return out;
}

std::string Value::repr() const {
    if (is_int()) return std::to_string(as_int());
    if (is_float()) return format_float(as_float());
    if (is_str()) return quote_str(as_str());
    return "None";
}

bool loosely_equal(const Value& a, const Value& b) {
    if (a.is_number() && b.is_number()) return a.number() == b.number();
    return a == b;
}

std::optional<int> compare_values(const Value& a, const Value& b) {
    if (a.is_number() && b.is_number()) {
        double x = a.number(), y = b.number();
        return x < y ? -1 : (x > y ? 1 : 0);
    }
    if (a.is_str() && b.is_str()) {
        int c = a.as_str().compare(b.as_str());
        return c < 0 ? -1 : (c > 0 ? 1 : 0);
    }
    return std::nullopt;
}

}  // namespace ctxdesc
