#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace ctxdesc {

/// Scalar kinds an attribute may carry. Undefined is not a kind: it is the
/// "no value" marker shared by every kind.
enum class ValueKind { Float, Int, Str };

std::string_view kind_name(ValueKind k);
std::string_view kind_placeholder(ValueKind k);  // "<float>", "<int>", "<string>"

struct Undefined {
    friend bool operator==(Undefined, Undefined) { return true; }
    friend bool operator<(Undefined, Undefined) { return false; }
};

/// A scalar attribute value, or Undefined.
class Value {
public:
    Value() = default;
    Value(Undefined) {}
    Value(std::int64_t v) : v_(v) {}
    Value(int v) : v_(static_cast<std::int64_t>(v)) {}
    Value(double v) : v_(v) {}
    Value(std::string v) : v_(std::move(v)) {}
    Value(const char* v) : v_(std::string(v)) {}

    bool defined() const { return !std::holds_alternative<Undefined>(v_); }
    bool is_int() const { return std::holds_alternative<std::int64_t>(v_); }
    bool is_float() const { return std::holds_alternative<double>(v_); }
    bool is_str() const { return std::holds_alternative<std::string>(v_); }
    bool is_number() const { return is_int() || is_float(); }

    std::int64_t as_int() const { return std::get<std::int64_t>(v_); }
    double as_float() const { return std::get<double>(v_); }
    const std::string& as_str() const { return std::get<std::string>(v_); }
    /// Numeric value widened to double; throws on Str/Undefined.
    double number() const;

    std::optional<ValueKind> kind() const;

    /// Canonical literal text: 'text', 12, 1.5, None.
    std::string repr() const;

    friend bool operator==(const Value& a, const Value& b) { return a.v_ == b.v_; }
    friend bool operator<(const Value& a, const Value& b) { return a.v_ < b.v_; }

private:
    std::variant<Undefined, std::int64_t, double, std::string> v_;
};

using ValueSeq = std::vector<Value>;

/// Shortest round-trip text for a double, always carrying a '.' or exponent.
std::string format_float(double v);
std::string quote_str(std::string_view s);

/// Kind-aware equality: Int 1 and Float 1.0 compare equal.
bool loosely_equal(const Value& a, const Value& b);

/// Total ordering used by comparators; numbers compare numerically, strings
/// lexicographically. Returns nullopt when the operands are not comparable.
std::optional<int> compare_values(const Value& a, const Value& b);

}  // namespace ctxdesc
