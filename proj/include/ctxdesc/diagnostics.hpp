#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ctxdesc {

enum class Severity { Warning, Error };

std::string_view severity_name(Severity s);  // "WARNING" / "ERROR"

/// Three-part message: one headline, a few lines of detail, one suggested
/// correction. `code` is a stable machine tag ("meaningless", "missing", ...).
struct Diagnostic {
    Severity severity = Severity::Error;
    std::string code;
    std::string headline;
    std::vector<std::string> detail;
    std::string suggestion;

    friend bool operator==(const Diagnostic&, const Diagnostic&) = default;
};

/// Line 1 carries the severity, the last line the suggestion.
std::string format(const Diagnostic& d);

Diagnostic escalate(Diagnostic d);
void escalate_all(std::vector<Diagnostic>& ds);

bool has_errors(std::span<const Diagnostic> ds);
/// 0 when clean, 1 when any ERROR was raised.
int exit_status(std::span<const Diagnostic> ds);

/// Exception carrying a formatted diagnostic; thrown by static checks and
/// every fallible operation of the engine.
class Error : public std::runtime_error {
public:
    explicit Error(Diagnostic d);
    Error(std::string code, std::string headline, std::vector<std::string> detail = {},
          std::string suggestion = {});
    const Diagnostic& diagnostic() const { return diag_; }

private:
    Diagnostic diag_;
};

/// Closest candidate by edit distance, or empty when nothing is close enough.
std::string nearest_name(std::string_view name, std::span<const std::string> candidates);
std::size_t edit_distance(std::string_view a, std::string_view b);

}  // namespace ctxdesc
