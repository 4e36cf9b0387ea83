#include "ctxdesc/diagnostics.hpp"

#include <algorithm>
#include <numeric>

namespace ctxdesc {

std::string_view severity_name(Severity s) { return s == Severity::Warning ? "WARNING" : "ERROR"; }

std::string format(const Diagnostic& d) {
    std::string out(severity_name(d.severity));
    out += ": ";
    out += d.headline;
    out += '\n';
    for (const auto& line : d.detail) {
        out += "  ";
        out += line;
        out += '\n';
    }
    out += "suggestion: ";
    out += d.suggestion.empty() ? "none" : d.suggestion;
    out += '\n';
    return out;
}

Diagnostic escalate(Diagnostic d) {
    d.severity = Severity::Error;
    return d;
}

void escalate_all(std::vector<Diagnostic>& ds) {
    for (auto& d : ds) d.severity = Severity::Error;
}

bool has_errors(std::span<const Diagnostic> ds) {
    return std::any_of(ds.begin(), ds.end(), [](const Diagnostic& d) { return d.severity == Severity::Error; });
}

int exit_status(std::span<const Diagnostic> ds) { return has_errors(ds) ? 1 : 0; }

Error::Error(Diagnostic d) : std::runtime_error(format(d)), diag_(std::move(d)) {}

Error::Error(std::string code, std::string headline, std::vector<std::string> detail, std::string suggestion)
    : Error(Diagnostic{Severity::Error, std::move(code), std::move(headline), std::move(detail),
                       std::move(suggestion)}) {}

std::size_t edit_distance(std::string_view a, std::string_view b) {
    std::vector<std::size_t> row(b.size() + 1);
    std::iota(row.begin(), row.end(), std::size_t{0});
    for (std::size_t i = 1; i <= a.size(); ++i) {
        std::size_t diag = row[0];
        row[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            std::size_t up = row[j];
            row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
            diag = up;
        }
    }
    return row[b.size()];
}

std::string nearest_name(std::string_view name, std::span<const std::string> candidates) {
    std::string best;
    std::size_t best_d = std::max<std::size_t>(2, name.size() / 3) + 1;
    for (const auto& c : candidates) {
        std::size_t d = edit_distance(name, c);
        if (d < best_d || (d == best_d && !best.empty() && c < best)) {
            best_d = d;
            best = c;
        }
    }
    return best;
}

}  // namespace ctxdesc
