#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace donorsim {

struct ContractViolation : std::logic_error {
    using std::logic_error::logic_error;
};

struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct NotPsdError : std::domain_error {
    using std::domain_error::domain_error;
};

struct FitError : std::runtime_error {
    FitError(const std::string& what, double residual_rms)
        : std::runtime_error(what), residual(residual_rms) {}
    double residual;
};

// one entry per offending field, each prefixed with its JSON path
struct ConfigError : std::runtime_error {
    explicit ConfigError(std::vector<std::string> items)
        : std::runtime_error(join(items)), issues(std::move(items)) {}
    std::vector<std::string> issues;

private:
    static std::string join(const std::vector<std::string>& items) {
        std::string s = "invalid config";
        for (const auto& i : items) s += "\n  " + i;
        return s;
    }
};

inline void require(bool cond, const char* msg) {
    if (!cond) throw ContractViolation(msg);
}

}  // namespace donorsim
