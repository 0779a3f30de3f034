#pragma once

#include <stdexcept>
#include <string>

namespace floq {

// Exit-code classes used by the CLI: 2 validation, 3 budget/partial, 4 numeric.
enum class errc : int {
    validation = 2,
    budget = 3,
    numeric = 4,
};

class Error : public std::runtime_error {
public:
    Error(errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
    errc code() const noexcept { return code_; }
    int exit_code() const noexcept { return static_cast<int>(code_); }

private:
    errc code_;
};

struct ValidationError : Error {
    explicit ValidationError(const std::string& what) : Error(errc::validation, what) {}
};

// Wrong operator geometry for the requested operation (half-line vs full-line).
struct GeometryError : ValidationError {
    explicit GeometryError(const std::string& what) : ValidationError(what) {}
};

struct BudgetError : Error {
    explicit BudgetError(const std::string& what) : Error(errc::budget, what) {}
};

struct NumericError : Error {
    explicit NumericError(const std::string& what) : Error(errc::numeric, what) {}
};

} // namespace floq
