#pragma once

#include <stdexcept>
#include <string>

namespace acip {

enum class ErrorCode {
    UnresolvedCritical,
    InverseNotBracketed,
    NotBounded,
    TreeBudgetExceeded,
    EmptySelection,
    OffsetNotFound,
    InsufficientAtoms,
    ConfigError,
    ExpressionError,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& module, const std::string& what)
        : std::runtime_error(module + ": " + error_code_name(code) + ": " + what), code_(code), module_(module) {}
    ErrorCode code() const { return code_; }
    const std::string& module() const { return module_; }

private:
    ErrorCode code_;
    std::string module_;
};

}  // namespace acip
