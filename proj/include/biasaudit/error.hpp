#pragma once

#include <stdexcept>
#include <string>

namespace biasaudit {

// Maps onto CLI exit codes: Usage=1, Data=2, Provider=3.
enum class ErrorCategory { Usage = 1, Data = 2, Provider = 3 };

/// Base error for every module. The message is prefixed with the module name
/// ("corpus: line 4: unknown label 'liberal'").
class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, const std::string& module, const std::string& what)
        : std::runtime_error(module + ": " + what), category_(category), module_(module) {}

    ErrorCategory category() const noexcept { return category_; }
    const std::string& module() const noexcept { return module_; }

private:
    ErrorCategory category_;
    std::string module_;
};

class DataError : public Error {
public:
    DataError(const std::string& module, const std::string& what)
        : Error(ErrorCategory::Data, module, what) {}
};

class UsageError : public Error {
public:
    UsageError(const std::string& module, const std::string& what)
        : Error(ErrorCategory::Usage, module, what) {}
};

}  // namespace biasaudit
