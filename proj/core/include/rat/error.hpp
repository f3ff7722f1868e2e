#pragma once

#include <stdexcept>
#include <string>

namespace rat {

// Base error carrying a machine-parsable class tag. The CLI prints errors as
// a single line `error[<class>]: <message>` and exits nonzero.
class Error : public std::runtime_error {
public:
    Error(std::string cls, const std::string& msg)
        : std::runtime_error(msg), class_(std::move(cls)) {}
    const std::string& error_class() const { return class_; }

private:
    std::string class_;
};

struct DimensionError : Error {
    explicit DimensionError(const std::string& msg) : Error("dimension", msg) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error("config", msg) {}
};

struct FormatError : Error {
    explicit FormatError(const std::string& msg) : Error("format", msg) {}
};

struct ContractError : Error {
    explicit ContractError(const std::string& msg) : Error("contract", msg) {}
};

struct NumericError : Error {
    explicit NumericError(const std::string& msg) : Error("numeric", msg) {}
};

struct IoError : Error {
    explicit IoError(const std::string& msg) : Error("io", msg) {}
};

}  // namespace rat
