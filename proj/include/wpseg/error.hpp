#pragma once

#include <stdexcept>
#include <string>

namespace wpseg {

/// Base of every error the library raises. Carries the process exit code the
/// CLI reports for it.
class Error : public std::runtime_error {
public:
    Error(const std::string& what, int exit_code)
        : std::runtime_error(what), exit_code_(exit_code) {}

    int exit_code() const noexcept { return exit_code_; }

private:
    int exit_code_;
};

class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& what) : Error(what, 2) {}
};

class ParseError : public ValidationError {
public:
    ParseError(const std::string& file, int line, const std::string& what)
        : ValidationError(file + ":" + std::to_string(line) + ": " + what), line_(line) {}

    int line() const noexcept { return line_; }

private:
    int line_;
};

class FormatError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class ConfigError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class ShapeError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class MissingArtifactError : public Error {
public:
    explicit MissingArtifactError(const std::string& what) : Error(what, 3) {}
};

class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& what) : Error(what, 4) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(what, 1) {}
};

}  // namespace wpseg
