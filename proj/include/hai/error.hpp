#pragma once

#include <stdexcept>
#include <string>

namespace hai {

// Base for every error the library raises on purpose. The CLI maps the
// subclasses onto exit codes (validation-type errors -> 1, backend -> 2).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed input text (JSON syntax, wrong value types). Carries the 1-based
// line number when the input is line-oriented, 0 otherwise.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line = 0)
        : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

// Structurally valid input that disagrees with the declared manifest
// (wrong vector length, unknown label). Still a parse failure of that line.
class SchemaError : public ParseError {
public:
    using ParseError::ParseError;
};

// Violated precondition or invariant on otherwise well-formed values.
class ValidationError : public Error {
public:
    using Error::Error;
};

// An external service (LLM, embedder) failed or returned garbage.
class BackendError : public Error {
public:
    using Error::Error;
};

} // namespace hai
