#pragma once

#include <stdexcept>
#include <string>

namespace slim {

// Malformed input documents and streams: cfg text, weight files, annotations.
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Well-formed input that breaks a model contract: unresolved references,
// shape mismatches, store/definition misalignment.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Caller passed an argument outside an operation's domain.
class ArgumentError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A broken internal invariant; indicates a bug upstream of the throw site.
class InternalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace slim
