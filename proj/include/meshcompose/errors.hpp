#pragma once

#include <stdexcept>
#include <string>

namespace meshcompose {

// Base for all library errors. Pipeline stages annotate the message with
// their object/stage label via with_context() before rethrowing.
class Error : public std::runtime_error {
public:
    explicit Error(std::string message)
        : std::runtime_error(message), message_(std::move(message)) {}

    const char* what() const noexcept override { return message_.c_str(); }

    void with_context(const std::string& context) {
        message_ = context + ": " + message_;
    }

private:
    std::string message_;
};

class FileNotFoundError : public Error {
public:
    using Error::Error;
};

class UnsupportedFormatError : public Error {
public:
    using Error::Error;
};

class DegenerateMeshError : public Error {
public:
    using Error::Error;
};

class DegenerateTriangleError : public Error {
public:
    using Error::Error;
};

class DegenerateSourceError : public Error {
public:
    using Error::Error;
};

class InsufficientPointsError : public Error {
public:
    using Error::Error;
};

class DegenerateConfigurationError : public Error {
public:
    using Error::Error;
};

class NoCorrespondencesError : public Error {
public:
    using Error::Error;
};

class RegistrationFailedError : public Error {
public:
    using Error::Error;
};

class LengthMismatchError : public Error {
public:
    using Error::Error;
};

class OutOfRangeError : public Error {
public:
    using Error::Error;
};

class DivergedError : public Error {
public:
    using Error::Error;
};

class NoInteriorSamplesError : public Error {
public:
    using Error::Error;
};

class EditorFailureError : public Error {
public:
    using Error::Error;
};

class InvalidSceneSpecError : public Error {
public:
    using Error::Error;
};

} // namespace meshcompose
