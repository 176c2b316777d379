#pragma once

#include <stdexcept>
#include <string>

namespace caslayout {

/// Base of every library error; `what()` is a single human-readable line.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input document. The message starts with the offending field path.
class ParseError : public Error {
public:
    ParseError(const std::string& path, const std::string& msg) : Error(path + ": " + msg), path_(path) {}
    const std::string& path() const { return path_; }

private:
    std::string path_;
};

class CapacityError : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

/// A stage was asked to condition on a field no earlier stage produced.
class StagingError : public Error {
public:
    StagingError(const std::string& field, const std::string& msg) : Error(field + ": " + msg), field_(field) {}
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

class GeometryError : public Error {
public:
    using Error::Error;
};

}  // namespace caslayout
