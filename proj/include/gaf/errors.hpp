#pragma once

#include <stdexcept>
#include <string>

namespace gaf {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class NonFiniteError : public Error {
public:
    using Error::Error;
};

class ValueError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Malformed or truncated file. `section()` names the part that failed to parse.
class ParseError : public Error {
public:
    ParseError(std::string section, const std::string& what)
        : Error("parse error in section '" + section + "': " + what), section_(std::move(section)) {}

    const std::string& section() const noexcept { return section_; }

private:
    std::string section_;
};

class UnsupportedVersionError : public Error {
public:
    using Error::Error;
};

/// Bad user configuration (unknown keys, out-of-range values).
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace gaf
