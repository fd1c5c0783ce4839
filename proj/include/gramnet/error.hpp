#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gramnet {

// Process exit code per error family. The CLI maps a caught Error to
// the numeric value of its family; 0 is success.
enum class ErrorFamily : int {
    internal = 1,
    config = 2,
    data = 3,
    io_read = 4,
    io_write = 5,
    checkpoint = 6,
    divergence = 7,
};

class Error : public std::runtime_error {
public:
    Error(ErrorFamily family, const std::string& msg)
        : std::runtime_error(msg), family_(family) {}

    ErrorFamily family() const { return family_; }
    int exit_code() const { return static_cast<int>(family_); }

private:
    ErrorFamily family_;
};

struct MissingFileError : Error {
    explicit MissingFileError(const std::string& path)
        : Error(ErrorFamily::data, "missing file: " + path) {}
};

struct EmptyFileError : Error {
    explicit EmptyFileError(const std::string& path)
        : Error(ErrorFamily::data, "file holds zero samples: " + path) {}
};

struct ParseError : Error {
    ParseError(const std::string& path, std::size_t line_number, const std::string& token)
        : Error(ErrorFamily::data, path + ":" + std::to_string(line_number) +
                                       ": non-numeric sample '" + token + "'"),
          line(line_number) {}
    std::size_t line;
};

struct WindowTooLongError : Error {
    WindowTooLongError(std::size_t window_len, std::size_t record_len)
        : Error(ErrorFamily::data, "window length " + std::to_string(window_len) +
                                       " exceeds record length " + std::to_string(record_len)) {}
};

struct EmptyClassError : Error {
    explicit EmptyClassError(const std::string& class_tag)
        : Error(ErrorFamily::data, "class " + class_tag + " has zero records") {}
};

struct DegenerateRangeError : Error {
    DegenerateRangeError()
        : Error(ErrorFamily::data, "min-max scaling undefined: window is constant") {}
};

struct IndivisibleLengthError : Error {
    IndivisibleLengthError(std::size_t len, std::size_t target)
        : Error(ErrorFamily::config, "series length " + std::to_string(len) +
                                         " not divisible by target " + std::to_string(target)) {}
};

struct DomainError : Error {
    explicit DomainError(double value)
        : Error(ErrorFamily::data,
                "value " + std::to_string(value) + " outside [-1, 1] domain") {}
};

struct ShapeMismatchError : Error {
    explicit ShapeMismatchError(const std::string& msg)
        : Error(ErrorFamily::internal, "shape mismatch: " + msg) {}
};

struct NonFiniteError : Error {
    explicit NonFiniteError(const std::string& where)
        : Error(ErrorFamily::internal, "non-finite value in " + where) {}
};

struct EmptyConfusionError : Error {
    EmptyConfusionError() : Error(ErrorFamily::data, "confusion matrix sums to zero") {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(ErrorFamily::config, msg) {}
};

struct ReadError : Error {
    explicit ReadError(const std::string& path) : Error(ErrorFamily::io_read, "cannot read: " + path) {}
    ReadError(const std::string& path, const std::string& why)
        : Error(ErrorFamily::io_read, "cannot read " + path + ": " + why) {}
};

struct WriteError : Error {
    explicit WriteError(const std::string& path) : Error(ErrorFamily::io_write, "cannot write: " + path) {}
};

struct IncompatibleCheckpointError : Error {
    explicit IncompatibleCheckpointError(const std::string& msg)
        : Error(ErrorFamily::checkpoint, "incompatible checkpoint: " + msg) {}
};

} // namespace gramnet
