#pragma once

#include <stdexcept>
#include <string>

namespace fluxlab {

// Error kinds map onto CLI exit codes: schema -> 2, numerical -> 3, io -> 4.
enum class ErrorKind { parameter, schema, numerical, fit, calibration, stiffness, io };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string message, std::string path = {})
        : std::runtime_error(path.empty() ? message : path + ": " + message),
          kind_(kind), message_(std::move(message)), path_(std::move(path)) {}

    ErrorKind kind() const { return kind_; }
    const std::string& message() const { return message_; }
    const std::string& path() const { return path_; }

    const char* kind_name() const {
        switch (kind_) {
            case ErrorKind::parameter:   return "parameter";
            case ErrorKind::schema:      return "schema";
            case ErrorKind::numerical:   return "numerical";
            case ErrorKind::fit:         return "fit";
            case ErrorKind::calibration: return "calibration";
            case ErrorKind::stiffness:   return "stiffness";
            case ErrorKind::io:          return "io";
        }
        return "unknown";
    }

private:
    ErrorKind kind_;
    std::string message_;
    std::string path_;
};

struct ParameterError : Error {
    explicit ParameterError(std::string msg) : Error(ErrorKind::parameter, std::move(msg)) {}
};
struct SchemaError : Error {
    SchemaError(std::string msg, std::string path) : Error(ErrorKind::schema, std::move(msg), std::move(path)) {}
};
struct NumericalError : Error {
    explicit NumericalError(std::string msg) : Error(ErrorKind::numerical, std::move(msg)) {}
};
struct FitError : Error {
    explicit FitError(std::string msg) : Error(ErrorKind::fit, std::move(msg)) {}
};
struct CalibrationError : Error {
    explicit CalibrationError(std::string msg) : Error(ErrorKind::calibration, std::move(msg)) {}
};
struct StiffnessError : Error {
    explicit StiffnessError(std::string msg) : Error(ErrorKind::stiffness, std::move(msg)) {}
};
struct IoError : Error {
    explicit IoError(std::string msg) : Error(ErrorKind::io, std::move(msg)) {}
};

} // namespace fluxlab
