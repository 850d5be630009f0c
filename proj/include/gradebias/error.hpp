#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gradebias {

/// Process exit codes used by the command-line front end.
enum class ExitCode : int { ok = 0, config = 2, numeric = 3, io = 4 };

/// Root of the library's exception hierarchy. Every error knows which exit
/// code the CLI should report for it.
class Error : public std::runtime_error {
public:
    Error(const std::string& what, ExitCode code)
        : std::runtime_error(what), code_(code) {}
    ExitCode exit_code() const noexcept { return code_; }

private:
    ExitCode code_;
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error("config error: " + what, ExitCode::config) {}
};

class ParseError : public Error {
public:
    ParseError(const std::string& file, std::size_t line, const std::string& what)
        : Error("parse error: " + file + ":" + std::to_string(line) + ": " + what, ExitCode::config),
          line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class EmptyDatasetError : public Error {
public:
    explicit EmptyDatasetError(const std::string& what) : Error("empty dataset: " + what, ExitCode::config) {}
};

class IndexError : public Error {
public:
    explicit IndexError(const std::string& what) : Error("index error: " + what, ExitCode::config) {}
};

class EmptyEvaluationError : public Error {
public:
    explicit EmptyEvaluationError(const std::string& what)
        : Error("empty evaluation: " + what, ExitCode::config) {}
};

/// Raised when a parameter becomes NaN/Inf during training.
class DivergenceError : public Error {
public:
    DivergenceError(std::size_t epoch, std::size_t batch)
        : Error("divergence: non-finite parameter after epoch " + std::to_string(epoch) + " batch " +
                    std::to_string(batch),
                ExitCode::numeric),
          epoch_(epoch), batch_(batch) {}
    std::size_t epoch() const noexcept { return epoch_; }
    std::size_t batch() const noexcept { return batch_; }

private:
    std::size_t epoch_;
    std::size_t batch_;
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error("io error: " + what, ExitCode::io) {}
};

/// Checkpoint validation failure. `field()` names the offending manifest
/// entry or payload file.
class CheckpointError : public Error {
public:
    CheckpointError(const std::string& field, const std::string& what)
        : Error("checkpoint error [" + field + "]: " + what, ExitCode::io), field_(field) {}
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

}  // namespace gradebias
