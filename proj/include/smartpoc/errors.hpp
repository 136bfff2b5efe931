#pragma once

#include <stdexcept>
#include <string>

namespace smartpoc {

/// Base class for all errors raised by the pipeline.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed input file (findings, transcript, Solidity source).
/// Carries file and, when known, the offending line.
class ParseError : public Error {
public:
    ParseError(std::string file, int line, const std::string& what)
        : Error(line > 0 ? file + ":" + std::to_string(line) + ": " + what
                         : file + ": " + what),
          file_(std::move(file)),
          line_(line) {}

    const std::string& file() const { return file_; }
    int line() const { return line_; }

private:
    std::string file_;
    int line_;
};

/// Bad run configuration (unknown format, missing required option).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// The host is missing something the run needs (toolchain binary,
/// endpoint). Distinct from a finding-level failure: aborts the run.
class EnvironmentError : public Error {
public:
    using Error::Error;
};

/// A pipeline stage failed for one finding. Never aborts the run;
/// the orchestrator records the row and moves on.
class StageError : public Error {
public:
    StageError(std::string stage, const std::string& what)
        : Error("[" + stage + "] " + what), stage_(std::move(stage)) {}

    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

/// Scripted mock ran out of entries or an entry is malformed.
/// This is a test-configuration problem, not a pipeline outcome.
class TranscriptError : public Error {
public:
    using Error::Error;
};

/// Transient transport failure (connection reset, 5xx). The gateway
/// retries these; anything else propagates immediately.
class TransportError : public Error {
public:
    using Error::Error;
};

} // namespace smartpoc
