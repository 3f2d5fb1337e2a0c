#pragma once

#include <stdexcept>
#include <string>

namespace dnat {

// Every library error carries a short machine-parsable category so the CLI
// can report "error[<category>]: <message>" and pick an exit code.
class Error : public std::runtime_error {
public:
    Error(std::string category, const std::string& what)
        : std::runtime_error(what), category_(std::move(category)) {}

    const std::string& category() const noexcept { return category_; }

private:
    std::string category_;
};

struct DimensionError : Error {
    explicit DimensionError(const std::string& w) : Error("dimension", w) {}
};

struct EmptyInputError : Error {
    explicit EmptyInputError(const std::string& w) : Error("empty-input", w) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& w) : Error("config", w) {}
};

struct InstabilityError : Error {
    explicit InstabilityError(const std::string& w) : Error("instability", w) {}
};

struct PatternError : Error {
    explicit PatternError(const std::string& w) : Error("pattern", w) {}
};

struct CheckpointError : Error {
    explicit CheckpointError(const std::string& w) : Error("checkpoint", w) {}
};

struct IoError : Error {
    explicit IoError(const std::string& w) : Error("io", w) {}
};

struct DivergenceError : Error {
    explicit DivergenceError(const std::string& w) : Error("divergence", w) {}
};

struct PipelineError : Error {
    PipelineError(std::string stage, const std::string& w)
        : Error("pipeline", "stage '" + stage + "': " + w), stage_(std::move(stage)) {}

    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

}  // namespace dnat
