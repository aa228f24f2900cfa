#pragma once
// Error taxonomy shared by every module. Exit-code mapping lives in the CLI:
// argument/config errors -> 2, data/parse/validation errors -> 1.

#include <stdexcept>
#include <string>

namespace trustspeech {

// Malformed input that could not be read at all (bad JSON, bad WAV header).
struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

// Input parsed but violates the documented schema (missing field, bad enum).
struct SchemaError : std::runtime_error {
    explicit SchemaError(const std::string& msg) : std::runtime_error(msg) {}
};

// Input parsed but violates a structural invariant (overlapping intervals,
// duplicate records).
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Caller passed an argument outside a function's contract.
struct ArgumentError : std::invalid_argument {
    explicit ArgumentError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Well-formed data that cannot be processed (empty utterance, waveform
// shorter than one frame, statistics unavailable).
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid experiment or generator configuration.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace trustspeech
