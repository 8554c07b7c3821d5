#pragma once

#include <stdexcept>
#include <string>

namespace tweetlm {

// Malformed input bytes (bad JSON, bad CSV, bad checkpoint file).
struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

// Structurally valid input missing required content.
struct SchemaError : std::runtime_error {
  explicit SchemaError(const std::string& what) : std::runtime_error(what) {}
};

// A config or argument violates a module invariant.
struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace tweetlm
