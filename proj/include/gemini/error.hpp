#pragma once

#include <stdexcept>
#include <string>

namespace gemini {

// Every failure the library reports derives from Error. The subclasses map
// one-to-one onto the error conditions callers are expected to branch on.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EmptyVideoError : public Error {
  using Error::Error;
};

class DegenerateDetectionError : public Error {
  using Error::Error;
};

class CompositionError : public Error {
  using Error::Error;
};

class ConfigError : public Error {
  using Error::Error;
};

class ShapeError : public Error {
  using Error::Error;
};

class ProposalTooShortError : public Error {
  using Error::Error;
};

class LabelError : public Error {
  using Error::Error;
};

class DivergenceError : public Error {
  using Error::Error;
};

class GenerationError : public Error {
  using Error::Error;
};

class CheckpointError : public Error {
  using Error::Error;
};

class FormatError : public Error {
  using Error::Error;
};

}  // namespace gemini
