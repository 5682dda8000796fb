#pragma once

#include <stdexcept>
#include <string>

namespace vldac {

// Base for everything thrown by this library. Catch this at CLI boundaries.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// Scalar-expected / rank-mismatch style misuse of tensors.
class RankError : public Error {
 public:
  using Error::Error;
};

// Non-finite values where finite ones are required (losses, gradients).
class NumericsError : public Error {
 public:
  using Error::Error;
};

class VocabError : public Error {
 public:
  using Error::Error;
};

// Malformed token sequences handed to scoring (bad BOS, overlength, ...).
class SequenceError : public Error {
 public:
  using Error::Error;
};

class ObservationError : public Error {
 public:
  using Error::Error;
};

// Invalid environment specs (unknown kind, bad grid, unreachable goal).
class SpecError : public Error {
 public:
  using Error::Error;
};

// step() after done without reset().
class EpisodeDoneError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class AlignmentError : public Error {
 public:
  using Error::Error;
};

}  // namespace vldac
