#pragma once

#include <stdexcept>
#include <string>

namespace maskvo {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Caller violated a precondition (bad value, shape mismatch, non-finite input).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Input file could not be parsed; message carries the line number when known.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Data violates a format invariant (e.g. non-monotonic timestamps).
class DataIntegrityError : public Error {
 public:
  using Error::Error;
};

/// Rotation too close to the pi singularity for a well-defined axis.
class DegenerateRotation : public Error {
 public:
  using Error::Error;
};

/// Point configuration does not constrain the model (rank-deficient system).
class DegenerateInput : public Error {
 public:
  using Error::Error;
};

/// Fewer samples than the minimal solver requires.
class InsufficientData : public Error {
 public:
  using Error::Error;
};

/// RANSAC found no hypothesis with enough support.
class NoConsensus : public Error {
 public:
  using Error::Error;
};

/// Cheirality test could not single out one pose candidate.
class AmbiguousPose : public Error {
 public:
  using Error::Error;
};

/// Training loss left the finite range.
class TrainingDiverged : public Error {
 public:
  TrainingDiverged(const std::string& msg, int last_finite_epoch)
      : Error(msg), last_finite_epoch(last_finite_epoch) {}
  int last_finite_epoch;
};

/// Too many frame pairs failed for the run to be meaningful.
class RunDegenerate : public Error {
 public:
  using Error::Error;
};

/// Filesystem read/write failure.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace maskvo
