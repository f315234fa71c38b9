#pragma once

#include <stdexcept>
#include <string>

namespace spaorb {

// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class InvalidInput : public Error {
public:
  using Error::Error;
};

// Orthogonal matrix has an eigenvalue at (or too close to) -1, so no principal
// real logarithm exists.
class BranchBoundary : public Error {
public:
  using Error::Error;
};

class NearLinearDependence : public Error {
public:
  using Error::Error;
};

class InvalidGeometry : public Error {
public:
  using Error::Error;
};

class SamplingFailure : public Error {
public:
  using Error::Error;
};

class DegenerateEdge : public Error {
public:
  using Error::Error;
};

class NumericalFailure : public Error {
public:
  using Error::Error;
};

class SchemaError : public Error {
public:
  using Error::Error;
};

class IoError : public Error {
public:
  using Error::Error;
};

// Carries the best iterate found before the iteration budget ran out.
template <typename Best>
class ConvergenceFailure : public Error {
public:
  ConvergenceFailure(const std::string &what, Best best)
      : Error(what), best_(std::move(best)) {}
  const Best &best() const noexcept { return best_; }

private:
  Best best_;
};

} // namespace spaorb
