#pragma once

#include <stdexcept>
#include <string>

namespace sbs {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Matrix shapes or subsystem dimensions do not fit together.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// An input violates a documented precondition (domain, normalization, positivity).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A dense assembly would exceed the configured dimension cap.
class CapacityError : public Error {
 public:
  using Error::Error;
};

/// Photon momenta leave the soft-scattering sector k*dx << 1.
class RegimeError : public Error {
 public:
  using Error::Error;
};

/// The explicit shell unitary could not reproduce the dipole diagonal.
class CalibrationError : public Error {
 public:
  using Error::Error;
};

}  // namespace sbs
