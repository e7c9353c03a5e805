#pragma once

#include <stdexcept>
#include <string>

namespace stgp {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A caller broke a documented precondition (bad parameter range etc).
class ContractError : public Error {
public:
  using Error::Error;
};

/// User-supplied configuration that cannot produce a valid model.
class ConfigError : public Error {
public:
  using Error::Error;
};

/// Graph or matrix structure that cannot be used (isolated knot, non-PD).
class StructuralError : public Error {
public:
  using Error::Error;
};

class IoError : public Error {
public:
  using Error::Error;
};

} // namespace stgp
