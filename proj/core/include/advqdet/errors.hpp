#pragma once

#include <stdexcept>
#include <string>

namespace advqdet {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller broke a documented precondition (dimension or kind mismatch, bad geometry).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

// Input too small or too uniform for the requested encoding.
class DegenerateInput : public Error {
 public:
  using Error::Error;
};

// Content digest absent from a preloaded embedding file.
class LookupMiss : public Error {
 public:
  using Error::Error;
};

// Round-trip to an external encoder process failed.
class TransportError : public Error {
 public:
  using Error::Error;
};

class BankFull : public Error {
 public:
  using Error::Error;
};

// k-NN query over a scope with no stored history.
class NoHistory : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed binary file or protocol frame.
class FormatError : public Error {
 public:
  using Error::Error;
};

void require(bool condition, const std::string& message);

}  // namespace advqdet
