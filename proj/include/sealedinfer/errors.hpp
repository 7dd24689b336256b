#pragma once

#include <stdexcept>
#include <string>

namespace sealedinfer {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Value does not fit the fixed-point range of the ring.
class OverflowError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// A pool of correlated randomness ran dry, or was already consumed.
class ExhaustedError : public Error {
 public:
  using Error::Error;
};

class CryptoError : public Error {
 public:
  using Error::Error;
};

class ProtocolError : public Error {
 public:
  using Error::Error;
};

class FrameError : public ProtocolError {
 public:
  using ProtocolError::ProtocolError;
};

class TransportError : public ProtocolError {
 public:
  using ProtocolError::ProtocolError;
};

// Handshake disagreement; field() names the first mismatching config field.
class HandshakeError : public ProtocolError {
 public:
  HandshakeError(std::string field, const std::string& what)
      : ProtocolError(what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Metric undefined for the given data (e.g. AUROC with one class).
class MetricError : public Error {
 public:
  using Error::Error;
};

}  // namespace sealedinfer
