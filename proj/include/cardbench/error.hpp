#pragma once

#include <stdexcept>
#include <string>

namespace cardbench {

// Base class for all workbench errors. Subclasses map to distinct CLI exit codes.
class Error : public std::runtime_error {
 public:
  explicit Error(std::string msg) : std::runtime_error(std::move(msg)) {}
};

// Malformed input text (SQL, CSV, config). Carries a byte offset when known.
class ParseError : public Error {
 public:
  ParseError(std::string msg, size_t position)
      : Error(msg + " (at offset " + std::to_string(position) + ")"), position_(position) {}
  explicit ParseError(std::string msg) : Error(std::move(msg)), position_(0) {}
  size_t position() const { return position_; }

 private:
  size_t position_;
};

// Identifier resolution / typing failures against a catalog.
class SchemaError : public Error {
 public:
  using Error::Error;
};

// Corrupt or version-mismatched serialized payloads (snapshots, models, workload files).
class DecodeError : public Error {
 public:
  using Error::Error;
};

// Remote backend transport failures. Kind distinguishes timeout / HTTP status / bad body.
class TransportError : public Error {
 public:
  enum class Kind { Timeout, HttpStatus, MalformedBody, Connection };

  TransportError(Kind kind, std::string msg) : Error(std::move(msg)), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// Non-finite loss or other unrecoverable training failures.
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace cardbench
