#pragma once

#include <stdexcept>
#include <string>

namespace treerec {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad or inconsistent input data (catalogs, logs, histories, tree files).
class DataError : public Error {
 public:
  using Error::Error;
};

class EmptyCatalog : public DataError {
 public:
  EmptyCatalog() : DataError("catalog contains no usable items") {}
  using DataError::DataError;
};

class EmptyHistory : public DataError {
 public:
  EmptyHistory() : DataError("interaction history is empty") {}
  using DataError::DataError;
};

class NodeNotFound : public DataError {
 public:
  using DataError::DataError;
};

class NotALeaf : public DataError {
 public:
  using DataError::DataError;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Anything that went wrong while talking to a chat-completion backend.
class BackendFailure : public Error {
 public:
  using Error::Error;
};

// Transport failures that survived every retry.
class BackendUnavailable : public BackendFailure {
 public:
  using BackendFailure::BackendFailure;
};

class BackendError : public BackendFailure {
 public:
  BackendError(int status, const std::string& body)
      : BackendFailure("backend returned HTTP " + std::to_string(status) +
                       (body.empty() ? "" : ": " + body)),
        status_(status) {}

  int status() const noexcept { return status_; }

 private:
  int status_;
};

// The mock backend received a prompt it cannot classify; usually a template regression.
class MockProtocolError : public BackendFailure {
 public:
  using BackendFailure::BackendFailure;
};

// A reply contained no numbered entry that maps onto the offered vocabulary.
class MalformedOutput : public Error {
 public:
  using Error::Error;
};

}  // namespace treerec
