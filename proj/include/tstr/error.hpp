#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tstr {

/// Base of every error raised by the library. The CLI maps the three
/// families below onto process exit codes (usage 1, data 2, provider 3).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

/// Malformed, inconsistent or stale input data.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Failure talking to (or trusting) an embedding provider.
class ProviderError : public Error {
 public:
  using Error::Error;
};

class CorpusError : public DataError {
 public:
  CorpusError(std::size_t line, const std::string& what)
      : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class DuplicateIdError : public DataError {
 public:
  explicit DuplicateIdError(std::string id)
      : DataError("duplicate exemplar id \"" + id + "\""), id_(std::move(id)) {}
  const std::string& id() const noexcept { return id_; }

 private:
  std::string id_;
};

class MaskingError : public DataError {
 public:
  MaskingError(std::size_t offset, const std::string& what)
      : DataError("offset " + std::to_string(offset) + ": " + what), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class ShapeError : public DataError {
 public:
  using DataError::DataError;
};

class PoolTooSmallError : public DataError {
 public:
  using DataError::DataError;
};

/// An artifact was derived from inputs that no longer match.
class StaleArtifactError : public DataError {
 public:
  using DataError::DataError;
};

class TrainingError : public DataError {
 public:
  using DataError::DataError;
};

/// Provider answered, but with the wrong number or shape of vectors.
class IntegrityError : public ProviderError {
 public:
  using ProviderError::ProviderError;
};

}  // namespace tstr
