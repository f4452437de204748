#ifndef EVOPO_ERROR_HPP
#define EVOPO_ERROR_HPP

#include <stdexcept>
#include <string>

namespace evopo {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A reward group is too small (or otherwise malformed) for the requested estimator.
class InvalidGroup : public Error {
 public:
  using Error::Error;
};

/// Best-of-k subset size outside the valid range for the group.
class InvalidK : public Error {
 public:
  using Error::Error;
};

class InvalidInput : public Error {
 public:
  using Error::Error;
};

class InvalidIteration : public Error {
 public:
  using Error::Error;
};

/// The entropic KL budget cannot be met (constant rewards have zero KL for every beta).
class UnreachableBudget : public Error {
 public:
  using Error::Error;
};

/// Exhaustive enumeration requested beyond its size guard.
class EnumerationGuard : public Error {
 public:
  using Error::Error;
};

class DegenerateBounds : public Error {
 public:
  using Error::Error;
};

class DegenerateProfile : public Error {
 public:
  using Error::Error;
};

class InvalidToken : public Error {
 public:
  using Error::Error;
};

class EmptyBatch : public Error {
 public:
  using Error::Error;
};

/// A non-finite value appeared while computing the loss or its gradient.
class NumericFailure : public Error {
 public:
  NumericFailure(const std::string& what, std::size_t token_index)
      : Error(what + " (token " + std::to_string(token_index) + ")"), token_index_(token_index) {}

  std::size_t token_index() const noexcept { return token_index_; }

 private:
  std::size_t token_index_;
};

/// Bad or unknown run-configuration key/value. `key()` names the offending key.
class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& what) : Error(what), key_(std::move(key)) {}

  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

}  // namespace evopo

#endif  // EVOPO_ERROR_HPP
