#pragma once

#include <stdexcept>
#include <string>

namespace seqsel {

enum class ErrorKind {
  invalid_argument,
  config,
  data,
  template_error,
  missing_example,
  pool_exhausted,
  backend,
  scoring,
  model,
  search,
  empty_training_set,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg, bool retryable = false)
      : std::runtime_error(msg), kind_(kind), retryable_(retryable) {}

  ErrorKind kind() const { return kind_; }
  bool retryable() const { return retryable_; }

 private:
  ErrorKind kind_;
  bool retryable_;
};

inline void require(bool cond, ErrorKind kind, const std::string& msg) {
  if (!cond) throw Error(kind, msg);
}

}  // namespace seqsel
