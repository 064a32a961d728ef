#pragma once

#include <stdexcept>
#include <string>

namespace ksfront {

// Invalid model, alpha-line or policy parameters.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A query outside the simulated time window of a path or system.
class HorizonError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// Inputs that are individually valid but do not belong together
// (a front trace built from another system, a non-jump time, ...).
class ConsistencyError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class InsufficientDataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// On-disk output does not match its recorded hash.
class IntegrityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MergeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ksfront
