#pragma once

#include <stdexcept>
#include <string>

namespace roadmesh {

// Error categories map onto CLI exit codes (usage 2, data 3, numeric 4).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace roadmesh
