#pragma once

#include <stdexcept>
#include <string>

namespace delip {

// Exit codes shared by the CLI: 2 usage, 3 data/contract violation, 4 numeric failure.
class UsageError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class ContractError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace delip
