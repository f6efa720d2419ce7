#pragma once
#include <stdexcept>

namespace gfn {

struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct contract_violation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct numeric_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace gfn
