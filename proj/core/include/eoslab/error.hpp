#pragma once

#include <stdexcept>

namespace eoslab {

struct EoslabError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace eoslab
