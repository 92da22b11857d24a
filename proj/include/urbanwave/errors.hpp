#pragma once

#include <stdexcept>
#include <string>

namespace urbanwave {

/// Malformed or inconsistent user input (files, config, arguments).
class InputError : public std::runtime_error {
 public:
  explicit InputError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace urbanwave
