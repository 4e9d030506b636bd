#pragma once

#include <stdexcept>
#include <string>

namespace kcit {

/// Invalid user-facing configuration (bad kernel spec, bad grid, bad file).
class config_error : public std::runtime_error {
  public:
    explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

/// Numerical failure at runtime (factorization, eigensolve, degenerate data).
class numerical_error : public std::runtime_error {
  public:
    explicit numerical_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace kcit
