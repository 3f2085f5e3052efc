#pragma once

#include <stdexcept>
#include <string>

namespace fmkt {

// Invalid configuration (bad enum value, unsupported mode combination, ...).
class config_error : public std::invalid_argument {
public:
    explicit config_error(const std::string& what) : std::invalid_argument(what) {}
};

// Tensor shape disagreement between operands.
class shape_error : public std::invalid_argument {
public:
    explicit shape_error(const std::string& what) : std::invalid_argument(what) {}
};

// Non-finite value produced during flow evaluation. Carries the time point
// and step index of the failing Euler step (step < 0 when unknown).
class numerical_failure : public std::runtime_error {
public:
    numerical_failure(const std::string& what, double t, int step)
        : std::runtime_error(what), t(t), step(step) {}
    double t = 0.0;
    int step = -1;
};

// Missing/corrupt file, bad archive, version mismatch.
class io_error : public std::runtime_error {
public:
    explicit io_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace fmkt
