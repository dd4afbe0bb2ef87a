#pragma once

#include <stdexcept>
#include <string>

namespace nlfb {

/// Invalid model input: a kernel violating its assumptions, a bad config value,
/// a violated precondition on the model parameters. CLI exit code 1.
class ModelInputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Numerical failure: non-convergence, stability violation, scheme breakdown.
/// CLI exit code 2.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// (J1) fails, so a finite-moment quantity does not exist.
class DivergentMomentError : public ModelInputError {
public:
    using ModelInputError::ModelInputError;
};

} // namespace nlfb
