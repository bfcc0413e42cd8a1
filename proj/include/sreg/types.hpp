#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace sreg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;
using IndexSet = std::vector<Index>;

/// Runtime failure inside an estimator, design or fitter.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Iterative solver or sampler ran out of its budget.
class ConvergenceError : public Error {
public:
    using Error::Error;
};

}  // namespace sreg
