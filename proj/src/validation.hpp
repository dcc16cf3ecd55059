#pragma once

#include <span>

#include <Eigen/Dense>

#include "residuum/dataspec.hpp"

namespace residuum::detail {

// Shape, finiteness and label checks shared by the classifier fitters.
void validate_training_data(const Eigen::MatrixXd& x, std::span<const std::size_t> y, const LabelSet& classes);

} // namespace residuum::detail
