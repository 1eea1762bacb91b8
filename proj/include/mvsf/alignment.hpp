#pragma once

#include <span>

#include "mvsf/geometry.hpp"

namespace mvsf {

/// Closed-form rigid alignment: the pose T minimizing sum ||target_i - T * source_i||^2.
///
/// SVD of the cross-covariance with a reflection guard. Needs at least three
/// non-collinear correspondences for a unique answer; throws
/// std::invalid_argument on size mismatch or empty input.
Posed alignRigid(std::span<const Vec3> target, std::span<const Vec3> source);

}  // namespace mvsf
