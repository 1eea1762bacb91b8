#include "mvsf/alignment.hpp"

#include <stdexcept>

#include <Eigen/SVD>

namespace mvsf {

Posed alignRigid(std::span<const Vec3> target, std::span<const Vec3> source) {
  if (target.size() != source.size() || target.empty()) {
    throw std::invalid_argument("alignRigid: point lists must be nonempty and equal in length");
  }
  const double inv_n = 1.0 / static_cast<double>(target.size());
  Vec3 mean_t = Vec3::Zero();
  Vec3 mean_s = Vec3::Zero();
  for (std::size_t i = 0; i < target.size(); ++i) {
    mean_t += target[i];
    mean_s += source[i];
  }
  mean_t *= inv_n;
  mean_s *= inv_n;

  Mat3 cov = Mat3::Zero();
  for (std::size_t i = 0; i < target.size(); ++i) {
    cov += (target[i] - mean_t) * (source[i] - mean_s).transpose();
  }
  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) d(2, 2) = -1.0;
  const Mat3 r = svd.matrixU() * d * svd.matrixV().transpose();
  return Posed(r, mean_t - r * mean_s);
}

}  // namespace mvsf
