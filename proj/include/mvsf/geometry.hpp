#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <string_view>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace mvsf {

template <typename Scalar>
using Vector3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar>
using Vector6 = Eigen::Matrix<Scalar, 6, 1>;
template <typename Scalar>
using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;

using Vec3 = Vector3<double>;
using Vec6 = Vector6<double>;
using Mat3 = Matrix3<double>;

// Coordinate frames of the two-camera, two-instant setting. Unspecified
// matches anything and is what generic poses (tests, noise) carry.
enum class Frame : std::uint8_t { Unspecified, A_t0, A_t1, B_t0, B_t1, World };

std::string_view toString(Frame frame);

inline bool framesCompatible(Frame a, Frame b) {
  return a == Frame::Unspecified || b == Frame::Unspecified || a == b;
}

#ifdef NDEBUG
#define MVSF_FRAME_CHECK(a, b) ((void)0)
#else
#define MVSF_FRAME_CHECK(a, b) assert(::mvsf::framesCompatible((a), (b)) && "frame mismatch")
#endif

// A transform maps coordinates expressed in `source` into `target`.
struct FramePair {
  Frame target = Frame::Unspecified;
  Frame source = Frame::Unspecified;
};

struct Point3 {
  Vec3 coords = Vec3::Zero();
  Frame frame = Frame::Unspecified;
};

struct FlowVector {
  Vec3 delta = Vec3::Zero();
  Frame frame = Frame::B_t0;
};

// Local 6-dof coordinates around a pose. Stacked order is [rot; trans].
template <typename Scalar>
struct TangentDelta {
  Vector3<Scalar> rot = Vector3<Scalar>::Zero();
  Vector3<Scalar> trans = Vector3<Scalar>::Zero();

  static TangentDelta fromVector(const Vector6<Scalar>& v) {
    return {v.template head<3>(), v.template tail<3>()};
  }
  Vector6<Scalar> toVector() const {
    Vector6<Scalar> v;
    v << rot, trans;
    return v;
  }
};

template <typename Scalar>
Matrix3<Scalar> skew(const Vector3<Scalar>& v) {
  Matrix3<Scalar> m;
  m << Scalar(0), -v.z(), v.y(), v.z(), Scalar(0), -v.x(), -v.y(), v.x(), Scalar(0);
  return m;
}

/// Unit quaternion rotating by angle |phi| about phi.
///
/// Uses a series expansion near zero so that the function stays
/// differentiable at the origin for automatic-differentiation scalars.
template <typename Scalar>
Eigen::Quaternion<Scalar> quatExp(const Vector3<Scalar>& phi) {
  using std::cos;
  using std::sin;
  using std::sqrt;
  const Scalar theta_sq = phi.squaredNorm();
  Scalar w;
  Scalar k;
  if (theta_sq < Scalar(1e-10)) {
    w = Scalar(1) - theta_sq / Scalar(8);
    k = Scalar(0.5) - theta_sq / Scalar(48);
  } else {
    const Scalar theta = sqrt(theta_sq);
    w = cos(theta / Scalar(2));
    k = sin(theta / Scalar(2)) / theta;
  }
  Eigen::Quaternion<Scalar> q(w, k * phi.x(), k * phi.y(), k * phi.z());
  return q;
}

/// Rotation vector of a unit quaternion, angle in [0, pi].
template <typename Scalar>
Vector3<Scalar> quatLog(const Eigen::Quaternion<Scalar>& q_in) {
  using std::atan2;
  using std::sqrt;
  Eigen::Quaternion<Scalar> q = q_in;
  if (q.w() < Scalar(0)) q.coeffs() = -q.coeffs();
  const Vector3<Scalar> v = q.vec();
  const Scalar s_sq = v.squaredNorm();
  Scalar k;
  if (s_sq < Scalar(1e-10)) {
    // 2*atan(s/w)/s expanded around s = 0
    k = Scalar(2) / q.w() - Scalar(2) * s_sq / (Scalar(3) * q.w() * q.w() * q.w());
  } else {
    const Scalar s = sqrt(s_sq);
    k = Scalar(2) * atan2(s, q.w()) / s;
  }
  return k * v;
}

/// Rotation matrix exponential.
template <typename Scalar>
Matrix3<Scalar> expSO3(const Vector3<Scalar>& phi) {
  return quatExp(phi).toRotationMatrix();
}

/// Inverse of the left Jacobian of SO(3).
inline Mat3 leftJacobianInverseSO3(const Vec3& phi) {
  const double theta_sq = phi.squaredNorm();
  const Mat3 w = skew<double>(phi);
  if (theta_sq < 1e-10) return Mat3::Identity() - 0.5 * w + (1.0 / 12.0) * w * w;
  const double theta = std::sqrt(theta_sq);
  const double coef =
      1.0 / theta_sq - (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
  return Mat3::Identity() - 0.5 * w + coef * w * w;
}

/// Rigid transform stored as unit quaternion (w >= 0) plus translation.
template <typename Scalar>
class Pose {
 public:
  using Quaternion = Eigen::Quaternion<Scalar>;

  Pose() : rotation_(Quaternion::Identity()), translation_(Vector3<Scalar>::Zero()) {}

  Pose(const Quaternion& rotation, const Vector3<Scalar>& translation,
       FramePair frames = {})
      : rotation_(rotation), translation_(translation), frames_(frames) {
    canonicalize();
  }

  Pose(const Matrix3<Scalar>& rotation, const Vector3<Scalar>& translation,
       FramePair frames = {})
      : Pose(Quaternion(rotation), translation, frames) {}

  static Pose identity() { return Pose(); }

  static Pose fromTranslation(const Vector3<Scalar>& t) { return Pose(Quaternion::Identity(), t); }

  static Pose fromRotationVector(const Vector3<Scalar>& phi,
                                 const Vector3<Scalar>& t = Vector3<Scalar>::Zero()) {
    return Pose(quatExp(phi), t);
  }

  const Quaternion& rotation() const { return rotation_; }
  const Vector3<Scalar>& translation() const { return translation_; }
  Matrix3<Scalar> rotationMatrix() const { return rotation_.toRotationMatrix(); }

  Eigen::Matrix<Scalar, 4, 4> matrix() const {
    Eigen::Matrix<Scalar, 4, 4> m = Eigen::Matrix<Scalar, 4, 4>::Identity();
    m.template topLeftCorner<3, 3>() = rotationMatrix();
    m.template topRightCorner<3, 1>() = translation_;
    return m;
  }

  const FramePair& frames() const { return frames_; }
  Pose withFrames(FramePair frames) const {
    Pose p = *this;
    p.frames_ = frames;
    return p;
  }

  template <typename Other>
  Pose<Other> cast() const {
    return Pose<Other>(rotation_.template cast<Other>(), translation_.template cast<Other>(),
                       frames_);
  }

  Vector3<Scalar> operator*(const Vector3<Scalar>& p) const { return rotation_ * p + translation_; }

 private:
  void canonicalize() {
    using std::sqrt;
    const Scalar n = sqrt(rotation_.coeffs().squaredNorm());
    rotation_.coeffs() /= n;
    if (rotation_.w() < Scalar(0)) rotation_.coeffs() = -rotation_.coeffs();
  }

  Quaternion rotation_;
  Vector3<Scalar> translation_;
  FramePair frames_;
};

using Posed = Pose<double>;

/// Maps points through b first, then a.
template <typename Scalar>
Pose<Scalar> compose(const Pose<Scalar>& a, const Pose<Scalar>& b) {
  MVSF_FRAME_CHECK(a.frames().source, b.frames().target);
  return Pose<Scalar>(a.rotation() * b.rotation(), a.rotation() * b.translation() + a.translation(),
                      {a.frames().target, b.frames().source});
}

template <typename Scalar>
Pose<Scalar> inverse(const Pose<Scalar>& a) {
  const auto q_inv = a.rotation().conjugate();
  return Pose<Scalar>(q_inv, -(q_inv * a.translation()), {a.frames().source, a.frames().target});
}

template <typename Scalar>
Vector3<Scalar> apply(const Pose<Scalar>& a, const Vector3<Scalar>& p) {
  return a * p;
}

inline Point3 apply(const Posed& a, const Point3& p) {
  MVSF_FRAME_CHECK(a.frames().source, p.frame);
  return {a * p.coords, a.frames().target};
}

/// Manifold plus: rotation perturbed on the right, translation additively.
template <typename Scalar>
Pose<Scalar> retract(const Pose<Scalar>& a, const TangentDelta<Scalar>& d) {
  return Pose<Scalar>(a.rotation() * quatExp(d.rot), a.translation() + d.trans, a.frames());
}

/// Manifold minus: the delta d with retract(a, d) == b.
template <typename Scalar>
TangentDelta<Scalar> local(const Pose<Scalar>& a, const Pose<Scalar>& b) {
  return {quatLog<Scalar>(a.rotation().conjugate() * b.rotation()),
          b.translation() - a.translation()};
}

/// Geodesic angle between two rotations, radians.
inline double rotationAngle(const Posed& a, const Posed& b) {
  return local(a, b).rot.norm();
}

}  // namespace mvsf
