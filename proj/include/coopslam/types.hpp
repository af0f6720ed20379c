#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace coopslam {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec5 = Eigen::Matrix<double, 5, 1>;
using Mat5 = Eigen::Matrix<double, 5, 5>;
using Mat53 = Eigen::Matrix<double, 5, 3>;
using Mat35 = Eigen::Matrix<double, 3, 5>;

inline constexpr double kPi = std::numbers::pi;

/// Raised when a measurement function is undefined for the given geometry
/// (e.g. a vehicle lying on the reflecting plane of a virtual anchor).
class GeometryError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised on factorization failures and other non-recoverable numerics.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when every particle weight has collapsed to zero.
class FilterDivergence : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Wraps an angle to (-pi, pi].
inline double wrap_angle(double a) {
    if (a > -kPi && a <= kPi) return a;
    double r = std::remainder(a, 2.0 * kPi);
    if (r <= -kPi) r += 2.0 * kPi;
    return r;
}

enum class SourceType { BS = 0, VA = 1, SP = 2 };

inline const char* to_string(SourceType t) {
    switch (t) {
        case SourceType::BS: return "BS";
        case SourceType::VA: return "VA";
        case SourceType::SP: return "SP";
    }
    return "?";
}

inline SourceType source_type_from_string(const std::string& s) {
    if (s == "BS") return SourceType::BS;
    if (s == "VA") return SourceType::VA;
    if (s == "SP") return SourceType::SP;
    throw std::invalid_argument("unknown source type '" + s + "'");
}

struct Source {
    SourceType kind = SourceType::SP;
    Vec3 location = Vec3::Zero();
};

}  // namespace coopslam
