#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

// Core value types and unit conventions shared by every module.
// Length km, time s, mass kg throughout; conversions happen only at
// configuration boundaries.

namespace smallbody {

using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat6 = Eigen::Matrix<double, 6, 6>;

namespace constants {
// CODATA gravitational constant in km^3 kg^-1 s^-2
inline constexpr double G = 6.67430e-20;
inline constexpr double pi = 3.14159265358979323846;
}  // namespace constants

namespace units {
// density: g/cm^3 -> kg/km^3
inline constexpr double density_to_kg_km3(double g_cm3) { return g_cm3 * 1.0e12; }
// rotation period in hours -> spin rate rad/s
inline constexpr double period_hours_to_rad_s(double hours) {
    return 2.0 * constants::pi / (hours * 3600.0);
}
// control acceleration: mm/s^2 -> km/s^2
inline constexpr double accel_mm_s2_to_km_s2(double mm_s2) { return mm_s2 * 1.0e-6; }
}  // namespace units

/// Spacecraft state in the asteroid body-fixed frame.
struct State {
    Vec3 r{Vec3::Zero()};  // km
    Vec3 v{Vec3::Zero()};  // km/s
    double t{0.0};         // s

    Vec6 vec() const {
        Vec6 y;
        y << r, v;
        return y;
    }
    static State from_vec(const Vec6& y, double t = 0.0) {
        State s;
        s.r = y.head<3>();
        s.v = y.tail<3>();
        s.t = t;
        return s;
    }
};

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ParseError : Error {
    using Error::Error;
};
struct TopologyError : Error {
    using Error::Error;
};
struct DegenerateFaceError : Error {
    int face = -1;
    DegenerateFaceError(const std::string& msg, int f) : Error(msg), face(f) {}
};
struct EdgeSingularityError : Error {
    int edge = -1;
    EdgeSingularityError(const std::string& msg, int e) : Error(msg), edge(e) {}
};
struct NotOnSectionError : Error {
    using Error::Error;
};
struct DegenerateCostateError : Error {
    using Error::Error;
};
struct NonConvergenceError : Error {
    using Error::Error;
};
struct InfeasibleTransferError : NonConvergenceError {
    using NonConvergenceError::NonConvergenceError;
};
struct EscapeError : Error {
    using Error::Error;
};
struct CollisionError : Error {
    using Error::Error;
};
struct EmptySetError : Error {
    using Error::Error;
};
struct StepSizeUnderflowError : Error {
    using Error::Error;
};
struct IoError : Error {
    using Error::Error;
};

}  // namespace smallbody
