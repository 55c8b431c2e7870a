#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>

namespace sdtest {

/// Plain 3-vector used for measurement directions, Bloch vectors and hidden
/// variables.
struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    constexpr Vec3 operator-() const { return {-x, -y, -z}; }
    constexpr Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    constexpr bool operator==(const Vec3&) const = default;
};

constexpr Vec3 operator*(double s, const Vec3& v) { return v * s; }

constexpr double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

constexpr Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

inline double norm(const Vec3& v) { return std::sqrt(dot(v, v)); }

inline bool is_finite(const Vec3& v) {
    return std::isfinite(v.x) && std::isfinite(v.y) && std::isfinite(v.z);
}

inline constexpr double kUnitTolerance = 1e-12;

/// Physical constants in the toolkit's unit system (eV, K, s, m).
struct PhysicalConstants {
    static constexpr double boltzmann_eV_per_K = 8.617333262e-5;
    static constexpr double speed_of_light = 2.99792458e8;
};

/// A two-outcome measurement result, +1 or -1.
class Outcome {
public:
    constexpr Outcome() = default;
    explicit Outcome(int value) : value_(value) {
        if (value != 1 && value != -1) {
            throw std::invalid_argument("Outcome must be +1 or -1, got " + std::to_string(value));
        }
    }

    static constexpr Outcome plus() { return Outcome{Tag{}, 1}; }
    static constexpr Outcome minus() { return Outcome{Tag{}, -1}; }

    constexpr int value() const { return value_; }
    constexpr char symbol() const { return value_ > 0 ? '+' : '-'; }
    constexpr Outcome flipped() const { return Outcome{Tag{}, -value_}; }
    constexpr bool operator==(const Outcome&) const = default;

private:
    struct Tag {};
    constexpr Outcome(Tag, int v) : value_(v) {}
    int value_ = 1;
};

/// A directional two-outcome observable (spin or polarization along a unit
/// direction).
class Observable {
public:
    Observable(Vec3 direction, std::string label) : direction_(direction), label_(std::move(label)) {
        if (!is_finite(direction_)) {
            throw std::invalid_argument("Observable direction must be finite");
        }
        const double n = norm(direction_);
        if (std::abs(n - 1.0) > kUnitTolerance) {
            // Accept near-unit input and renormalize; reject anything else.
            if (std::abs(n - 1.0) > 1e-6) {
                throw std::invalid_argument("Observable direction must be a unit vector (|d| = " +
                                            std::to_string(n) + ")");
            }
            direction_ = direction_ * (1.0 / n);
        }
        if (label_.empty()) {
            throw std::invalid_argument("Observable label must be non-empty");
        }
    }

    const Vec3& direction() const { return direction_; }
    const std::string& label() const { return label_; }

    bool operator==(const Observable&) const = default;

private:
    Vec3 direction_;
    std::string label_;
};

/// Direction (sin p cos a, sin p sin a, cos p) from polar/azimuthal angles in
/// radians.
inline Observable observable_from_angles(double polar, double azimuth, std::string label) {
    if (!std::isfinite(polar) || !std::isfinite(azimuth)) {
        throw std::invalid_argument("observable_from_angles: angles must be finite");
    }
    const Vec3 d{std::sin(polar) * std::cos(azimuth), std::sin(polar) * std::sin(azimuth),
                 std::cos(polar)};
    return Observable{d, std::move(label)};
}

/// Inverse of observable_from_angles: (polar, azimuth) in radians.
inline std::pair<double, double> angles_of(const Observable& obs) {
    const Vec3& d = obs.direction();
    const double polar = std::acos(std::clamp(d.z, -1.0, 1.0));
    const double azimuth = std::atan2(d.y, d.x);
    return {polar, azimuth};
}

/// Angle between two measurement directions, in [0, pi].
inline double angle_between(const Observable& a, const Observable& b) {
    // Symmetric by construction: dot product commutes bit-exactly.
    const double c = dot(a.direction(), b.direction());
    return std::acos(std::clamp(c, -1.0, 1.0));
}

inline constexpr double degrees_to_radians(double deg) { return deg * std::numbers::pi / 180.0; }

}  // namespace sdtest
