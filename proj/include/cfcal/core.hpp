// Shared vocabulary for the calibration engine: state vectors, error types,
// frame arithmetic.

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace cfcal {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Frames index the shared time grid: t = frame * dt.
using Frame = std::int64_t;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Position and speed of one vehicle at one instant.
struct State {
    double pos{0.0};
    double speed{0.0};

    friend bool operator==(const State&, const State&) = default;
};

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed or inconsistent trajectory data.
class DataError : public Error {
public:
    using Error::Error;
};

// Model evaluation produced something unusable (non-finite, unsupported).
class ModelError : public Error {
public:
    using Error::Error;
};

// Parameters outside their admissible domain.
class ParameterError : public Error {
public:
    using Error::Error;
};

// Inputs that do not line up (grid mismatch, wrong sizes, missing memory).
class StructuralError : public Error {
public:
    using Error::Error;
};

inline Frame frame_of(double t, double dt) {
    return static_cast<Frame>(std::llround(t / dt));
}

inline bool is_finite(const State& s) {
    return std::isfinite(s.pos) && std::isfinite(s.speed);
}

}  // namespace cfcal
