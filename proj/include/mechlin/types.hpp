#pragma once

#include <Eigen/Dense>

#include <array>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mechlin {

/// Named parameter values bound at evaluation time (ordered for stable output).
using ParamMap = std::map<std::string, double>;

/// Axis-aligned box in configuration space, one [lo, hi] pair per coordinate.
using Box = std::vector<std::array<double, 2>>;

/// A configuration point, optionally carrying a velocity.
struct Point {
    Eigen::VectorXd x;
    std::optional<Eigen::VectorXd> y;

    Point() = default;
    explicit Point(Eigen::VectorXd x_) : x(std::move(x_)) {}
    Point(Eigen::VectorXd x_, Eigen::VectorXd y_) : x(std::move(x_)), y(std::move(y_)) {}

    Eigen::Index dim() const { return x.size(); }
};

struct EvalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ParseError : std::runtime_error {
    std::size_t position;  // zero-based offset into the input text
    ParseError(const std::string& what, std::size_t pos)
        : std::runtime_error(what), position(pos) {}
};

inline bool box_contains(const Box& box, const Eigen::VectorXd& x) {
    if (static_cast<std::size_t>(x.size()) != box.size()) return false;
    for (std::size_t i = 0; i < box.size(); ++i)
        if (x(static_cast<Eigen::Index>(i)) < box[i][0] || x(static_cast<Eigen::Index>(i)) > box[i][1])
            return false;
    return true;
}

}  // namespace mechlin
