#pragma once

// Fixed-step integration of mechanical systems, closed-loop input wrapping,
// and the trajectory-correspondence measurement between an original system and
// its synthesized linear model.

#include "mechlin/synthesis.hpp"
#include "mechlin/system.hpp"

#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace mechlin {

struct SimulationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// The configuration left the system's domain box at time t.
struct DomainExit : SimulationError {
    double t;
    Eigen::VectorXd x;
    DomainExit(double t_, Eigen::VectorXd x_);
};

/// The state stopped being finite (overflow or NaN) at time t.
struct NonFiniteState : SimulationError {
    double t;
    explicit NonFiniteState(double t_);
};

/// The input gain of a closed-loop wrapper vanished along the trajectory.
struct BetaVanished : SimulationError {
    double t;
    Eigen::VectorXd x;
    BetaVanished(double t_, Eigen::VectorXd x_);
};

/// Scalar input u(t, x, y).  Time-only signals ignore the state arguments;
/// closed-loop wrappers use them.
class ControlSignal {
  public:
    using Fn = std::function<double(double, const Eigen::VectorXd&, const Eigen::VectorXd&)>;

    ControlSignal();  // identically zero
    explicit ControlSignal(Fn fn);

    static ControlSignal zero();
    static ControlSignal constant(double value);
    static ControlSignal sine(double amplitude, double angular_frequency);
    /// Cubic-Hermite interpolation of uniformly spaced samples starting at t0;
    /// slopes from central differences, linear extrapolation outside the table.
    static ControlSignal table(double t0, double dt, std::vector<double> values);

    double operator()(double t, const Eigen::VectorXd& x, const Eigen::VectorXd& y) const;

  private:
    Fn fn_;
};

struct Trajectory {
    std::vector<double> times;                 // uniform grid 0, dt, ..., steps*dt
    std::vector<Eigen::VectorXd> positions;    // x(t_k)
    std::vector<Eigen::VectorXd> velocities;   // y(t_k)
    std::vector<double> inputs;                // u(t_k, x(t_k), y(t_k))
    double dt = 0.0;

    std::size_t size() const { return times.size(); }
};

/// Classical fixed-step fourth-order Runge-Kutta on the first-order form
/// (x' = y, y' = -Gamma(x)(y,y) + e(x) + g(x) u).  The start state must carry a
/// velocity and lie inside the domain box; leaving the box or losing finiteness
/// aborts the run.
Trajectory integrate(const MechanicalSystem& sys, const Point& z0, const ControlSignal& u,
                     double T, double dt);

/// Same scheme on the fitted linear model (x' = y, y' = E x + offset + b u).
/// No domain restriction applies.
Trajectory integrate(const LinearModel& model, const Point& z0, const ControlSignal& u, double T,
                     double dt);

/// Wraps a new input v into the original one, u = y^T gamma(x) y + alpha(x) +
/// beta(x) v(t, x, y); params bind any symbolic parameters in the feedback
/// expressions.  Evaluation throws BetaVanished when |beta(x)| falls below
/// 1e-12.
ControlSignal closed_loop(const MechanicalFeedback& feedback, const ControlSignal& v,
                          const ParamMap& params = {});

/// sup over the grid of the infinity-norm gap between the tangent lift
/// (phi(x), Dphi(x) y) of the closed-loop trajectory and the linear model's
/// trajectory started from the lifted initial state under the same new input.
double correspondence_error(const MechanicalSystem& sys, const LinearModel& model,
                            const MechanicalDiffeo& diffeo, const MechanicalFeedback& feedback,
                            const Point& z0, const ControlSignal& utilde, double T, double dt);

/// Header "t, x1..xn, y1..yn, u", one row per grid point, 17 significant
/// digits.
void write_csv(const Trajectory& traj, std::ostream& os);
void write_csv(const Trajectory& traj, const std::string& path);

}  // namespace mechlin
