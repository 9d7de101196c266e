#include "mechlin/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <utility>

namespace mechlin {

namespace {

std::string state_text(double t, const Eigen::VectorXd& x) {
    std::ostringstream os;
    os.precision(6);
    os << "t = " << t << ", x = (";
    for (Eigen::Index i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x(i);
    os << ")";
    return os.str();
}

}  // namespace

DomainExit::DomainExit(double t_, Eigen::VectorXd x_)
    : SimulationError("configuration left the domain box at " + state_text(t_, x_)),
      t(t_),
      x(std::move(x_)) {}

NonFiniteState::NonFiniteState(double t_)
    : SimulationError("state became non-finite at t = " + std::to_string(t_)), t(t_) {}

BetaVanished::BetaVanished(double t_, Eigen::VectorXd x_)
    : SimulationError("input gain vanished at " + state_text(t_, x_)), t(t_), x(std::move(x_)) {}

ControlSignal::ControlSignal() : fn_([](double, const Eigen::VectorXd&, const Eigen::VectorXd&) {
    return 0.0;
}) {}

ControlSignal::ControlSignal(Fn fn) : fn_(std::move(fn)) {
    if (!fn_) throw std::invalid_argument("ControlSignal: empty function");
}

ControlSignal ControlSignal::zero() { return ControlSignal(); }

ControlSignal ControlSignal::constant(double value) {
    return ControlSignal(
        [value](double, const Eigen::VectorXd&, const Eigen::VectorXd&) { return value; });
}

ControlSignal ControlSignal::sine(double amplitude, double angular_frequency) {
    return ControlSignal([amplitude, angular_frequency](double t, const Eigen::VectorXd&,
                                                        const Eigen::VectorXd&) {
        return amplitude * std::sin(angular_frequency * t);
    });
}

ControlSignal ControlSignal::table(double t0, double dt, std::vector<double> values) {
    if (dt <= 0.0) throw std::invalid_argument("ControlSignal::table: dt must be positive");
    if (values.size() < 2) throw std::invalid_argument("ControlSignal::table: need >= 2 samples");
    const auto count = values.size();
    std::vector<double> slopes(count);
    slopes.front() = (values[1] - values[0]) / dt;
    slopes.back() = (values[count - 1] - values[count - 2]) / dt;
    for (std::size_t k = 1; k + 1 < count; ++k)
        slopes[k] = (values[k + 1] - values[k - 1]) / (2.0 * dt);

    return ControlSignal([t0, dt, values = std::move(values), slopes = std::move(slopes)](
                             double t, const Eigen::VectorXd&, const Eigen::VectorXd&) {
        const auto last = values.size() - 1;
        const double s = (t - t0) / dt;
        if (s <= 0.0) return values.front() + slopes.front() * (t - t0);
        if (s >= static_cast<double>(last))
            return values[last] + slopes[last] * (t - t0 - static_cast<double>(last) * dt);
        const auto k = static_cast<std::size_t>(s);
        const double u = s - static_cast<double>(k);
        const double h00 = (1.0 + 2.0 * u) * (1.0 - u) * (1.0 - u);
        const double h10 = u * (1.0 - u) * (1.0 - u);
        const double h01 = u * u * (3.0 - 2.0 * u);
        const double h11 = u * u * (u - 1.0);
        return h00 * values[k] + h10 * dt * slopes[k] + h01 * values[k + 1] +
               h11 * dt * slopes[k + 1];
    });
}

double ControlSignal::operator()(double t, const Eigen::VectorXd& x,
                                 const Eigen::VectorXd& y) const {
    return fn_(t, x, y);
}

namespace {

/// Acceleration field of the integrated system: a(t, x, y, u).
using AccelFn =
    std::function<Eigen::VectorXd(double, const Eigen::VectorXd&, const Eigen::VectorXd&)>;

long long step_count(double T, double dt) {
    if (!(dt > 0.0)) throw std::invalid_argument("integrate: dt must be positive");
    if (!(T >= dt)) throw std::invalid_argument("integrate: need T >= dt");
    const long long steps = std::llround(T / dt);
    if (steps > 100'000'000) throw std::invalid_argument("integrate: too many steps");
    return std::max<long long>(1, steps);
}

Trajectory run_rk4(const AccelFn& accel, const ControlSignal& u, const Eigen::VectorXd& x0,
                   const Eigen::VectorXd& y0, double T, double dt, const Box* box) {
    const long long steps = step_count(T, dt);

    Trajectory traj;
    traj.dt = dt;
    traj.times.reserve(static_cast<std::size_t>(steps) + 1);
    traj.positions.reserve(static_cast<std::size_t>(steps) + 1);
    traj.velocities.reserve(static_cast<std::size_t>(steps) + 1);
    traj.inputs.reserve(static_cast<std::size_t>(steps) + 1);

    Eigen::VectorXd x = x0, y = y0;
    traj.times.push_back(0.0);
    traj.positions.push_back(x);
    traj.velocities.push_back(y);
    traj.inputs.push_back(u(0.0, x, y));

    for (long long k = 0; k < steps; ++k) {
        const double t = static_cast<double>(k) * dt;

        const Eigen::VectorXd a1 = accel(t, x, y);
        const Eigen::VectorXd x2 = x + 0.5 * dt * y, y2 = y + 0.5 * dt * a1;
        const Eigen::VectorXd a2 = accel(t + 0.5 * dt, x2, y2);
        const Eigen::VectorXd x3 = x + 0.5 * dt * y2, y3 = y + 0.5 * dt * a2;
        const Eigen::VectorXd a3 = accel(t + 0.5 * dt, x3, y3);
        const Eigen::VectorXd x4 = x + dt * y3, y4 = y + dt * a3;
        const Eigen::VectorXd a4 = accel(t + dt, x4, y4);

        x += dt / 6.0 * (y + 2.0 * y2 + 2.0 * y3 + y4);
        y += dt / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);

        const double tk = static_cast<double>(k + 1) * dt;
        if (!x.allFinite() || !y.allFinite()) throw NonFiniteState(tk);
        if (box && !box_contains(*box, x)) throw DomainExit(tk, x);

        traj.times.push_back(tk);
        traj.positions.push_back(x);
        traj.velocities.push_back(y);
        traj.inputs.push_back(u(tk, x, y));
    }
    return traj;
}

void check_start(const Point& z0, Eigen::Index n) {
    if (z0.x.size() != n) throw std::invalid_argument("integrate: start dimension mismatch");
    if (!z0.y || z0.y->size() != n)
        throw std::invalid_argument("integrate: start state must carry a matching velocity");
    if (!z0.x.allFinite() || !z0.y->allFinite())
        throw std::invalid_argument("integrate: start state must be finite");
}

}  // namespace

Trajectory integrate(const MechanicalSystem& sys, const Point& z0, const ControlSignal& u,
                     double T, double dt) {
    check_start(z0, sys.dim());
    if (!box_contains(sys.domain(), z0.x))
        throw std::invalid_argument("integrate: start configuration outside the domain box");

    const AccelFn accel = [&sys, &u](double t, const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
        const auto gamma = sys.christoffel_at(x);
        Eigen::VectorXd a = sys.drift_at(x) + sys.control_at(x) * u(t, x, y);
        for (int i = 0; i < sys.dim(); ++i)
            a(i) -= y.dot(gamma[static_cast<std::size_t>(i)] * y);
        return a;
    };
    return run_rk4(accel, u, z0.x, *z0.y, T, dt, &sys.domain());
}

Trajectory integrate(const LinearModel& model, const Point& z0, const ControlSignal& u, double T,
                     double dt) {
    check_start(z0, model.E.rows());
    const AccelFn accel = [&model, &u](double t, const Eigen::VectorXd& x,
                                       const Eigen::VectorXd& y) -> Eigen::VectorXd {
        return model.E * x + model.offset + model.b * u(t, x, y);
    };
    return run_rk4(accel, u, z0.x, *z0.y, T, dt, nullptr);
}

ControlSignal closed_loop(const MechanicalFeedback& feedback, const ControlSignal& v,
                          const ParamMap& params) {
    if (!feedback.alpha || !feedback.beta)
        throw std::invalid_argument("closed_loop: feedback is incomplete");
    const int n = feedback.gamma.dim();
    return ControlSignal([feedback, v, params, n](double t, const Eigen::VectorXd& x,
                                                  const Eigen::VectorXd& y) {
        const double beta = eval(feedback.beta, x, params);
        if (std::abs(beta) < 1e-12) throw BetaVanished(t, x);
        double quad = 0.0;
        for (int j = 1; j <= n; ++j)
            for (int k = j; k <= n; ++k) {
                const ExprPtr& gjk = feedback.gamma.at(j, k);
                if (is_zero(gjk)) continue;
                const double weight = j == k ? 1.0 : 2.0;
                quad += weight * eval(gjk, x, params) * y(j - 1) * y(k - 1);
            }
        return quad + eval(feedback.alpha, x, params) + beta * v(t, x, y);
    });
}

namespace {

/// Pointwise tangent lift (phi(x), Dphi(x) y) of a configuration change.
class TangentLift {
  public:
    TangentLift(const MechanicalDiffeo& diffeo, ParamMap params)
        : phi_(diffeo.phi), params_(std::move(params)) {
        const int n = diffeo.dim();
        jac_.resize(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i)
            for (int j = 1; j <= n; ++j)
                jac_[static_cast<std::size_t>(i)].push_back(
                    simplify(diff(phi_[static_cast<std::size_t>(i)], j)));
    }

    std::pair<Eigen::VectorXd, Eigen::VectorXd> lift(const Eigen::VectorXd& x,
                                                     const Eigen::VectorXd& y) const {
        const auto n = static_cast<Eigen::Index>(phi_.size());
        Eigen::VectorXd z(n);
        Eigen::MatrixXd A(n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            z(i) = eval(phi_[static_cast<std::size_t>(i)], x, params_);
            for (Eigen::Index j = 0; j < n; ++j)
                A(i, j) = eval(jac_[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)], x,
                               params_);
        }
        return {std::move(z), A * y};
    }

  private:
    std::vector<ExprPtr> phi_;
    std::vector<std::vector<ExprPtr>> jac_;
    ParamMap params_;
};

}  // namespace

double correspondence_error(const MechanicalSystem& sys, const LinearModel& model,
                            const MechanicalDiffeo& diffeo, const MechanicalFeedback& feedback,
                            const Point& z0, const ControlSignal& utilde, double T, double dt) {
    if (diffeo.dim() != sys.dim() || model.E.rows() != sys.dim())
        throw std::invalid_argument("correspondence_error: dimension mismatch");
    check_start(z0, sys.dim());

    const Trajectory traj = integrate(sys, z0, closed_loop(feedback, utilde, sys.params()), T, dt);

    const TangentLift lift(diffeo, sys.params());
    const auto [ztilde0, wtilde0] = lift.lift(z0.x, *z0.y);
    const Trajectory lin = integrate(model, Point(ztilde0, wtilde0), utilde, T, dt);

    double worst = 0.0;
    for (std::size_t k = 0; k < traj.size(); ++k) {
        const auto [z, w] = lift.lift(traj.positions[k], traj.velocities[k]);
        worst = std::max(worst, (z - lin.positions[k]).cwiseAbs().maxCoeff());
        worst = std::max(worst, (w - lin.velocities[k]).cwiseAbs().maxCoeff());
    }
    return worst;
}

void write_csv(const Trajectory& traj, std::ostream& os) {
    const Eigen::Index n = traj.positions.empty() ? 0 : traj.positions.front().size();
    os << "t";
    for (Eigen::Index i = 1; i <= n; ++i) os << ", x" << i;
    for (Eigen::Index i = 1; i <= n; ++i) os << ", y" << i;
    os << ", u\n";
    os << std::setprecision(17);
    for (std::size_t k = 0; k < traj.size(); ++k) {
        os << traj.times[k];
        for (Eigen::Index i = 0; i < n; ++i) os << ", " << traj.positions[k](i);
        for (Eigen::Index i = 0; i < n; ++i) os << ", " << traj.velocities[k](i);
        os << ", " << traj.inputs[k] << "\n";
    }
}

void write_csv(const Trajectory& traj, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    write_csv(traj, out);
}

}  // namespace mechlin
