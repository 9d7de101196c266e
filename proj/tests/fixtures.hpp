#pragma once

// Shared builders for the benchmark systems and random-system generators used
// across the test suites.

#include "mechlin/parse.hpp"
#include "mechlin/system.hpp"

#include <random>

namespace fixtures {

using namespace mechlin;

// Flat 2-D system with a single curvature entry; fails the n=2 test battery.
inline MechanicalSystem example1(Box box = {{-1.0, 1.0}, {-1.0, 1.0}}) {
    std::vector<SymExprMatrix> G(2, SymExprMatrix(2));
    G[0].set(1, 1, parse_expr("x2"));
    VecField e = {parse_expr("x2"), zero()};
    VecField g = {zero(), one()};
    return MechanicalSystem(2, std::move(G), std::move(e), std::move(g), std::move(box), {},
                            "example1");
}

// Inertia wheel pendulum: flat connection, gravity drift, scalar torque.
inline MechanicalSystem iwp(Box box = {{-1.0, 1.0}, {-5.0, 5.0}}) {
    std::vector<SymExprMatrix> G(2, SymExprMatrix(2));
    VecField e = {parse_expr("m0/md*sin(x1)"), parse_expr("-m0/md*sin(x1)")};
    VecField g = {parse_expr("-1/md"), parse_expr("(md+J2)/(J2*md)")};
    ParamMap pm{{"m0", 10.0}, {"md", 1.1}, {"J2", 0.15}};
    return MechanicalSystem(2, std::move(G), std::move(e), std::move(g), std::move(box),
                            std::move(pm), "iwp");
}

// Two-cart / torsional oscillator chain with an arm on the second cart.
inline MechanicalSystem tora3(double x3lim = 1.2) {
    std::vector<SymExprMatrix> G(3, SymExprMatrix(3));
    G[1].set(3, 3, parse_expr("-(m3*l3/(m2+m3))*sin(x3)"));
    VecField e = {parse_expr("-((k1+k2)/m1)*x1 + (k2/m1)*x2"),
                  parse_expr("(k2/(m2+m3))*(x1-x2)"), zero()};
    VecField g = {zero(), parse_expr("-(m3*l3/(m2+m3))*cos(x3)"), one()};
    ParamMap pm{{"m1", 1.3}, {"m2", 0.7}, {"m3", 0.2}, {"J3", 0.01},
                {"l3", 0.3}, {"k1", 180.0}, {"k2", 120.0}, {"a", 9.81}};
    Box box{{-10.0, 10.0}, {-10.0, 10.0}, {-x3lim, x3lim}};
    return MechanicalSystem(3, std::move(G), std::move(e), std::move(g), std::move(box),
                            std::move(pm), "tora3");
}

// Polynomial-plus-trig scalar, smooth on all of R^n.
inline ExprPtr random_scalar(std::mt19937& rng, int n, int terms = 3) {
    std::uniform_int_distribution<int> pick_var(1, n);
    std::uniform_int_distribution<int> pick_kind(0, 4);
    std::uniform_int_distribution<int> pick_coef(-3, 3);
    std::vector<ExprPtr> acc;
    for (int t = 0; t < terms; ++t) {
        int c = pick_coef(rng);
        if (c == 0) c = 1;
        ExprPtr term;
        switch (pick_kind(rng)) {
            case 0: term = var(pick_var(rng)); break;
            case 1: term = mul(var(pick_var(rng)), var(pick_var(rng))); break;
            case 2: term = sin_(var(pick_var(rng))); break;
            case 3: term = cos_(var(pick_var(rng))); break;
            default: term = intpow(var(pick_var(rng)), 2); break;
        }
        acc.push_back(mul(rational(c), std::move(term)));
    }
    return simplify(add(std::move(acc)));
}

inline VecField random_field(std::mt19937& rng, int n) {
    VecField f(static_cast<std::size_t>(n));
    for (auto& c : f) c = random_scalar(rng, n);
    return f;
}

// Random mechanical system with sparse curvature, no symbolic parameters.
inline MechanicalSystem random_system(std::mt19937& rng, int n) {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::vector<SymExprMatrix> G(static_cast<std::size_t>(n), SymExprMatrix(n));
    for (int i = 1; i <= n; ++i)
        for (int j = 1; j <= n; ++j)
            for (int k = j; k <= n; ++k)
                if (u01(rng) < 0.35) G[i - 1].set(j, k, random_scalar(rng, n, 2));
    Box box(static_cast<std::size_t>(n), {-1.0, 1.0});
    return MechanicalSystem(n, std::move(G), random_field(rng, n), random_field(rng, n),
                            std::move(box), {});
}

// Flat system with linear drift e = E x and constant control b.
inline MechanicalSystem linear_system(const Eigen::MatrixXd& E, const Eigen::VectorXd& b,
                                      Box box = {}, std::string name = "lms") {
    const int n = static_cast<int>(E.rows());
    std::vector<SymExprMatrix> G(static_cast<std::size_t>(n), SymExprMatrix(n));
    VecField e, g;
    for (int i = 0; i < n; ++i) {
        std::vector<ExprPtr> row;
        for (int j = 0; j < n; ++j)
            if (E(i, j) != 0.0) row.push_back(mul(constant(E(i, j)), var(j + 1)));
        e.push_back(simplify(add(std::move(row))));
        g.push_back(constant(b(i)));
    }
    if (box.empty()) box.assign(static_cast<std::size_t>(n), {-1.0, 1.0});
    return MechanicalSystem(n, std::move(G), std::move(e), std::move(g), std::move(box), {},
                            std::move(name));
}

// Integrator chain in second-order form: the i-th acceleration feeds from the
// (i-1)-th coordinate and the control enters the first row.
inline MechanicalSystem controllable_chain(int n) {
    Eigen::MatrixXd E = Eigen::MatrixXd::Zero(n, n);
    for (int i = 1; i < n; ++i) E(i, i - 1) = 1.0;
    Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
    b(0) = 1.0;
    return linear_system(E, b, {}, "chain" + std::to_string(n));
}

inline MechanicalSystem random_controllable_lms(std::mt19937& rng, int n) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (;;) {
        Eigen::MatrixXd E(n, n);
        Eigen::VectorXd b(n);
        for (int i = 0; i < n; ++i) {
            b(i) = u(rng);
            for (int j = 0; j < n; ++j) E(i, j) = u(rng);
        }
        Eigen::MatrixXd C(n, n);
        C.col(0) = b;
        for (int k = 1; k < n; ++k) C.col(k) = E * C.col(k - 1);
        if (Eigen::FullPivLU<Eigen::MatrixXd>(C).rank() == n)
            return linear_system(E, b, {}, "rand_lms");
    }
}

// Flat 3-D system whose first-level distribution is not closed under brackets:
// the bracket of the control field with its drift-bracket points out of their
// span almost everywhere.
inline MechanicalSystem noninvolutive3() {
    std::vector<SymExprMatrix> G(3, SymExprMatrix(3));
    VecField e = {parse_expr("x3^2/2"), parse_expr("x1*x3"), zero()};
    VecField g = {zero(), zero(), one()};
    Box box{{-1.0, 1.0}, {-1.0, 1.0}, {-1.0, 1.0}};
    return MechanicalSystem(3, std::move(G), std::move(e), std::move(g), std::move(box), {},
                            "noninv3");
}

// 2-D system whose only curvature entry survives the first synthesis pass as a
// function of the last transformed coordinate, so the output correction
// h -> H(h) with H' = exp(s^2/2) is required to finish the job.
inline MechanicalSystem curvature_correctable() {
    std::vector<SymExprMatrix> G(2, SymExprMatrix(2));
    G[1].set(2, 2, parse_expr("x2"));
    VecField e = {zero(), parse_expr("x1")};
    VecField g = {one(), zero()};
    Box box{{-0.8, 0.8}, {-0.8, 0.8}};
    return MechanicalSystem(2, std::move(G), std::move(e), std::move(g), std::move(box), {},
                            "curvcorr");
}

// Same chain but the surviving curvature entry depends on the first transformed
// coordinate, which no univariate output correction can absorb.
inline MechanicalSystem curvature_multivariate() {
    std::vector<SymExprMatrix> G(2, SymExprMatrix(2));
    G[1].set(2, 2, parse_expr("x1"));
    VecField e = {zero(), parse_expr("x1")};
    VecField g = {one(), zero()};
    Box box{{-0.8, 0.8}, {-0.8, 0.8}};
    return MechanicalSystem(2, std::move(G), std::move(e), std::move(g), std::move(box), {},
                            "curvmulti");
}

// Flat 3-D system whose annihilating one-form (x2, 1, 0) admits no scaling
// with single-coordinate components, so the output search must give up.
inline MechanicalSystem nonseparable3() {
    std::vector<SymExprMatrix> G(3, SymExprMatrix(3));
    VecField e = {parse_expr("-x3"), parse_expr("x2*x3 - x1"), zero()};
    VecField g = {zero(), zero(), one()};
    Box box{{-1.0, 1.0}, {-1.0, 1.0}, {-1.0, 1.0}};
    return MechanicalSystem(3, std::move(G), std::move(e), std::move(g), std::move(box), {},
                            "nonsep3");
}

struct FeedbackTriple {
    SymExprMatrix gamma;
    ExprPtr alpha;
    ExprPtr beta;
};

// Constant quadratic gain, affine drift shift, constant gain bounded away from
// zero: enough generality to exercise closed-loop invariance quickly.
inline FeedbackTriple random_feedback(std::mt19937& rng, int n) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_real_distribution<double> mag(0.5, 1.5);
    FeedbackTriple fb{SymExprMatrix(n), nullptr, nullptr};
    for (int j = 1; j <= n; ++j)
        for (int k = j; k <= n; ++k) fb.gamma.set(j, k, constant(u(rng)));
    std::vector<ExprPtr> aff = {constant(u(rng))};
    for (int j = 1; j <= n; ++j) aff.push_back(mul(constant(u(rng)), var(j)));
    fb.alpha = simplify(add(std::move(aff)));
    fb.beta = constant(u(rng) < 0 ? -mag(rng) : mag(rng));
    return fb;
}

inline Eigen::VectorXd random_point(std::mt19937& rng, int n, double radius = 1.0) {
    std::uniform_real_distribution<double> u(-radius, radius);
    Eigen::VectorXd x(n);
    for (int i = 0; i < n; ++i) x(i) = u(rng);
    return x;
}

// Acceleration of the second-order dynamics at (x, y) under control u.
// Kept here as an independent reference implementation for the tests.
inline Eigen::VectorXd reference_acceleration(const MechanicalSystem& sys, const Eigen::VectorXd& x,
                                              const Eigen::VectorXd& y, double u) {
    const int n = sys.dim();
    Eigen::VectorXd a = Eigen::VectorXd::Zero(n);
    for (int i = 1; i <= n; ++i) {
        double q = 0.0;
        for (int j = 1; j <= n; ++j)
            for (int k = 1; k <= n; ++k)
                q += eval(sys.christoffel(i, j, k), x, sys.params()) * y(j - 1) * y(k - 1);
        a(i - 1) = -q + eval(sys.drift()[i - 1], x, sys.params()) +
                   eval(sys.control()[i - 1], x, sys.params()) * u;
    }
    return a;
}

}  // namespace fixtures
