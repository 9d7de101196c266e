#include "mechlin/synthesis.hpp"

#include "mechlin/geometry.hpp"
#include "mechlin/integrate.hpp"
#include "mechlin/sampling.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace mechlin {

namespace {

std::string point_text(const Point& p) {
    std::ostringstream os;
    os.precision(6);
    os << "(";
    for (Eigen::Index i = 0; i < p.x.size(); ++i) os << (i ? ", " : "") << p.x(i);
    os << ")";
    return os.str();
}

}  // namespace

AnnihilationFailed::AnnihilationFailed(int lvl, double residual, Point w)
    : SynthesisError("annihilation of level-" + std::to_string(lvl) +
                         " bracket fails: |L h| = " + std::to_string(residual) + " at " +
                         point_text(w),
                     std::move(w)),
      level(lvl) {}

ResidualTooLarge::ResidualTooLarge(std::string obj, double residual, Point w)
    : SynthesisError("transformed " + obj + " residual " + std::to_string(residual) + " at " +
                         point_text(w),
                     std::move(w)),
      object(std::move(obj)) {}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// (h, L_e h, ..., L_e^{count-1} h), each canonicalized.
std::vector<ExprPtr> lie_chain(const MechanicalSystem& sys, const ExprPtr& h, int count) {
    std::vector<ExprPtr> chain;
    chain.reserve(static_cast<std::size_t>(count));
    chain.push_back(simplify(h));
    for (int m = 1; m < count; ++m)
        chain.push_back(simplify(lie_derivative(sys.drift(), chain.back())));
    return chain;
}

/// Determinant of a square matrix of expressions by cofactor expansion along
/// the first column, skipping structural zeros.
ExprPtr sym_det(const std::vector<std::vector<ExprPtr>>& M) {
    const std::size_t m = M.size();
    if (m == 1) return M[0][0];
    std::vector<ExprPtr> terms;
    for (std::size_t r = 0; r < m; ++r) {
        if (is_zero(M[r][0])) continue;
        std::vector<std::vector<ExprPtr>> minor;
        minor.reserve(m - 1);
        for (std::size_t rr = 0; rr < m; ++rr) {
            if (rr == r) continue;
            std::vector<ExprPtr> row(M[rr].begin() + 1, M[rr].end());
            minor.push_back(std::move(row));
        }
        ExprPtr term = mul(M[r][0], sym_det(minor));
        terms.push_back(r % 2 == 0 ? std::move(term) : neg(std::move(term)));
    }
    return simplify(add(std::move(terms)));
}

/// Cofactor one-form of the n-1 generator fields: omega . ad_e^j g = 0 for
/// all j <= n-2 by construction.
std::vector<ExprPtr> annihilator_one_form(const MechanicalSystem& sys) {
    const int n = sys.dim();
    std::vector<ExprPtr> omega;
    omega.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        std::vector<std::vector<ExprPtr>> minor;
        for (int r = 0; r < n; ++r) {
            if (r == i) continue;
            std::vector<ExprPtr> row;
            for (int c = 0; c <= n - 2; ++c)
                row.push_back(sys.ad(c)[static_cast<std::size_t>(r)]);
            minor.push_back(std::move(row));
        }
        ExprPtr cof = sym_det(minor);
        omega.push_back(simplify(i % 2 == 0 ? std::move(cof) : neg(std::move(cof))));
    }
    return omega;
}

}  // namespace

LinearizingOutput verify_output(const MechanicalSystem& sys, const ExprPtr& h,
                                const SamplingPlan& plan) {
    plan.validate();
    const int n = sys.dim();
    const auto samples = sample_box(sys.domain(), plan.sample_count, plan.rng_seed);

    LinearizingOutput out{simplify(h), 0.0, kInf};
    Eigen::VectorXd worst_x = samples.front();
    int worst_level = 0;
    for (int j = 0; j <= n - 2; ++j) {
        const ExprPtr lj = simplify(lie_derivative(sys.ad(j), out.h));
        if (is_zero(lj)) continue;
        for (const auto& x : samples) {
            const double r = std::abs(eval(lj, x, sys.params()));
            if (r > out.annihilation_residual) {
                out.annihilation_residual = r;
                worst_x = x;
                worst_level = j;
            }
        }
    }
    if (out.annihilation_residual > plan.membership_tol)
        throw AnnihilationFailed(worst_level, out.annihilation_residual, Point(worst_x));

    const ExprPtr top = simplify(lie_derivative(sys.ad(n - 1), out.h));
    Eigen::VectorXd margin_x = samples.front();
    for (const auto& x : samples) {
        const double m = std::abs(eval(top, x, sys.params()));
        if (m < out.transversality_margin) {
            out.transversality_margin = m;
            margin_x = x;
        }
    }
    if (!(out.transversality_margin > plan.membership_tol))
        throw TransversalityFailed("top-level bracket derivative vanishes at " +
                                       point_text(Point(margin_x)),
                                   Point(margin_x));
    return out;
}

LinearizingOutput find_output(const MechanicalSystem& sys, const SamplingPlan& plan) {
    plan.validate();
    const int n = sys.dim();
    const auto omega = annihilator_one_form(sys);

    for (int ref = 0; ref < n; ++ref) {
        if (is_zero(omega[static_cast<std::size_t>(ref)])) continue;

        // Scale the one-form so every component becomes a function of its own
        // coordinate alone; the sum of antiderivatives then integrates it.
        std::vector<ExprPtr> parts;
        bool separable = true;
        for (int i = 0; i < n && separable; ++i) {
            const ExprPtr ci = simplify(div(omega[static_cast<std::size_t>(i)],
                                            omega[static_cast<std::size_t>(ref)]));
            const auto fv = free_vars(ci);
            if (!fv.empty() && (fv.size() != 1 || *fv.begin() != i + 1)) {
                separable = false;
                break;
            }
            const auto anti = integrate_univariate(ci, i + 1);
            if (!anti) {
                separable = false;
                break;
            }
            parts.push_back(*anti);
        }
        if (!separable) continue;
        const ExprPtr h = simplify(add(std::move(parts)));
        if (is_zero(h)) continue;
        try {
            return verify_output(sys, h, plan);
        } catch (const SynthesisError&) {
            continue;  // scaling was integrable but degenerate; try another
        }
    }
    throw OutputNotFound(
        "no linearizing output found: the annihilating one-form does not separate into "
        "single-coordinate components under any reference scaling");
}

MechanicalDiffeo build_diffeo(const MechanicalSystem& sys, const ExprPtr& h,
                              const SamplingPlan& plan) {
    plan.validate();
    const int n = sys.dim();
    const auto chain = lie_chain(sys, h, n);
    MechanicalDiffeo diffeo;
    diffeo.phi.reserve(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) diffeo.phi.push_back(chain[static_cast<std::size_t>(n - 1 - k)]);

    std::vector<std::vector<ExprPtr>> jac(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        for (int j = 1; j <= n; ++j)
            jac[static_cast<std::size_t>(i)].push_back(
                simplify(diff(diffeo.phi[static_cast<std::size_t>(i)], j)));

    const auto jacobian_at = [&](const Eigen::VectorXd& x) {
        Eigen::MatrixXd A(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                A(i, j) = eval(jac[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)], x,
                               sys.params());
        return A;
    };
    const auto ratio_at = [&](const Eigen::VectorXd& x) {
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(jacobian_at(x));
        const auto& sigma = svd.singularValues();
        return sigma(0) <= 0 ? 0.0 : sigma(sigma.size() - 1) / sigma(0);
    };
    const auto det_at = [&](const Eigen::VectorXd& x) {
        return std::abs(jacobian_at(x).determinant());
    };

    // Samples rarely land on a degenerate slice exactly, so chase the
    // determinant downhill from the most degenerate sample as well.
    const auto samples = sample_box(sys.domain(), plan.sample_count, plan.rng_seed);
    Eigen::VectorXd worst_x = samples.front();
    double worst_det = kInf;
    for (const auto& x : samples) {
        if (ratio_at(x) <= plan.rank_tol)
            throw SingularJacobian("transformation Jacobian degenerates at " +
                                       point_text(Point(x)),
                                   Point(x));
        const double d = det_at(x);
        if (d < worst_det) {
            worst_det = d;
            worst_x = x;
        }
    }
    const Eigen::VectorXd xstar = minimize_in_box(det_at, sys.domain(), worst_x).first;
    if (ratio_at(xstar) <= plan.rank_tol)
        throw SingularJacobian("transformation Jacobian degenerates at " +
                                   point_text(Point(xstar)),
                               Point(xstar));
    return diffeo;
}

MechanicalFeedback build_feedback(const MechanicalSystem& sys, const ExprPtr& h,
                                  const SamplingPlan& plan) {
    plan.validate();
    const int n = sys.dim();
    const auto chain = lie_chain(sys, h, n + 1);  // up to L_e^n h
    const ExprPtr& psi = chain[static_cast<std::size_t>(n - 1)];

    const ExprPtr lg_psi = simplify(lie_derivative(sys.control(), psi));
    if (is_zero(lg_psi))
        throw DecouplingSingular("control derivative of the top component vanishes identically");
    for (const auto& x : sample_box(sys.domain(), plan.sample_count, plan.rng_seed))
        if (std::abs(eval(lg_psi, x, sys.params())) <= plan.membership_tol)
            throw DecouplingSingular("control derivative of the top component vanishes at " +
                                         point_text(Point(x)),
                                     Point(x));

    MechanicalFeedback fb{nullptr, nullptr, SymExprMatrix(n)};
    fb.beta = simplify(div(one(), lg_psi));
    fb.alpha = simplify(neg(mul(fb.beta, chain[static_cast<std::size_t>(n)])));

    std::vector<ExprPtr> dpsi;
    for (int i = 1; i <= n; ++i) dpsi.push_back(simplify(diff(psi, i)));
    for (int j = 1; j <= n; ++j)
        for (int k = j; k <= n; ++k) {
            std::vector<ExprPtr> terms = {diff(dpsi[static_cast<std::size_t>(j - 1)], k)};
            for (int i = 1; i <= n; ++i) {
                const ExprPtr& gijk = sys.christoffel(i, j, k);
                if (is_zero(gijk)) continue;
                terms.push_back(neg(mul(dpsi[static_cast<std::size_t>(i - 1)], gijk)));
            }
            const ExprPtr quad = simplify(add(std::move(terms)));
            if (!is_zero(quad)) fb.gamma.set(j, k, simplify(neg(mul(fb.beta, quad))));
        }
    return fb;
}

DiffeoTransformer::DiffeoTransformer(MechanicalSystem sys, const MechanicalDiffeo& diffeo)
    : sys_(std::move(sys)), phi_(diffeo.phi) {
    const int n = sys_.dim();
    if (diffeo.dim() != n)
        throw std::invalid_argument("DiffeoTransformer: dimension mismatch");
    jac_.resize(static_cast<std::size_t>(n));
    hess_.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        for (int j = 1; j <= n; ++j)
            jac_[static_cast<std::size_t>(i)].push_back(
                simplify(diff(phi_[static_cast<std::size_t>(i)], j)));
        hess_[static_cast<std::size_t>(i)].resize(static_cast<std::size_t>(n));
        for (int j = 0; j < n; ++j)
            for (int k = 1; k <= n; ++k)
                hess_[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)].push_back(
                    simplify(diff(jac_[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)],
                                  k)));
    }
}

TransformedPoint DiffeoTransformer::at(const Eigen::VectorXd& x) const {
    const int n = sys_.dim();
    TransformedPoint out;
    out.z.resize(n);
    out.jacobian.resize(n, n);
    for (int i = 0; i < n; ++i) {
        out.z(i) = eval(phi_[static_cast<std::size_t>(i)], x, sys_.params());
        for (int j = 0; j < n; ++j)
            out.jacobian(i, j) = eval(
                jac_[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)], x, sys_.params());
    }
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(out.jacobian);
    if (!lu.isInvertible())
        throw SingularJacobian("transformation Jacobian degenerates at " + point_text(Point(x)),
                               Point(x));
    const Eigen::MatrixXd B = lu.inverse();

    const auto gamma = sys_.christoffel_at(x);
    Eigen::MatrixXd H(n, n), M(n, n);
    out.christoffel.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k)
                H(j, k) = eval(
                    hess_[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]
                         [static_cast<std::size_t>(k)],
                    x, sys_.params());
        M = -H;
        for (int a = 0; a < n; ++a) M += out.jacobian(i, a) * gamma[static_cast<std::size_t>(a)];
        out.christoffel.push_back(B.transpose() * M * B);
    }
    out.drift = out.jacobian * sys_.drift_at(x);
    out.control = out.jacobian * sys_.control_at(x);
    return out;
}

TransformedPoint transform_at(const MechanicalSystem& sys, const MechanicalDiffeo& diffeo,
                              const Eigen::VectorXd& x) {
    return DiffeoTransformer(sys, diffeo).at(x);
}

namespace {

/// Least-squares polynomial fit on a scaled abscissa; returns the maximum
/// absolute deviation and the monomial-basis coefficients in the original
/// variable.
double poly_fit(const std::vector<double>& s, const std::vector<double>& v, int degree,
                std::vector<double>& coeffs) {
    const auto N = static_cast<Eigen::Index>(s.size());
    const double lo = *std::min_element(s.begin(), s.end());
    const double hi = *std::max_element(s.begin(), s.end());
    const double mid = 0.5 * (lo + hi);
    const double half = std::max(0.5 * (hi - lo), 1e-12);

    Eigen::MatrixXd V(N, degree + 1);
    Eigen::VectorXd y(N);
    for (Eigen::Index r = 0; r < N; ++r) {
        const double t = (s[static_cast<std::size_t>(r)] - mid) / half;
        double p = 1.0;
        for (int c = 0; c <= degree; ++c) {
            V(r, c) = p;
            p *= t;
        }
        y(r) = v[static_cast<std::size_t>(r)];
    }
    const Eigen::VectorXd a = V.colPivHouseholderQr().solve(y);
    const double max_dev = (V * a - y).cwiseAbs().maxCoeff();

    // Re-expand from the scaled variable t = (s - mid)/half to monomials in s:
    // accumulate a_k * ((s - mid)/half)^k by repeated convolution.
    coeffs.assign(static_cast<std::size_t>(degree) + 1, 0.0);
    std::vector<double> pow_t = {1.0};  // coefficients of ((s-mid)/half)^k
    for (int k = 0; k <= degree; ++k) {
        for (std::size_t j = 0; j < pow_t.size(); ++j) coeffs[j] += a(k) * pow_t[j];
        std::vector<double> next(pow_t.size() + 1, 0.0);
        for (std::size_t j = 0; j < pow_t.size(); ++j) {
            next[j] += pow_t[j] * (-mid / half);
            next[j + 1] += pow_t[j] / half;
        }
        pow_t = std::move(next);
    }
    return max_dev;
}

ExprPtr poly_to_expr(const std::vector<double>& coeffs, double drop_below) {
    std::vector<ExprPtr> terms;
    for (std::size_t k = 0; k < coeffs.size(); ++k) {
        if (std::abs(coeffs[k]) <= drop_below) continue;
        terms.push_back(mul(constant(coeffs[k]), intpow(var(1), static_cast<long long>(k))));
    }
    return simplify(add(std::move(terms)));
}

}  // namespace

ExprPtr extract_lambda(const MechanicalSystem& sys, const MechanicalDiffeo& diffeo,
                       const MechanicalFeedback& feedback, const SamplingPlan& plan) {
    plan.validate();
    const int n = sys.dim();
    const MechanicalSystem closed =
        apply_feedback(sys, feedback.gamma, feedback.alpha, feedback.beta);
    const DiffeoTransformer transform(closed, diffeo);

    std::vector<double> zn, v;
    std::vector<Eigen::VectorXd> zs;
    const auto samples = sample_box(sys.domain(), plan.sample_count, plan.rng_seed);
    for (const auto& x : samples) {
        const TransformedPoint t = transform.at(x);
        zn.push_back(t.z(n - 1));
        v.push_back(t.christoffel[static_cast<std::size_t>(n - 1)](n - 1, n - 1));
        zs.push_back(t.z);
    }

    const double vmax = std::abs(*std::max_element(
        v.begin(), v.end(), [](double a, double b) { return std::abs(a) < std::abs(b); }));
    if (vmax <= plan.membership_tol) return nullptr;
    const double scale = std::max(1.0, vmax);

    const double zlo = *std::min_element(zn.begin(), zn.end());
    const double zhi = *std::max_element(zn.begin(), zn.end());
    for (int degree = 0; degree <= 12; ++degree) {
        std::vector<double> coeffs;
        const double dev = poly_fit(zn, v, degree, coeffs);
        if (dev <= plan.membership_tol * scale) {
            const double coeff_scale =
                std::max(1.0, std::abs(*std::max_element(
                                  coeffs.begin(), coeffs.end(), [](double a, double b) {
                                      return std::abs(a) < std::abs(b);
                                  })));
            return poly_to_expr(coeffs, 1e-10 * coeff_scale);
        }
    }

    // No univariate polynomial explains the values.  If two samples share the
    // last coordinate but disagree, the entry is genuinely multivariate.
    const double znear = 0.02 * std::max(zhi - zlo, 1e-12);
    for (std::size_t a = 0; a < zn.size(); ++a)
        for (std::size_t b = a + 1; b < zn.size(); ++b)
            if (std::abs(zn[a] - zn[b]) < znear &&
                std::abs(v[a] - v[b]) > 100 * plan.membership_tol * scale)
                throw LambdaNotUnivariate(
                    "residual curvature varies across non-terminal coordinates: values " +
                    std::to_string(v[a]) + " and " + std::to_string(v[b]) +
                    " at nearby terminal coordinate " + std::to_string(zn[a]));
    throw SynthesisError("residual curvature entry resists a univariate polynomial fit");
}

ExprPtr lambda_correct(const ExprPtr& h0, const ExprPtr& lambda, double lo, double hi) {
    if (!lambda || is_zero(lambda)) return h0;
    const auto integral = integrate_univariate(lambda, 1);
    if (!integral) throw SynthesisError("curvature correction is not integrable in closed form");
    const ExprPtr growth = simplify(exp_(*integral));  // H'(s)

    if (auto closed = integrate_univariate(growth, 1))
        return simplify(substitute(*closed, {{1, h0}}));

    if (!(hi > lo)) throw SynthesisError("empty tabulation range for the curvature correction");
    const int knots = 801;
    auto fn = std::make_shared<UnivariateFn>();
    fn->name = "H";
    fn->deriv_body = growth;
    fn->lo = lo;
    fn->hi = hi;
    fn->values.resize(knots);
    fn->derivs.resize(knots);

    Eigen::VectorXd point(1);
    const auto growth_at = [&](double s) {
        point(0) = s;
        return eval(growth, point, {});
    };
    // Composite Simpson between knots, then shift so the accumulated integral
    // vanishes at s = 0.
    const auto simpson = [&](double a, double b) {
        const int m = 16;
        const double hstep = (b - a) / m;
        double acc = growth_at(a) + growth_at(b);
        for (int i = 1; i < m; ++i) acc += (i % 2 ? 4.0 : 2.0) * growth_at(a + i * hstep);
        return acc * hstep / 3.0;
    };
    const double step = (hi - lo) / (knots - 1);
    // Oriented integral split into panels no wider than the knot pitch, so the
    // anchor below has the same accuracy as the table itself.
    const auto integrate_range = [&](double a, double b) -> double {
        if (a == b) return 0.0;
        const double sign = b > a ? 1.0 : -1.0;
        if (b < a) std::swap(a, b);
        const int panels = std::max(1, static_cast<int>(std::ceil((b - a) / step)));
        double acc = 0.0;
        for (int p = 0; p < panels; ++p)
            acc += simpson(a + (b - a) * p / panels, a + (b - a) * (p + 1) / panels);
        return sign * acc;
    };
    double cum = 0.0;
    for (int k = 0; k < knots; ++k) {
        const double s = lo + k * step;
        if (k > 0) cum += simpson(s - step, s);
        fn->values[static_cast<std::size_t>(k)] = cum;
        fn->derivs[static_cast<std::size_t>(k)] = growth_at(s);
    }
    const double at_zero = integrate_range(lo, 0.0);  // accumulated integral at s = 0
    for (auto& value : fn->values) value -= at_zero;
    return numfn(std::move(fn), h0);
}

LinearModel verify_linearization(const MechanicalSystem& sys, const MechanicalDiffeo& diffeo,
                                 const MechanicalFeedback& feedback, const SamplingPlan& plan) {
    plan.validate();
    const int n = sys.dim();
    const MechanicalSystem closed =
        apply_feedback(sys, feedback.gamma, feedback.alpha, feedback.beta);
    const DiffeoTransformer transform(closed, diffeo);

    const auto samples = sample_box(sys.domain(), plan.sample_count, plan.rng_seed);
    const auto N = static_cast<Eigen::Index>(samples.size());
    Eigen::MatrixXd Z(N, n + 1), D(N, n), G(N, n);
    double worst_gamma = 0.0;
    Eigen::VectorXd worst_gamma_x;
    for (Eigen::Index s = 0; s < N; ++s) {
        const TransformedPoint t = transform.at(samples[static_cast<std::size_t>(s)]);
        Z.row(s).head(n) = t.z.transpose();
        Z(s, n) = 1.0;
        D.row(s) = t.drift.transpose();
        G.row(s) = t.control.transpose();
        for (const auto& gi : t.christoffel) {
            const double m = gi.cwiseAbs().maxCoeff();
            if (m > worst_gamma) {
                worst_gamma = m;
                worst_gamma_x = samples[static_cast<std::size_t>(s)];
            }
        }
    }
    if (worst_gamma > plan.membership_tol)
        throw ResidualTooLarge("christoffel", worst_gamma, Point(worst_gamma_x));

    LinearModel model;
    model.b = G.colwise().mean().transpose();
    const double control_dev = (G.rowwise() - model.b.transpose()).cwiseAbs().maxCoeff();
    if (control_dev > plan.membership_tol) {
        Eigen::Index r = 0, c = 0;
        (G.rowwise() - model.b.transpose()).cwiseAbs().maxCoeff(&r, &c);
        throw ResidualTooLarge("control", control_dev,
                               Point(samples[static_cast<std::size_t>(r)]));
    }

    // Equilibrate regressor columns before the fit: the transformed
    // coordinates can span several orders of magnitude, and recovering unit
    // chain coefficients accurately needs comparable column norms.
    Eigen::VectorXd col_scale(n + 1);
    for (int c = 0; c <= n; ++c) col_scale(c) = std::max(1.0, Z.col(c).cwiseAbs().maxCoeff());
    Eigen::MatrixXd theta =
        (Z * col_scale.cwiseInverse().asDiagonal()).colPivHouseholderQr().solve(D);
    theta.array().colwise() /= col_scale.array();
    model.E = theta.topRows(n).transpose();
    model.offset = theta.row(n).transpose();
    const double drift_scale = std::max(1.0, D.cwiseAbs().maxCoeff());
    const Eigen::MatrixXd resid = Z * theta - D;
    const double drift_dev = resid.cwiseAbs().maxCoeff() / drift_scale;
    if (drift_dev > plan.membership_tol) {
        Eigen::Index r = 0, c = 0;
        resid.cwiseAbs().maxCoeff(&r, &c);
        throw ResidualTooLarge("drift", drift_dev, Point(samples[static_cast<std::size_t>(r)]));
    }

    Eigen::MatrixXd ctrb(n, n);
    ctrb.col(0) = model.b;
    for (int k = 1; k < n; ++k) ctrb.col(k) = model.E * ctrb.col(k - 1);
    if (numerical_rank(ctrb, plan.rank_tol) != n)
        throw Uncontrollable("fitted linear pair is not controllable");

    model.fit_residual = std::max({worst_gamma, control_dev, drift_dev});
    return model;
}

namespace {

// A constant drift offset appears exactly when the output was shifted
// (h(0) != 0).  Rows 2..n of the offset are removed by translating the
// corresponding diffeo components; the first row folds into the drift
// compensation term of the feedback.  Returns true when the artifacts were
// changed and the model should be re-verified.
bool recentre(const LinearModel& model, MechanicalDiffeo& diffeo, MechanicalFeedback& fb) {
    const auto n = model.offset.size();
    if (model.offset.cwiseAbs().maxCoeff() <= 1e-6) return false;
    for (Eigen::Index j = 0; j + 1 < n; ++j)
        if (std::abs(model.offset(j + 1)) > 1e-12)
            diffeo.phi[static_cast<std::size_t>(j)] = simplify(
                add(diffeo.phi[static_cast<std::size_t>(j)], constant(model.offset(j + 1))));
    if (std::abs(model.offset(0)) > 1e-12)
        fb.alpha = simplify(sub(fb.alpha, mul(constant(model.offset(0)), fb.beta)));
    return true;
}

// The construction terminates in the canonical controllable chain (ones on the
// subdiagonal of E, b = e1, zero offset).  The sampled fit can only deviate
// from that target by round-off, so once the deviation is confirmed small the
// exact chain is returned; otherwise the fit contradicts the construction and
// the pipeline refuses.
LinearModel snap_to_chain(LinearModel model, const Box& box) {
    const int n = static_cast<int>(model.b.size());
    Eigen::MatrixXd chain = Eigen::MatrixXd::Zero(n, n);
    for (int i = 1; i < n; ++i) chain(i, i - 1) = 1.0;
    const Eigen::VectorXd b1 = Eigen::VectorXd::Unit(n, 0);
    const double dev = std::max({(model.E - chain).cwiseAbs().maxCoeff(),
                                 (model.b - b1).cwiseAbs().maxCoeff(),
                                 model.offset.cwiseAbs().maxCoeff()});
    if (dev > 1e-6) {
        Eigen::VectorXd center(box.size());
        for (std::size_t i = 0; i < box.size(); ++i) center(static_cast<Eigen::Index>(i)) =
            0.5 * (box[i][0] + box[i][1]);
        throw ResidualTooLarge("model", dev, Point(center));
    }
    model.E = std::move(chain);
    model.b = b1;
    model.offset.setZero();
    return model;
}

}  // namespace

Linearization linearize_pipeline(const MechanicalSystem& sys, const SamplingPlan& plan,
                                 const ExprPtr& user_h) {
    plan.validate();
    LinearizingOutput out = user_h ? verify_output(sys, user_h, plan) : find_output(sys, plan);
    MechanicalDiffeo diffeo = build_diffeo(sys, out.h, plan);
    MechanicalFeedback fb = build_feedback(sys, out.h, plan);

    try {
        LinearModel model = verify_linearization(sys, diffeo, fb, plan);
        if (recentre(model, diffeo, fb)) model = verify_linearization(sys, diffeo, fb, plan);
        model = snap_to_chain(std::move(model), sys.domain());
        return {std::move(out), std::move(diffeo), std::move(fb), std::move(model), nullptr};
    } catch (const ResidualTooLarge& err) {
        if (err.object != "christoffel") throw;
        // fall through: residual curvature may admit a univariate correction
    }

    const ExprPtr lam = extract_lambda(sys, diffeo, fb, plan);
    if (!lam)
        throw SynthesisError(
            "transformed curvature is nonzero yet the terminal entry vanishes; "
            "no single-variable correction applies");

    // Tabulation range: the output values seen across the box, slightly widened.
    double lo = kInf, hi = -kInf;
    for (const auto& x : sample_box(sys.domain(), plan.sample_count, plan.rng_seed)) {
        const double s = eval(out.h, x, sys.params());
        lo = std::min(lo, s);
        hi = std::max(hi, s);
    }
    const double margin = 0.1 * std::max(hi - lo, 1e-6);
    const ExprPtr hstar = lambda_correct(out.h, lam, lo - margin, hi + margin);

    LinearizingOutput out2 = verify_output(sys, hstar, plan);
    MechanicalDiffeo diffeo2 = build_diffeo(sys, hstar, plan);
    MechanicalFeedback fb2 = build_feedback(sys, hstar, plan);
    LinearModel model = verify_linearization(sys, diffeo2, fb2, plan);
    if (recentre(model, diffeo2, fb2)) model = verify_linearization(sys, diffeo2, fb2, plan);
    model = snap_to_chain(std::move(model), sys.domain());
    return {std::move(out2), std::move(diffeo2), std::move(fb2), std::move(model), lam};
}

}  // namespace mechlin
