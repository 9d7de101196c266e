#include "mechlin/geometry.hpp"

#include <stdexcept>

namespace mechlin {

VecField covariant_derivative(const MechanicalSystem& sys, const VecField& X, const VecField& Y) {
    const int n = sys.dim();
    VecField out(static_cast<std::size_t>(n));
    for (int i = 1; i <= n; ++i) {
        std::vector<ExprPtr> terms;
        for (int j = 1; j <= n; ++j) {
            if (!is_zero(X[j - 1])) terms.push_back(mul(X[j - 1], diff(Y[i - 1], j)));
            for (int k = 1; k <= n; ++k) {
                const ExprPtr& G = sys.christoffel(i, j, k);
                if (is_zero(G) || is_zero(X[j - 1]) || is_zero(Y[k - 1])) continue;
                terms.push_back(mul({G, X[j - 1], Y[k - 1]}));
            }
        }
        out[i - 1] = simplify(add(std::move(terms)));
    }
    return out;
}

VecField second_covariant_derivative(const MechanicalSystem& sys, const VecField& X,
                                     const VecField& Y, const VecField& Z) {
    VecField inner = covariant_derivative(sys, Y, Z);
    VecField first = covariant_derivative(sys, X, inner);
    VecField mixed = covariant_derivative(sys, covariant_derivative(sys, X, Y), Z);
    const std::size_t n = first.size();
    VecField out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = simplify(sub(first[i], mixed[i]));
    return out;
}

VecField lie_bracket(const VecField& X, const VecField& Y) {
    if (X.size() != Y.size()) throw std::invalid_argument("bracket of fields of unequal dimension");
    const int n = static_cast<int>(X.size());
    VecField out(static_cast<std::size_t>(n));
    for (int i = 1; i <= n; ++i) {
        std::vector<ExprPtr> terms;
        for (int j = 1; j <= n; ++j) {
            if (!is_zero(X[j - 1])) terms.push_back(mul(X[j - 1], diff(Y[i - 1], j)));
            if (!is_zero(Y[j - 1])) terms.push_back(neg(mul(Y[j - 1], diff(X[i - 1], j))));
        }
        out[i - 1] = simplify(add(std::move(terms)));
    }
    return out;
}

ExprPtr lie_derivative(const VecField& X, const ExprPtr& f) {
    std::vector<ExprPtr> terms;
    for (std::size_t j = 0; j < X.size(); ++j) {
        if (is_zero(X[j])) continue;
        terms.push_back(mul(X[j], diff(f, static_cast<int>(j) + 1)));
    }
    return simplify(add(std::move(terms)));
}

Eigen::VectorXd evaluate_field(const VecField& X, const Eigen::VectorXd& x, const ParamMap& params) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(X.size()));
    for (std::size_t i = 0; i < X.size(); ++i)
        v(static_cast<Eigen::Index>(i)) = eval(X[i], x, params);
    return v;
}

Eigen::MatrixXd evaluate_frame(const std::vector<VecField>& fields, const Eigen::VectorXd& x,
                               const ParamMap& params) {
    if (fields.empty()) return Eigen::MatrixXd(x.size(), 0);
    Eigen::MatrixXd m(static_cast<Eigen::Index>(fields[0].size()),
                      static_cast<Eigen::Index>(fields.size()));
    for (std::size_t c = 0; c < fields.size(); ++c)
        m.col(static_cast<Eigen::Index>(c)) = evaluate_field(fields[c], x, params);
    return m;
}

MechanicalSystem apply_feedback(const MechanicalSystem& sys, const SymExprMatrix& gamma_fb,
                                const ExprPtr& alpha, const ExprPtr& beta) {
    const int n = sys.dim();
    if (gamma_fb.dim() != n) throw std::invalid_argument("feedback matrix size disagrees with system");
    std::vector<SymExprMatrix> gamma;
    gamma.reserve(static_cast<std::size_t>(n));
    VecField e(static_cast<std::size_t>(n)), g(static_cast<std::size_t>(n));
    for (int i = 1; i <= n; ++i) {
        SymExprMatrix gi(n);
        for (int j = 1; j <= n; ++j)
            for (int k = j; k <= n; ++k)
                gi.set(j, k, simplify(sub(sys.christoffel(i, j, k),
                                          mul(sys.control()[i - 1], gamma_fb.at(j, k)))));
        gamma.push_back(std::move(gi));
        e[i - 1] = simplify(add(sys.drift()[i - 1], mul(sys.control()[i - 1], alpha)));
        g[i - 1] = simplify(mul(sys.control()[i - 1], beta));
    }
    return MechanicalSystem(n, std::move(gamma), std::move(e), std::move(g), sys.domain(),
                            sys.params(), sys.name());
}

MechanicalSystem linear_change_of_coordinates(const MechanicalSystem& sys, const Eigen::MatrixXd& T) {
    const int n = sys.dim();
    if (T.rows() != n || T.cols() != n)
        throw std::invalid_argument("coordinate change matrix size disagrees with system");
    Eigen::FullPivLU<Eigen::MatrixXd> lu(T);
    if (!lu.isInvertible()) throw std::invalid_argument("coordinate change matrix is singular");
    const Eigen::MatrixXd Tinv = lu.inverse();

    // x_a = sum_b Tinv(a,b) z_b, substituted into every expression.
    std::map<int, ExprPtr> repl;
    for (int a = 1; a <= n; ++a) {
        std::vector<ExprPtr> terms;
        for (int b = 1; b <= n; ++b) {
            const double c = Tinv(a - 1, b - 1);
            if (c == 0.0) continue;
            terms.push_back(mul(constant(c), var(b)));
        }
        repl[a] = add(std::move(terms));
    }
    auto pullback = [&](const ExprPtr& f) { return substitute(f, repl); };

    std::vector<SymExprMatrix> gamma;
    gamma.reserve(static_cast<std::size_t>(n));
    for (int i = 1; i <= n; ++i) {
        SymExprMatrix gi(n);
        for (int j = 1; j <= n; ++j)
            for (int k = j; k <= n; ++k) {
                std::vector<ExprPtr> terms;
                for (int a = 1; a <= n; ++a) {
                    const double Tia = T(i - 1, a - 1);
                    if (Tia == 0.0) continue;
                    for (int b = 1; b <= n; ++b)
                        for (int c = 1; c <= n; ++c) {
                            const ExprPtr& G = sys.christoffel(a, b, c);
                            if (is_zero(G)) continue;
                            const double w = Tia * Tinv(b - 1, j - 1) * Tinv(c - 1, k - 1);
                            if (w == 0.0) continue;
                            terms.push_back(mul(constant(w), pullback(G)));
                        }
                }
                gi.set(j, k, simplify(add(std::move(terms))));
            }
        gamma.push_back(std::move(gi));
    }

    VecField e(static_cast<std::size_t>(n)), g(static_cast<std::size_t>(n));
    for (int i = 1; i <= n; ++i) {
        std::vector<ExprPtr> et, gt;
        for (int a = 1; a <= n; ++a) {
            const double Tia = T(i - 1, a - 1);
            if (Tia == 0.0) continue;
            et.push_back(mul(constant(Tia), pullback(sys.drift()[a - 1])));
            gt.push_back(mul(constant(Tia), pullback(sys.control()[a - 1])));
        }
        e[i - 1] = simplify(add(std::move(et)));
        g[i - 1] = simplify(add(std::move(gt)));
    }

    Box domain(static_cast<std::size_t>(n));
    for (int i = 1; i <= n; ++i) {
        double lo = 0.0, hi = 0.0;
        for (int j = 1; j <= n; ++j) {
            const double t = T(i - 1, j - 1);
            const auto& [a, b] = sys.domain()[static_cast<std::size_t>(j - 1)];
            lo += std::min(t * a, t * b);
            hi += std::max(t * a, t * b);
        }
        domain[static_cast<std::size_t>(i - 1)] = {lo, hi};
    }

    return MechanicalSystem(n, std::move(gamma), std::move(e), std::move(g), std::move(domain),
                            sys.params(), sys.name());
}

}  // namespace mechlin
