#pragma once

// A mechanical control system in coordinates:
//
//   d/dt x^i = y^i
//   d/dt y^i = -Gamma^i_{jk}(x) y^j y^k + e^i(x) + g^i(x) u
//
// described by the connection coefficients Gamma (symmetric in the lower
// pair), the uncontrolled acceleration field e, the control field g, a box of
// valid configurations, and bindings for named parameters.

#include "mechlin/expr.hpp"
#include "mechlin/types.hpp"

#include <deque>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace mechlin {

/// Symbolic vector field on configuration space: one component per coordinate.
using VecField = std::vector<ExprPtr>;

/// Symmetric n x n matrix of expressions stored as the upper triangle.
class SymExprMatrix {
  public:
    SymExprMatrix() = default;
    explicit SymExprMatrix(int n) : n_(n), a_(static_cast<std::size_t>(n) * (n + 1) / 2, zero()) {}

    int dim() const { return n_; }

    /// 1-based symmetric access.
    const ExprPtr& at(int j, int k) const { return a_[slot(j, k)]; }
    void set(int j, int k, ExprPtr v) { a_[slot(j, k)] = std::move(v); }

    bool all_zero() const {
        for (const auto& v : a_)
            if (!is_zero(v)) return false;
        return true;
    }

  private:
    std::size_t slot(int j, int k) const {
        if (j > k) std::swap(j, k);
        if (j < 1 || k > n_) throw EvalError("index out of range in symmetric matrix");
        // Row j of the upper triangle starts after rows of lengths n, n-1, ...
        const int row_start = (j - 1) * (n_ + 1) - j * (j - 1) / 2;
        return static_cast<std::size_t>(row_start + (k - j));
    }

    int n_ = 0;
    std::vector<ExprPtr> a_;
};

class MechanicalSystem {
  public:
    /// gamma[i-1] holds Gamma^i_{..}.  Throws std::invalid_argument when the
    /// sizes disagree with n, an expression references a coordinate beyond n,
    /// or a parameter appears without a binding.
    MechanicalSystem(int n, std::vector<SymExprMatrix> gamma, VecField e, VecField g,
                     Box domain, ParamMap params, std::string name = {});

    int dim() const { return n_; }
    const std::string& name() const { return name_; }
    const ParamMap& params() const { return params_; }
    const Box& domain() const { return domain_; }

    const ExprPtr& christoffel(int i, int j, int k) const { return gamma_[i - 1].at(j, k); }
    const SymExprMatrix& christoffel_matrix(int i) const { return gamma_[i - 1]; }
    const VecField& drift() const { return e_; }
    const VecField& control() const { return g_; }

    /// k-fold bracket of the drift with the control field:
    /// ad(0) = g, ad(k) = [e, ad(k-1)].  Memoized; safe to call concurrently.
    const VecField& ad(int k) const;

    // Pointwise evaluation.
    Eigen::VectorXd drift_at(const Eigen::VectorXd& x) const;
    Eigen::VectorXd control_at(const Eigen::VectorXd& x) const;
    /// Gamma^i as a dense matrix per upper index.
    std::vector<Eigen::MatrixXd> christoffel_at(const Eigen::VectorXd& x) const;

    /// Copy with a different domain box (used to widen or narrow scans).
    MechanicalSystem with_domain(Box domain) const;

  private:
    int n_;
    std::string name_;
    ParamMap params_;
    Box domain_;
    std::vector<SymExprMatrix> gamma_;
    VecField e_, g_;

    struct AdCache {
        std::mutex mu;
        std::deque<VecField> fields;  // deque: growth keeps handed-out references valid
    };
    std::shared_ptr<AdCache> ad_cache_;
};

}  // namespace mechlin
