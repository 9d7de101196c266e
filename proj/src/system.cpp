#include "mechlin/system.hpp"

#include "mechlin/geometry.hpp"

#include <stdexcept>

namespace mechlin {

namespace {

void validate_expr(const ExprPtr& f, int n, const ParamMap& params, const std::string& where) {
    for (int v : free_vars(f))
        if (v < 1 || v > n)
            throw std::invalid_argument(where + ": coordinate x" + std::to_string(v) +
                                        " outside dimension " + std::to_string(n));
    for (const auto& p : free_params(f))
        if (!params.count(p))
            throw std::invalid_argument(where + ": parameter '" + p + "' has no binding");
}

}  // namespace

MechanicalSystem::MechanicalSystem(int n, std::vector<SymExprMatrix> gamma, VecField e, VecField g,
                                   Box domain, ParamMap params, std::string name)
    : n_(n),
      name_(std::move(name)),
      params_(std::move(params)),
      domain_(std::move(domain)),
      gamma_(std::move(gamma)),
      e_(std::move(e)),
      g_(std::move(g)),
      ad_cache_(std::make_shared<AdCache>()) {
    if (n_ < 1) throw std::invalid_argument("system dimension must be at least 1");
    if (gamma_.size() != static_cast<std::size_t>(n_) || e_.size() != static_cast<std::size_t>(n_) ||
        g_.size() != static_cast<std::size_t>(n_))
        throw std::invalid_argument("system component counts disagree with dimension");
    if (domain_.size() != static_cast<std::size_t>(n_))
        throw std::invalid_argument("domain box size disagrees with dimension");
    for (const auto& [lo, hi] : domain_)
        if (!(lo < hi)) throw std::invalid_argument("domain box has an empty side");
    for (int i = 1; i <= n_; ++i) {
        if (gamma_[i - 1].dim() != n_)
            throw std::invalid_argument("connection matrix size disagrees with dimension");
        for (int j = 1; j <= n_; ++j)
            for (int k = j; k <= n_; ++k)
                validate_expr(gamma_[i - 1].at(j, k), n_, params_, "gamma");
        validate_expr(e_[i - 1], n_, params_, "e");
        validate_expr(g_[i - 1], n_, params_, "g");
    }
}

const VecField& MechanicalSystem::ad(int k) const {
    if (k < 0) throw std::invalid_argument("bracket order must be nonnegative");
    std::lock_guard<std::mutex> lock(ad_cache_->mu);
    auto& fields = ad_cache_->fields;
    if (fields.empty()) fields.push_back(g_);
    while (static_cast<int>(fields.size()) <= k) {
        VecField next = lie_bracket(e_, fields.back());
        for (auto& c : next) c = simplify(c);
        fields.push_back(std::move(next));
    }
    return fields[static_cast<std::size_t>(k)];
}

Eigen::VectorXd MechanicalSystem::drift_at(const Eigen::VectorXd& x) const {
    return evaluate_field(e_, x, params_);
}

Eigen::VectorXd MechanicalSystem::control_at(const Eigen::VectorXd& x) const {
    return evaluate_field(g_, x, params_);
}

std::vector<Eigen::MatrixXd> MechanicalSystem::christoffel_at(const Eigen::VectorXd& x) const {
    std::vector<Eigen::MatrixXd> out;
    out.reserve(static_cast<std::size_t>(n_));
    for (int i = 1; i <= n_; ++i) {
        Eigen::MatrixXd m(n_, n_);
        for (int j = 1; j <= n_; ++j)
            for (int k = j; k <= n_; ++k) {
                const double v = eval(christoffel(i, j, k), x, params_);
                m(j - 1, k - 1) = v;
                m(k - 1, j - 1) = v;
            }
        out.push_back(std::move(m));
    }
    return out;
}

MechanicalSystem MechanicalSystem::with_domain(Box domain) const {
    return MechanicalSystem(n_, gamma_, e_, g_, std::move(domain), params_, name_);
}

}  // namespace mechlin
