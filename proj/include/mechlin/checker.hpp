#pragma once

// Decision procedure for mechanical feedback linearizability.  Each structural
// condition (independence of the control frame, involutivity/constant rank of
// the nested distributions, covariant-derivative memberships) is evaluated
// numerically at low-discrepancy samples of the domain box and summarized as a
// per-condition verdict.

#include "mechlin/system.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace mechlin {

/// How a domain box is sampled and how strictly residuals are judged.
struct SamplingPlan {
    int sample_count = 128;           // quasi-random points in the box, >= 8
    std::uint64_t rng_seed = 0;       // selects the sample set deterministically
    double rank_tol = 1e-8;           // relative singular-value threshold
    double membership_tol = 1e-8;     // relative least-squares residual threshold
    double boundary_fraction = 0.05;  // failing fraction tolerated as "boundary"

    void validate() const;  // throws std::invalid_argument on a bad plan
};

enum class ConditionStatus { Pass, Fail, Boundary };

/// Aggregate answer: every condition passed, some condition failed outright, or
/// the box merely grazes a singular locus (boundary verdicts, no hard failure).
enum class Overall { Linearizable, NotLinearizable, Inconclusive };

const char* to_string(ConditionStatus s);
const char* to_string(Overall o);

struct ConditionVerdict {
    std::string condition;   // "MF1", "MF2[i]", "MF3[i]", "MF4[k,j]", "MF1'", "MF3'", "MF5'"
    ConditionStatus status = ConditionStatus::Pass;
    double worst_residual = 0.0;
    Point witness;           // sample where the worst residual occurred
    int samples_failed = 0;
};

struct MFReport {
    std::vector<ConditionVerdict> verdicts;
    Overall overall = Overall::Inconclusive;
    std::vector<std::string> notes;  // e.g. located singular configurations

    /// Verdict with the given condition id, or nullptr.
    const ConditionVerdict* find(const std::string& condition) const;
};

/// Count of singular values above tol * (largest singular value); 0 for an
/// all-zero frame.
int numerical_rank(const Eigen::MatrixXd& columns, double tol);
int numerical_rank(const std::vector<Eigen::VectorXd>& vectors, double tol);

/// min_c ||v - D c|| / max(1, ||v||): relative distance from v to the span of
/// the columns of D.
double membership_residual(const Eigen::VectorXd& v, const Eigen::MatrixXd& span_columns);

/// Derivative-free coordinate pattern search from `start`, clamped to the box.
/// Returns the located minimizer and its objective value.  Deterministic;
/// intended for chasing smooth degeneracy measures down to their floor.
std::pair<Eigen::VectorXd, double> minimize_in_box(
    const std::function<double(const Eigen::VectorXd&)>& objective, const Box& box,
    Eigen::VectorXd start);

/// MF1: the fields g, ad_e g, ..., ad_e^{n-1} g span the tangent space at every
/// sample.  A rank drop located inside the box demotes the verdict to boundary
/// (small failing fraction) or fail, with the located configuration as witness.
ConditionVerdict check_mf1(const MechanicalSystem& sys, const SamplingPlan& plan);

/// MF2[i], 0 <= i <= n-2: span{g, ..., ad_e^i g} has the same numerical rank at
/// every sample and is closed under Lie brackets of its generators.
std::vector<ConditionVerdict> check_mf2(const MechanicalSystem& sys, const SamplingPlan& plan);

/// MF3[i], 0 <= i <= n-1: nabla_{ad_e^i g} g lies in span{g}.
std::vector<ConditionVerdict> check_mf3(const MechanicalSystem& sys, const SamplingPlan& plan);

/// MF4[k,j], 0 <= k,j <= n-1: nabla^2_{ad_e^k g, ad_e^j g} e lies in
/// span{g, ad_e g}.
std::vector<ConditionVerdict> check_mf4(const MechanicalSystem& sys, const SamplingPlan& plan);

/// Two-degrees-of-freedom test set: MF1' (g and ad_e g independent), MF3'
/// (nabla_g g and nabla_{ad_e g} g in span{g}), MF5' (the antisymmetrized
/// second covariant derivative of ad_e g in span{g}).
std::vector<ConditionVerdict> check_n2(const MechanicalSystem& sys, const SamplingPlan& plan);

/// Full decision: check_n2 when n = 2, MF1-MF4 when n >= 3.  Overall is
/// Linearizable iff every verdict passes; a failing verdict gives
/// NotLinearizable; boundary-only degradations give Inconclusive.
MFReport check_all(const MechanicalSystem& sys, const SamplingPlan& plan);

}  // namespace mechlin
