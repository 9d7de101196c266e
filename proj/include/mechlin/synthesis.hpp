#pragma once

// Construction of the linearizing data for a mechanically feedback
// linearizable system: a linearizing output h, the configuration change
// phi = (L_e^{n-1}h, ..., L_e h, h) whose tangent lift carries velocities, the
// feedback (alpha, beta, gamma), an optional curvature correction h -> H(h),
// and a verifier that the transformed closed loop is a controllable linear
// mechanical system.

#include "mechlin/checker.hpp"
#include "mechlin/system.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace mechlin {

// ---- error taxonomy ---------------------------------------------------------

struct SynthesisError : std::runtime_error {
    Point witness;  // x empty when no specific configuration applies
    explicit SynthesisError(const std::string& what) : std::runtime_error(what) {}
    SynthesisError(const std::string& what, Point w)
        : std::runtime_error(what), witness(std::move(w)) {}
};

/// The output-search heuristics exhausted their options; the caller must
/// supply h explicitly.
struct OutputNotFound : SynthesisError {
    using SynthesisError::SynthesisError;
};

/// dh fails to annihilate ad_e^level g somewhere on the box.
struct AnnihilationFailed : SynthesisError {
    int level;
    AnnihilationFailed(int lvl, double residual, Point w);
};

/// L_{ad_e^{n-1} g} h vanishes (or nearly) somewhere on the box.
struct TransversalityFailed : SynthesisError {
    using SynthesisError::SynthesisError;
};

struct SingularJacobian : SynthesisError {
    using SynthesisError::SynthesisError;
};

/// The decoupling factor L_g L_e^{n-1} h vanishes at a sample.
struct DecouplingSingular : SynthesisError {
    using SynthesisError::SynthesisError;
};

/// The transformed closed loop missed the linear target; `object` names the
/// offending piece ("christoffel", "drift", "control", "model").
struct ResidualTooLarge : SynthesisError {
    std::string object;
    ResidualTooLarge(std::string obj, double residual, Point w);
};

struct Uncontrollable : SynthesisError {
    using SynthesisError::SynthesisError;
};

/// The residual curvature entry varies with coordinates other than the last
/// transformed one, which contradicts the normal-form structure.
struct LambdaNotUnivariate : SynthesisError {
    using SynthesisError::SynthesisError;
};

// ---- artifacts --------------------------------------------------------------

struct LinearizingOutput {
    ExprPtr h;
    /// max over samples and levels j <= n-2 of |L_{ad_e^j g} h| (absolute).
    double annihilation_residual = 0.0;
    /// min over samples of |L_{ad_e^{n-1} g} h|.
    double transversality_margin = 0.0;
};

struct MechanicalDiffeo {
    /// Components ordered (L_e^{n-1} h, ..., L_e h, h); the tangent lift
    /// (phi(x), Dphi(x) y) is implied and never stored.
    std::vector<ExprPtr> phi;

    int dim() const { return static_cast<int>(phi.size()); }
};

struct MechanicalFeedback {
    ExprPtr alpha;
    ExprPtr beta;
    SymExprMatrix gamma;  // u = gamma_{jk} y^j y^k + alpha + beta * v
};

struct LinearModel {
    Eigen::MatrixXd E;
    Eigen::VectorXd b;
    /// Constant part of the affine drift fit; zero for the synthesized
    /// pipeline, reported so callers can recentre coordinates if they feed in
    /// their own transformation.
    Eigen::VectorXd offset;
    /// Worst relative deviation of the transformed closed loop from the
    /// constant-coefficient linear target across samples.
    double fit_residual = 0.0;
};

/// Transformed system data at a single configuration.
struct TransformedPoint {
    Eigen::VectorXd z;                          // phi(x)
    std::vector<Eigen::MatrixXd> christoffel;   // [i](j, k), zero-based
    Eigen::VectorXd drift;
    Eigen::VectorXd control;
    Eigen::MatrixXd jacobian;                   // Dphi(x)
};

/// Evaluates the pushforward of a system through a configuration change at
/// individual points.  The change is never inverted symbolically; Christoffel
/// data transforms through the Jacobian, its inverse, and the component
/// Hessians, all evaluated numerically.
class DiffeoTransformer {
  public:
    DiffeoTransformer(MechanicalSystem sys, const MechanicalDiffeo& diffeo);

    /// Throws SingularJacobian when Dphi(x) is not invertible.
    TransformedPoint at(const Eigen::VectorXd& x) const;

  private:
    MechanicalSystem sys_;
    std::vector<ExprPtr> phi_;
    std::vector<std::vector<ExprPtr>> jac_;
    std::vector<std::vector<std::vector<ExprPtr>>> hess_;
};

// ---- operations -------------------------------------------------------------

/// Accepts h iff dh annihilates ad_e^j g for all j <= n-2 at every sample
/// (within membership_tol) while L_{ad_e^{n-1} g} h stays bounded away from
/// zero.  Throws AnnihilationFailed / TransversalityFailed otherwise.
LinearizingOutput verify_output(const MechanicalSystem& sys, const ExprPtr& h,
                                const SamplingPlan& plan);

/// Searches for h from the cofactor one-form of the generator frame
/// {g, ..., ad_e^{n-2} g}: after dividing by a reference component, each
/// component must depend only on its own coordinate, and h is the sum of their
/// coordinate-wise antiderivatives.  Throws OutputNotFound when no reference
/// choice separates.
LinearizingOutput find_output(const MechanicalSystem& sys, const SamplingPlan& plan);

/// phi = (L_e^{n-1} h, ..., L_e h, h); throws SingularJacobian when Dphi
/// degenerates at a sample.
MechanicalDiffeo build_diffeo(const MechanicalSystem& sys, const ExprPtr& h,
                              const SamplingPlan& plan);

/// beta = 1 / (L_g L_e^{n-1} h), alpha = -beta L_e^n h,
/// gamma_{jk} = -beta (d2(L_e^{n-1}h)/dx^j dx^k - d(L_e^{n-1}h)/dx^i Gamma^i_{jk}).
MechanicalFeedback build_feedback(const MechanicalSystem& sys, const ExprPtr& h,
                                  const SamplingPlan& plan);

/// One-shot pushforward at a point (convenience wrapper over
/// DiffeoTransformer for callers that transform a single configuration).
TransformedPoint transform_at(const MechanicalSystem& sys, const MechanicalDiffeo& diffeo,
                              const Eigen::VectorXd& x);

/// Samples the residual curvature entry Gamma~^n_{nn} of the transformed
/// closed loop over the box and fits it as a polynomial in the last
/// transformed coordinate (expression in the placeholder variable x1).
/// Returns nullptr when the entry vanishes within tolerance.  Throws
/// LambdaNotUnivariate when the entry demonstrably varies with the other
/// transformed coordinates.
ExprPtr extract_lambda(const MechanicalSystem& sys, const MechanicalDiffeo& diffeo,
                       const MechanicalFeedback& feedback, const SamplingPlan& plan);

/// h* = H(h0) with H' = exp of the antiderivative of lambda and H(0) = 0.
/// Closed form when lambda is constant; otherwise H is tabulated over
/// [lo, hi] (the range of h0) by quadrature and embedded as a numeric
/// univariate node whose derivative stays symbolic.
ExprPtr lambda_correct(const ExprPtr& h0, const ExprPtr& lambda, double lo, double hi);

/// Checks that the closed loop of (sys, feedback) pushed through the
/// configuration change has vanishing Christoffel data, affine drift, and
/// constant control at every sample, and that the fitted (E, b) pair is
/// controllable.  Throws ResidualTooLarge / Uncontrollable.
LinearModel verify_linearization(const MechanicalSystem& sys, const MechanicalDiffeo& diffeo,
                                 const MechanicalFeedback& feedback, const SamplingPlan& plan);

struct Linearization {
    LinearizingOutput output;
    MechanicalDiffeo diffeo;
    MechanicalFeedback feedback;
    LinearModel model;
    ExprPtr lambda;  // nullptr unless the curvature correction was engaged
};

/// Full synthesis: find (or verify) the output, build the transformation and
/// feedback, verify linearity; when the first pass leaves the characteristic
/// residual curvature, extract lambda, correct h, and rebuild once.
Linearization linearize_pipeline(const MechanicalSystem& sys, const SamplingPlan& plan,
                                 const ExprPtr& user_h = nullptr);

}  // namespace mechlin
