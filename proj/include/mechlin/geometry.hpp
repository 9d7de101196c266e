#pragma once

// Differential-geometric operators on symbolic vector fields, relative to the
// connection carried by a MechanicalSystem.

#include "mechlin/system.hpp"

namespace mechlin {

/// (nabla_X Y)^i = X^j d(Y^i)/dx^j + Gamma^i_{jk} X^j Y^k.
VecField covariant_derivative(const MechanicalSystem& sys, const VecField& X, const VecField& Y);

/// Second covariant derivative: nabla_X (nabla_Y Z) - nabla_{nabla_X Y} Z.
VecField second_covariant_derivative(const MechanicalSystem& sys, const VecField& X,
                                     const VecField& Y, const VecField& Z);

/// [X, Y]^i = X^j d(Y^i)/dx^j - Y^j d(X^i)/dx^j.
VecField lie_bracket(const VecField& X, const VecField& Y);

/// Derivative of a scalar along a field: X^i df/dx^i.
ExprPtr lie_derivative(const VecField& X, const ExprPtr& f);

Eigen::VectorXd evaluate_field(const VecField& X, const Eigen::VectorXd& x, const ParamMap& params);

/// Fields as columns of a matrix at a point.
Eigen::MatrixXd evaluate_frame(const std::vector<VecField>& fields, const Eigen::VectorXd& x,
                               const ParamMap& params);

/// Closed loop under u = gamma_fb_{jk} y^j y^k + alpha + beta * v:
/// the connection absorbs -g^i gamma_fb_{jk}, the drift gains g * alpha, and
/// the control field is scaled by beta.
MechanicalSystem apply_feedback(const MechanicalSystem& sys, const SymExprMatrix& gamma_fb,
                                const ExprPtr& alpha, const ExprPtr& beta);

/// Pushforward through the linear map z = T x (T invertible).  The domain box
/// becomes the interval-arithmetic image, which is exact when T is a scaled
/// permutation and a bounding box otherwise.
MechanicalSystem linear_change_of_coordinates(const MechanicalSystem& sys, const Eigen::MatrixXd& T);

}  // namespace mechlin
