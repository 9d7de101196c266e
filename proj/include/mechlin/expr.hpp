#pragma once

// Immutable symbolic expression trees over coordinates x1..xn and named
// parameters.  Nodes are shared (structural DAG) and never mutated after
// construction, so copies are cheap and caching by node identity is sound.

#include "mechlin/types.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <set>
#include <string>
#include <vector>

namespace mechlin {

enum class ExprKind : std::uint8_t {
    Constant,
    Var,     // coordinate x<index>, 1-based
    Param,   // named symbolic parameter
    Add,     // n-ary sum
    Mul,     // n-ary product
    Neg,
    Div,
    IntPow,  // integer exponent, may be negative
    Sin,
    Cos,
    Exp,
    Ln,
    NumFn,   // numerically tabulated univariate function applied to a child
};

class ExprNode;
using ExprPtr = std::shared_ptr<const ExprNode>;

/// A smooth univariate function known only numerically (dense sample table,
/// monotone-cubic evaluation), with its first derivative available in closed
/// form as an expression in the formal variable x1.
struct UnivariateFn {
    std::string name;
    ExprPtr deriv_body;           // derivative as a 1-dimensional expression in x1
    double lo = 0.0, hi = 0.0;    // tabulated range
    std::vector<double> values;   // samples on a uniform grid over [lo, hi]
    std::vector<double> derivs;   // derivative samples on the same grid

    double operator()(double s) const;  // cubic Hermite between grid knots
};

class ExprNode {
  public:
    ExprKind kind;

    // Constant payload: exact rationals are kept as num/den (den > 0, reduced);
    // inexact constants live in `value`.
    bool exact = false;
    long long num = 0;
    long long den = 1;
    double value = 0.0;

    int index = 0;         // Var
    std::string name;      // Param
    std::vector<ExprPtr> kids;
    long long expo = 0;    // IntPow
    std::shared_ptr<const UnivariateFn> fn;  // NumFn

    std::size_t hash = 0;  // structural hash, computed at construction

    double constant_value() const { return exact ? static_cast<double>(num) / static_cast<double>(den) : value; }
};

// ---- constructors -----------------------------------------------------------

ExprPtr constant(double v);
ExprPtr rational(long long num, long long den = 1);
ExprPtr var(int index);
ExprPtr param(std::string name);
ExprPtr add(std::vector<ExprPtr> terms);
ExprPtr add(ExprPtr a, ExprPtr b);
ExprPtr sub(ExprPtr a, ExprPtr b);
ExprPtr mul(std::vector<ExprPtr> factors);
ExprPtr mul(ExprPtr a, ExprPtr b);
ExprPtr neg(ExprPtr a);
ExprPtr div(ExprPtr a, ExprPtr b);
ExprPtr intpow(ExprPtr base, long long exponent);
ExprPtr sin_(ExprPtr a);
ExprPtr cos_(ExprPtr a);
ExprPtr exp_(ExprPtr a);
ExprPtr ln_(ExprPtr a);
ExprPtr numfn(std::shared_ptr<const UnivariateFn> fn, ExprPtr arg);

ExprPtr zero();
ExprPtr one();

// ---- core operations --------------------------------------------------------

/// Evaluate at x (1-based coordinates) with the given parameter bindings.
/// Throws EvalError on division by zero, ln of a non-positive argument, an
/// unbound parameter, or a coordinate index beyond x.
double eval(const ExprPtr& f, const Eigen::VectorXd& x, const ParamMap& params);

/// Exact partial derivative with respect to x<index>.  Result is lightly
/// folded but not canonicalized; run simplify() for a normal form.
ExprPtr diff(const ExprPtr& f, int index);

/// Canonical form: flattens sums/products, collects like terms and like
/// factors with exact rational coefficients where possible, cancels shared
/// structural factors across Div, and orders operands deterministically.
/// Idempotent, and pointwise value-preserving on the input's domain.
ExprPtr simplify(const ExprPtr& f);

/// Replace coordinates by expressions: each (index -> expr) pair rewrites
/// every Var(index).  Indices absent from the map are left untouched.
ExprPtr substitute(const ExprPtr& f, const std::map<int, ExprPtr>& repl);

/// Total order on expressions (structural).  Returns <0, 0, >0.
int compare(const ExprPtr& a, const ExprPtr& b);
bool equal(const ExprPtr& a, const ExprPtr& b);

/// Render in the input grammar (re-parseable except for NumFn applications,
/// which print as name(arg) and need the function registered on parse).
std::string to_string(const ExprPtr& f);

/// Coordinate indices appearing in f.
std::set<int> free_vars(const ExprPtr& f);
/// Parameter names appearing in f.
std::set<std::string> free_params(const ExprPtr& f);

bool is_zero(const ExprPtr& f);         // structurally the constant 0
bool is_one(const ExprPtr& f);          // structurally the constant 1
bool is_constant(const ExprPtr& f, double v);

struct ExprLess {
    bool operator()(const ExprPtr& a, const ExprPtr& b) const { return compare(a, b) < 0; }
};

}  // namespace mechlin
