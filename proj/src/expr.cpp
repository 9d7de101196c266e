#include "mechlin/expr.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace mechlin {

namespace {

std::size_t hash_combine(std::size_t seed, std::size_t v) {
    return seed ^ (v + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2));
}

std::size_t node_hash(const ExprNode& n) {
    std::size_t h = static_cast<std::size_t>(n.kind) * 0x9e3779b97f4a7c15ULL + 1;
    switch (n.kind) {
        case ExprKind::Constant:
            if (n.exact) {
                h = hash_combine(h, std::hash<long long>{}(n.num));
                h = hash_combine(h, std::hash<long long>{}(n.den));
            } else {
                h = hash_combine(h, std::hash<double>{}(n.value));
            }
            break;
        case ExprKind::Var:
            h = hash_combine(h, std::hash<int>{}(n.index));
            break;
        case ExprKind::Param:
            h = hash_combine(h, std::hash<std::string>{}(n.name));
            break;
        case ExprKind::IntPow:
            h = hash_combine(h, std::hash<long long>{}(n.expo));
            break;
        case ExprKind::NumFn:
            h = hash_combine(h, std::hash<std::string>{}(n.fn ? n.fn->name : std::string{}));
            break;
        default:
            break;
    }
    for (const auto& k : n.kids) h = hash_combine(h, k->hash);
    return h;
}

ExprPtr finish(std::shared_ptr<ExprNode> n) {
    n->hash = node_hash(*n);
    return n;
}

}  // namespace

double UnivariateFn::operator()(double s) const {
    const std::size_t m = values.size();
    if (m == 0) throw EvalError("empty function table for " + name);
    if (m == 1) return values[0];
    const double step = (hi - lo) / static_cast<double>(m - 1);
    // Clamp outside the table to linear extrapolation with the edge slope.
    if (s <= lo) return values.front() + derivs.front() * (s - lo);
    if (s >= hi) return values.back() + derivs.back() * (s - hi);
    auto idx = static_cast<std::size_t>((s - lo) / step);
    if (idx >= m - 1) idx = m - 2;
    const double t = (s - (lo + static_cast<double>(idx) * step)) / step;
    const double p0 = values[idx], p1 = values[idx + 1];
    const double m0 = derivs[idx] * step, m1 = derivs[idx + 1] * step;
    const double t2 = t * t, t3 = t2 * t;
    return (2 * t3 - 3 * t2 + 1) * p0 + (t3 - 2 * t2 + t) * m0 +
           (-2 * t3 + 3 * t2) * p1 + (t3 - t2) * m1;
}

ExprPtr constant(double v) {
    // Small integers are kept exact so derivative coefficients stay rational.
    if (std::isfinite(v) && v == std::floor(v) && std::abs(v) < 1e15)
        return rational(static_cast<long long>(v));
    auto n = std::make_shared<ExprNode>();
    n->kind = ExprKind::Constant;
    n->exact = false;
    n->value = v;
    return finish(std::move(n));
}

ExprPtr rational(long long num, long long den) {
    if (den == 0) throw EvalError("rational constant with zero denominator");
    if (den < 0) { num = -num; den = -den; }
    const long long g = std::gcd(num < 0 ? -num : num, den);
    if (g > 1) { num /= g; den /= g; }
    auto n = std::make_shared<ExprNode>();
    n->kind = ExprKind::Constant;
    n->exact = true;
    n->num = num;
    n->den = den;
    return finish(std::move(n));
}

ExprPtr var(int index) {
    auto n = std::make_shared<ExprNode>();
    n->kind = ExprKind::Var;
    n->index = index;
    return finish(std::move(n));
}

ExprPtr param(std::string name) {
    auto n = std::make_shared<ExprNode>();
    n->kind = ExprKind::Param;
    n->name = std::move(name);
    return finish(std::move(n));
}

namespace {

ExprPtr nary(ExprKind kind, std::vector<ExprPtr> kids) {
    auto n = std::make_shared<ExprNode>();
    n->kind = kind;
    n->kids = std::move(kids);
    return finish(std::move(n));
}

}  // namespace

// The n-ary constructors fold the trivial cases (absorbing/identity constants,
// single operands) so mechanically generated derivatives stay compact; full
// canonicalization is simplify()'s job.
ExprPtr add(std::vector<ExprPtr> terms) {
    std::vector<ExprPtr> kept;
    kept.reserve(terms.size());
    for (auto& t : terms)
        if (!is_zero(t)) kept.push_back(std::move(t));
    if (kept.empty()) return zero();
    if (kept.size() == 1) return kept[0];
    return nary(ExprKind::Add, std::move(kept));
}

ExprPtr add(ExprPtr a, ExprPtr b) { return add(std::vector<ExprPtr>{std::move(a), std::move(b)}); }

ExprPtr sub(ExprPtr a, ExprPtr b) { return add(std::move(a), neg(std::move(b))); }

ExprPtr mul(std::vector<ExprPtr> factors) {
    std::vector<ExprPtr> kept;
    kept.reserve(factors.size());
    for (auto& f : factors) {
        if (is_zero(f)) return zero();
        if (!is_one(f)) kept.push_back(std::move(f));
    }
    if (kept.empty()) return one();
    if (kept.size() == 1) return kept[0];
    return nary(ExprKind::Mul, std::move(kept));
}

ExprPtr mul(ExprPtr a, ExprPtr b) { return mul(std::vector<ExprPtr>{std::move(a), std::move(b)}); }

ExprPtr neg(ExprPtr a) {
    if (is_zero(a)) return a;
    if (a->kind == ExprKind::Neg) return a->kids[0];
    if (a->kind == ExprKind::Constant && a->exact) return rational(-a->num, a->den);
    return nary(ExprKind::Neg, {std::move(a)});
}

ExprPtr div(ExprPtr a, ExprPtr b) {
    if (is_zero(a)) return a;
    if (is_one(b)) return a;
    return nary(ExprKind::Div, {std::move(a), std::move(b)});
}

ExprPtr intpow(ExprPtr base, long long exponent) {
    if (exponent == 0) return one();
    if (exponent == 1) return base;
    auto n = std::make_shared<ExprNode>();
    n->kind = ExprKind::IntPow;
    n->kids = {std::move(base)};
    n->expo = exponent;
    return finish(std::move(n));
}

ExprPtr sin_(ExprPtr a) { return nary(ExprKind::Sin, {std::move(a)}); }
ExprPtr cos_(ExprPtr a) { return nary(ExprKind::Cos, {std::move(a)}); }
ExprPtr exp_(ExprPtr a) { return nary(ExprKind::Exp, {std::move(a)}); }
ExprPtr ln_(ExprPtr a) { return nary(ExprKind::Ln, {std::move(a)}); }

ExprPtr numfn(std::shared_ptr<const UnivariateFn> fn, ExprPtr arg) {
    auto n = std::make_shared<ExprNode>();
    n->kind = ExprKind::NumFn;
    n->fn = std::move(fn);
    n->kids = {std::move(arg)};
    return finish(std::move(n));
}

ExprPtr zero() {
    static const ExprPtr z = rational(0);
    return z;
}

ExprPtr one() {
    static const ExprPtr o = rational(1);
    return o;
}

bool is_zero(const ExprPtr& f) {
    return f->kind == ExprKind::Constant &&
           (f->exact ? f->num == 0 : f->value == 0.0);
}

bool is_one(const ExprPtr& f) {
    return f->kind == ExprKind::Constant &&
           (f->exact ? (f->num == 1 && f->den == 1) : f->value == 1.0);
}

bool is_constant(const ExprPtr& f, double v) {
    return f->kind == ExprKind::Constant && f->constant_value() == v;
}

double eval(const ExprPtr& f, const Eigen::VectorXd& x, const ParamMap& params) {
    switch (f->kind) {
        case ExprKind::Constant:
            return f->constant_value();
        case ExprKind::Var: {
            if (f->index < 1 || f->index > x.size())
                throw EvalError("coordinate x" + std::to_string(f->index) + " outside point of dimension " +
                                std::to_string(x.size()));
            return x(f->index - 1);
        }
        case ExprKind::Param: {
            auto it = params.find(f->name);
            if (it == params.end()) throw EvalError("unbound parameter '" + f->name + "'");
            return it->second;
        }
        case ExprKind::Add: {
            double s = 0.0;
            for (const auto& k : f->kids) s += eval(k, x, params);
            return s;
        }
        case ExprKind::Mul: {
            double p = 1.0;
            for (const auto& k : f->kids) p *= eval(k, x, params);
            return p;
        }
        case ExprKind::Neg:
            return -eval(f->kids[0], x, params);
        case ExprKind::Div: {
            const double a = eval(f->kids[0], x, params);
            const double b = eval(f->kids[1], x, params);
            if (b == 0.0) throw EvalError("division by zero");
            return a / b;
        }
        case ExprKind::IntPow: {
            const double b = eval(f->kids[0], x, params);
            if (b == 0.0 && f->expo < 0) throw EvalError("division by zero");
            return std::pow(b, static_cast<double>(f->expo));
        }
        case ExprKind::Sin:
            return std::sin(eval(f->kids[0], x, params));
        case ExprKind::Cos:
            return std::cos(eval(f->kids[0], x, params));
        case ExprKind::Exp:
            return std::exp(eval(f->kids[0], x, params));
        case ExprKind::Ln: {
            const double a = eval(f->kids[0], x, params);
            if (a <= 0.0) throw EvalError("ln of a non-positive argument");
            return std::log(a);
        }
        case ExprKind::NumFn:
            return (*f->fn)(eval(f->kids[0], x, params));
    }
    throw EvalError("corrupt expression node");
}

ExprPtr diff(const ExprPtr& f, int index) {
    switch (f->kind) {
        case ExprKind::Constant:
        case ExprKind::Param:
            return zero();
        case ExprKind::Var:
            return f->index == index ? one() : zero();
        case ExprKind::Add: {
            std::vector<ExprPtr> terms;
            terms.reserve(f->kids.size());
            for (const auto& k : f->kids) terms.push_back(diff(k, index));
            return add(std::move(terms));
        }
        case ExprKind::Mul: {
            std::vector<ExprPtr> terms;
            for (std::size_t i = 0; i < f->kids.size(); ++i) {
                std::vector<ExprPtr> factors = f->kids;
                factors[i] = diff(f->kids[i], index);
                terms.push_back(mul(std::move(factors)));
            }
            return add(std::move(terms));
        }
        case ExprKind::Neg:
            return neg(diff(f->kids[0], index));
        case ExprKind::Div: {
            // (a/b)' = a'/b - a b' / b^2
            const auto& a = f->kids[0];
            const auto& b = f->kids[1];
            return sub(div(diff(a, index), b),
                       div(mul(a, diff(b, index)), intpow(b, 2)));
        }
        case ExprKind::IntPow: {
            const auto& b = f->kids[0];
            return mul({rational(f->expo), intpow(b, f->expo - 1), diff(b, index)});
        }
        case ExprKind::Sin:
            return mul(cos_(f->kids[0]), diff(f->kids[0], index));
        case ExprKind::Cos:
            return neg(mul(sin_(f->kids[0]), diff(f->kids[0], index)));
        case ExprKind::Exp:
            return mul(exp_(f->kids[0]), diff(f->kids[0], index));
        case ExprKind::Ln:
            return div(diff(f->kids[0], index), f->kids[0]);
        case ExprKind::NumFn: {
            // Chain rule; the stored derivative body is a function of x1.
            ExprPtr dbody = substitute(f->fn->deriv_body, {{1, f->kids[0]}});
            return mul(std::move(dbody), diff(f->kids[0], index));
        }
    }
    throw EvalError("corrupt expression node");
}

ExprPtr substitute(const ExprPtr& f, const std::map<int, ExprPtr>& repl) {
    switch (f->kind) {
        case ExprKind::Constant:
        case ExprKind::Param:
            return f;
        case ExprKind::Var: {
            auto it = repl.find(f->index);
            return it == repl.end() ? f : it->second;
        }
        default: {
            std::vector<ExprPtr> kids;
            kids.reserve(f->kids.size());
            bool changed = false;
            for (const auto& k : f->kids) {
                kids.push_back(substitute(k, repl));
                changed = changed || kids.back() != k;
            }
            if (!changed) return f;
            switch (f->kind) {
                case ExprKind::Add: return add(std::move(kids));
                case ExprKind::Mul: return mul(std::move(kids));
                case ExprKind::Neg: return neg(kids[0]);
                case ExprKind::Div: return div(kids[0], kids[1]);
                case ExprKind::IntPow: return intpow(kids[0], f->expo);
                case ExprKind::Sin: return sin_(kids[0]);
                case ExprKind::Cos: return cos_(kids[0]);
                case ExprKind::Exp: return exp_(kids[0]);
                case ExprKind::Ln: return ln_(kids[0]);
                case ExprKind::NumFn: return numfn(f->fn, kids[0]);
                default: break;
            }
            throw EvalError("corrupt expression node");
        }
    }
}

namespace {

int kind_rank(ExprKind k) { return static_cast<int>(k); }

template <typename T>
int cmp3(const T& a, const T& b) {
    if (a < b) return -1;
    if (b < a) return 1;
    return 0;
}

}  // namespace

int compare(const ExprPtr& a, const ExprPtr& b) {
    if (a.get() == b.get()) return 0;
    if (int c = cmp3(kind_rank(a->kind), kind_rank(b->kind))) return c;
    switch (a->kind) {
        case ExprKind::Constant: {
            if (int c = cmp3(a->constant_value(), b->constant_value())) return c;
            if (int c = cmp3(a->exact, b->exact)) return c;
            if (a->exact) {
                if (int c = cmp3(a->num, b->num)) return c;
                return cmp3(a->den, b->den);
            }
            return 0;
        }
        case ExprKind::Var:
            return cmp3(a->index, b->index);
        case ExprKind::Param:
            return a->name.compare(b->name);
        case ExprKind::IntPow:
            if (int c = compare(a->kids[0], b->kids[0])) return c;
            return cmp3(a->expo, b->expo);
        case ExprKind::NumFn:
            if (int c = a->fn->name.compare(b->fn->name)) return c;
            return compare(a->kids[0], b->kids[0]);
        default: {
            if (int c = cmp3(a->kids.size(), b->kids.size())) return c;
            for (std::size_t i = 0; i < a->kids.size(); ++i)
                if (int c = compare(a->kids[i], b->kids[i])) return c;
            return 0;
        }
    }
}

bool equal(const ExprPtr& a, const ExprPtr& b) {
    if (a.get() == b.get()) return true;
    if (a->hash != b->hash) return false;
    return compare(a, b) == 0;
}

namespace {

// Precedence levels for printing: sum < product < unary minus < power < atom.
enum Prec { PrecAdd = 0, PrecMul = 1, PrecNeg = 2, PrecPow = 3, PrecAtom = 4 };

void print_rec(std::ostringstream& os, const ExprPtr& f, int parent_prec) {
    switch (f->kind) {
        case ExprKind::Constant: {
            if (f->exact) {
                if (f->num < 0) {
                    if (parent_prec > PrecNeg) {
                        os << "(-" << -f->num;
                        if (f->den != 1) os << '/' << f->den;
                        os << ')';
                    } else {
                        os << '-' << -f->num;
                        if (f->den != 1) os << '/' << f->den;
                    }
                } else {
                    os << f->num;
                    if (f->den != 1) os << '/' << f->den;
                }
            } else {
                std::ostringstream tmp;
                tmp.precision(17);
                tmp << f->value;
                std::string s = tmp.str();
                if (!s.empty() && s[0] == '-' && parent_prec > PrecNeg)
                    os << '(' << s << ')';
                else
                    os << s;
            }
            break;
        }
        case ExprKind::Var:
            os << 'x' << f->index;
            break;
        case ExprKind::Param:
            os << f->name;
            break;
        case ExprKind::Add: {
            const bool paren = PrecAdd < parent_prec;
            if (paren) os << '(';
            for (std::size_t i = 0; i < f->kids.size(); ++i) {
                const auto& k = f->kids[i];
                if (i == 0) {
                    print_rec(os, k, PrecAdd);
                } else if (k->kind == ExprKind::Neg) {
                    os << " - ";
                    print_rec(os, k->kids[0], PrecMul);
                } else if (k->kind == ExprKind::Constant && k->constant_value() < 0) {
                    os << " - ";
                    print_rec(os, neg(k), PrecMul);
                } else if (k->kind == ExprKind::Mul && k->kids[0]->kind == ExprKind::Constant &&
                           k->kids[0]->constant_value() < 0) {
                    std::vector<ExprPtr> rest(k->kids.begin(), k->kids.end());
                    rest[0] = neg(rest[0]);
                    os << " - ";
                    print_rec(os, mul(std::move(rest)), PrecMul);
                } else {
                    os << " + ";
                    print_rec(os, k, PrecMul);
                }
            }
            if (paren) os << ')';
            break;
        }
        case ExprKind::Mul: {
            const bool paren = PrecMul < parent_prec;
            if (paren) os << '(';
            for (std::size_t i = 0; i < f->kids.size(); ++i) {
                if (i) os << '*';
                print_rec(os, f->kids[i], PrecNeg);
            }
            if (paren) os << ')';
            break;
        }
        case ExprKind::Neg: {
            const bool paren = PrecNeg < parent_prec;
            if (paren) os << '(';
            os << '-';
            print_rec(os, f->kids[0], PrecNeg + 1);
            if (paren) os << ')';
            break;
        }
        case ExprKind::Div: {
            const bool paren = PrecMul < parent_prec;
            if (paren) os << '(';
            print_rec(os, f->kids[0], PrecNeg);
            os << '/';
            print_rec(os, f->kids[1], PrecPow);
            if (paren) os << ')';
            break;
        }
        case ExprKind::IntPow: {
            // '^' binds tightest, so the node itself never needs parens, but a
            // non-atomic base does.
            const auto& b = f->kids[0];
            const bool atomic = b->kind == ExprKind::Var || b->kind == ExprKind::Param ||
                                b->kind == ExprKind::Sin || b->kind == ExprKind::Cos ||
                                b->kind == ExprKind::Exp || b->kind == ExprKind::Ln ||
                                b->kind == ExprKind::NumFn ||
                                (b->kind == ExprKind::Constant && b->exact && b->num >= 0 && b->den == 1);
            if (atomic) {
                print_rec(os, b, PrecAtom);
            } else {
                os << '(';
                print_rec(os, b, PrecAdd);
                os << ')';
            }
            os << '^' << f->expo;
            break;
        }
        case ExprKind::Sin:
        case ExprKind::Cos:
        case ExprKind::Exp:
        case ExprKind::Ln: {
            const char* fname = f->kind == ExprKind::Sin   ? "sin"
                                : f->kind == ExprKind::Cos ? "cos"
                                : f->kind == ExprKind::Exp ? "exp"
                                                           : "ln";
            os << fname << '(';
            print_rec(os, f->kids[0], PrecAdd);
            os << ')';
            break;
        }
        case ExprKind::NumFn: {
            os << f->fn->name << '(';
            print_rec(os, f->kids[0], PrecAdd);
            os << ')';
            break;
        }
    }
}

}  // namespace

std::string to_string(const ExprPtr& f) {
    std::ostringstream os;
    print_rec(os, f, PrecAdd);
    return os.str();
}

namespace {

template <typename T, typename Fn>
void walk_collect(const ExprPtr& f, std::set<T>& out, Fn&& pick) {
    pick(f, out);
    for (const auto& k : f->kids) walk_collect(k, out, pick);
}

}  // namespace

std::set<int> free_vars(const ExprPtr& f) {
    std::set<int> out;
    walk_collect(f, out, [](const ExprPtr& n, std::set<int>& o) {
        if (n->kind == ExprKind::Var) o.insert(n->index);
    });
    return out;
}

std::set<std::string> free_params(const ExprPtr& f) {
    std::set<std::string> out;
    walk_collect(f, out, [](const ExprPtr& n, std::set<std::string>& o) {
        if (n->kind == ExprKind::Param) o.insert(n->name);
    });
    return out;
}

}  // namespace mechlin
