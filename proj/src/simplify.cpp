// Canonical form for expression trees.
//
// The normal form eliminates Neg nodes (negation becomes a -1 coefficient),
// flattens nested sums and products, collects like terms with exact rational
// coefficients where possible, merges repeated factors into integer powers,
// cancels structural factors shared between a numerator and a denominator,
// and orders everything deterministically.  Products of sums are never
// expanded, so the form is compact rather than fully distributed.

#include "mechlin/expr.hpp"

#include <cmath>
#include <map>
#include <numeric>
#include <unordered_map>

namespace mechlin {

namespace {

// ---- rational coefficient with silent demotion to double on overflow -------

struct Coeff {
    bool exact = true;
    long long num = 0;
    long long den = 1;
    double d = 0.0;

    static Coeff of(long long n, long long dn = 1) {
        Coeff c;
        c.num = n;
        c.den = dn;
        c.normalize();
        return c;
    }

    static Coeff of_double(double v) {
        Coeff c;
        c.exact = false;
        c.d = v;
        return c;
    }

    static Coeff of_node(const ExprNode& n) {
        return n.exact ? of(n.num, n.den) : of_double(n.value);
    }

    void normalize() {
        if (!exact) return;
        if (den < 0) { num = -num; den = -den; }
        const long long g = std::gcd(num < 0 ? -num : num, den);
        if (g > 1) { num /= g; den /= g; }
    }

    double value() const { return exact ? static_cast<double>(num) / static_cast<double>(den) : d; }
    bool is_zero() const { return exact ? num == 0 : d == 0.0; }
    bool is_one() const { return exact ? (num == 1 && den == 1) : d == 1.0; }

    void demote() {
        if (exact) { d = value(); exact = false; }
    }

    void mul(const Coeff& o) {
        if (exact && o.exact) {
            long long n2, d2;
            if (!__builtin_mul_overflow(num, o.num, &n2) && !__builtin_mul_overflow(den, o.den, &d2)) {
                num = n2; den = d2; normalize();
                return;
            }
            demote();
        }
        d = value() * o.value();
        exact = false;
    }

    void add(const Coeff& o) {
        if (exact && o.exact) {
            long long a, b, n2;
            if (!__builtin_mul_overflow(num, o.den, &a) && !__builtin_mul_overflow(o.num, den, &b) &&
                !__builtin_add_overflow(a, b, &n2)) {
                long long d2;
                if (!__builtin_mul_overflow(den, o.den, &d2)) {
                    num = n2; den = d2; normalize();
                    return;
                }
            }
            demote();
        }
        d = value() + o.value();
        exact = false;
    }

    // Raises to an integer power; a zero base with negative exponent throws.
    void pow(long long e) {
        if (e == 1) return;
        if (is_zero()) {
            if (e < 0) throw EvalError("division by zero in constant expression");
            if (e == 0) *this = of(1);
            return;
        }
        bool inv = e < 0;
        unsigned long long k = inv ? static_cast<unsigned long long>(-(e + 1)) + 1 : static_cast<unsigned long long>(e);
        Coeff base = *this;
        Coeff acc = of(1);
        while (k > 0) {
            if (k & 1) acc.mul(base);
            Coeff sq = base;
            sq.mul(base);
            base = sq;
            k >>= 1;
        }
        if (inv) {
            if (acc.exact) {
                acc = of(acc.den, acc.num);
            } else {
                acc = of_double(1.0 / acc.d);
            }
        }
        *this = acc;
    }

    ExprPtr to_expr() const {
        if (exact) {
            if (den == 1) return rational(num);
            return rational(num, den);
        }
        return constant(d);
    }
};

// ---- canonicalizer ----------------------------------------------------------

class Canon {
  public:
    ExprPtr run(const ExprPtr& f) {
        auto it = cache_.find(f.get());
        if (it != cache_.end()) return it->second;
        ExprPtr out = dispatch(f);
        cache_.emplace(f.get(), out);
        return out;
    }

  private:
    std::unordered_map<const ExprNode*, ExprPtr> cache_;

    using FactorMap = std::map<ExprPtr, long long, ExprLess>;

    ExprPtr dispatch(const ExprPtr& f) {
        switch (f->kind) {
            case ExprKind::Constant:
                if (!f->exact && std::isfinite(f->value) && f->value == std::floor(f->value) &&
                    std::abs(f->value) < 1e15)
                    return rational(static_cast<long long>(f->value));
                return f;
            case ExprKind::Var:
            case ExprKind::Param:
                return f;
            case ExprKind::Neg: {
                Coeff c = Coeff::of(-1);
                FactorMap fm;
                accumulate(run(f->kids[0]), 1, c, fm);
                return product(c, fm);
            }
            case ExprKind::Add: {
                std::vector<ExprPtr> kids;
                kids.reserve(f->kids.size());
                for (const auto& k : f->kids) kids.push_back(run(k));
                return sum(kids);
            }
            case ExprKind::Mul:
            case ExprKind::Div:
            case ExprKind::IntPow: {
                Coeff c = Coeff::of(1);
                FactorMap fm;
                if (f->kind == ExprKind::Mul) {
                    for (const auto& k : f->kids) accumulate(run(k), 1, c, fm);
                } else if (f->kind == ExprKind::Div) {
                    accumulate(run(f->kids[0]), 1, c, fm);
                    accumulate(run(f->kids[1]), -1, c, fm);
                } else {
                    accumulate(run(f->kids[0]), f->expo, c, fm);
                }
                return product(c, fm);
            }
            case ExprKind::Sin:
            case ExprKind::Cos:
                return trig(f->kind, run(f->kids[0]));
            case ExprKind::Exp: {
                ExprPtr a = run(f->kids[0]);
                if (is_zero(a)) return one();
                return exp_(std::move(a));
            }
            case ExprKind::Ln: {
                ExprPtr a = run(f->kids[0]);
                if (is_one(a)) return zero();
                return ln_(std::move(a));
            }
            case ExprKind::NumFn:
                return numfn(f->fn, run(f->kids[0]));
        }
        throw EvalError("corrupt expression node");
    }

    // Folds a canonical subexpression into (coefficient, base -> exponent),
    // raised to `mult`.
    void accumulate(const ExprPtr& g, long long mult, Coeff& coeff, FactorMap& fm) {
        if (mult == 0) return;
        switch (g->kind) {
            case ExprKind::Constant: {
                Coeff c = Coeff::of_node(*g);
                c.pow(mult);
                coeff.mul(c);
                return;
            }
            case ExprKind::Mul:
                for (const auto& k : g->kids) accumulate(k, mult, coeff, fm);
                return;
            case ExprKind::Div:
                accumulate(g->kids[0], mult, coeff, fm);
                accumulate(g->kids[1], -mult, coeff, fm);
                return;
            case ExprKind::IntPow: {
                long long e;
                if (__builtin_mul_overflow(g->expo, mult, &e))
                    throw EvalError("exponent overflow in simplify");
                accumulate(g->kids[0], e, coeff, fm);
                return;
            }
            default: {
                // Sum factors are stored with a non-negative leading sign so
                // (a-b) and (b-a) share a base and can cancel; the sign moves
                // into the coefficient.
                ExprPtr base = g;
                if (g->kind == ExprKind::Add && leading_sign(g) < 0) {
                    base = negate_sum(g);
                    if (mult % 2 != 0) coeff.mul(Coeff::of(-1));
                }
                auto [it, fresh] = fm.emplace(std::move(base), mult);
                if (!fresh) {
                    it->second += mult;
                    if (it->second == 0) fm.erase(it);
                }
                return;
            }
        }
    }

    // -g for a canonical sum g, distributing the sign over the terms.
    ExprPtr negate_sum(const ExprPtr& g) {
        std::vector<ExprPtr> scaled;
        scaled.reserve(g->kids.size());
        for (const auto& t : g->kids) {
            Coeff c = Coeff::of(-1);
            FactorMap f1;
            accumulate(t, 1, c, f1);
            scaled.push_back(product(c, f1));
        }
        return sum(scaled);
    }

    // -g for any canonical g.
    ExprPtr negate(const ExprPtr& g) {
        Coeff c = Coeff::of(-1);
        FactorMap fm;
        accumulate(g, 1, c, fm);
        return product(c, fm);
    }

    // Rebuilds a canonical product from a coefficient and factor map:
    //   [Constant] * f1^e1 * ... / (g1^d1 * ...)
    // with factors in base order and a plain Div only when negative exponents
    // remain.  A product that reduces to  c * (sum)  distributes c into the sum
    // so sign-flipped sums collect with their counterparts.
    ExprPtr product(Coeff coeff, const FactorMap& fm) {
        if (coeff.is_zero()) return zero();
        std::vector<ExprPtr> numer, denom;
        for (const auto& [base, e] : fm) {
            if (e > 0)
                numer.push_back(intpow(base, e));
            else
                denom.push_back(intpow(base, -e));
        }
        // A product that reduces to coeff * (sum) / denom distributes the
        // coefficient and the denominators over the sum's terms, so the result
        // is a plain sum of terms again (and term-level cancellation applies).
        if (numer.size() == 1 && numer[0]->kind == ExprKind::Add &&
            (!coeff.is_one() || !denom.empty())) {
            std::vector<ExprPtr> scaled;
            scaled.reserve(numer[0]->kids.size());
            for (const auto& t : numer[0]->kids) {
                Coeff c = coeff;
                FactorMap f1;
                accumulate(t, 1, c, f1);
                for (const auto& [base, e] : fm) {
                    if (e >= 0) continue;
                    auto [it, fresh] = f1.emplace(base, e);
                    if (!fresh) {
                        it->second += e;
                        if (it->second == 0) f1.erase(it);
                    }
                }
                scaled.push_back(product(c, f1));
            }
            return sum(scaled);
        }
        ExprPtr top;
        if (numer.empty()) {
            top = coeff.to_expr();
        } else if (coeff.is_one()) {
            top = mul(std::move(numer));
        } else {
            std::vector<ExprPtr> kids;
            kids.reserve(numer.size() + 1);
            kids.push_back(coeff.to_expr());
            for (auto& n : numer) kids.push_back(std::move(n));
            top = mul(std::move(kids));
        }
        if (denom.empty()) return top;
        return div(std::move(top), mul(std::move(denom)));
    }

    // Collects canonical terms of a sum by their coefficient-free core.
    ExprPtr sum(const std::vector<ExprPtr>& kids) {
        Coeff const_acc = Coeff::of(0);
        std::map<ExprPtr, Coeff, ExprLess> terms;
        std::vector<ExprPtr> flat;
        for (const auto& k : kids) {
            if (k->kind == ExprKind::Add)
                flat.insert(flat.end(), k->kids.begin(), k->kids.end());
            else
                flat.push_back(k);
        }
        for (const auto& t : flat) {
            Coeff c = Coeff::of(1);
            FactorMap fm;
            accumulate(t, 1, c, fm);
            if (fm.empty()) {
                const_acc.add(c);
                continue;
            }
            ExprPtr core = product(Coeff::of(1), fm);
            auto [it, fresh] = terms.emplace(std::move(core), c);
            if (!fresh) it->second.add(c);
        }
        std::vector<ExprPtr> out;
        if (!const_acc.is_zero()) out.push_back(const_acc.to_expr());
        for (const auto& [core, c] : terms) {
            if (c.is_zero()) continue;
            Coeff cc = c;
            FactorMap fm;
            accumulate(core, 1, cc, fm);
            out.push_back(product(cc, fm));
        }
        std::sort(out.begin(), out.end(), ExprLess{});
        if (out.empty()) return zero();
        if (out.size() == 1) return out[0];
        return add(std::move(out));
    }

    // sin(-u) = -sin(u), cos(-u) = cos(u): arguments are normalized to a
    // non-negative leading coefficient so mirrored arguments collect.
    ExprPtr trig(ExprKind kind, ExprPtr arg) {
        if (is_zero(arg)) return kind == ExprKind::Sin ? zero() : one();
        const bool flip = leading_sign(arg) < 0;
        if (flip) arg = negate(arg);
        ExprPtr node = kind == ExprKind::Sin ? sin_(std::move(arg)) : cos_(std::move(arg));
        if (flip && kind == ExprKind::Sin) {
            Coeff c = Coeff::of(-1);
            FactorMap fm;
            fm.emplace(std::move(node), 1);
            return product(c, fm);
        }
        return node;
    }

    // Sign of a term's rational coefficient, paired with its coefficient-free
    // core.  For sums, the deciding term is the one with the smallest core, a
    // choice that is invariant under negating the whole sum (cores don't carry
    // signs), so sign-flipped sums normalize to the same representative.
    std::pair<ExprPtr, int> core_sign(const ExprPtr& t) {
        Coeff c = Coeff::of(1);
        FactorMap fm;
        accumulate(t, 1, c, fm);
        return {product(Coeff::of(1), fm), c.value() < 0 ? -1 : 1};
    }

    int leading_sign(const ExprPtr& g) {
        if (g->kind != ExprKind::Add) return core_sign(g).second;
        ExprPtr best;
        int sign = 1;
        for (const auto& t : g->kids) {
            auto [core, s] = core_sign(t);
            if (!best || compare(core, best) < 0) {
                best = std::move(core);
                sign = s;
            }
        }
        return sign;
    }
};

}  // namespace

ExprPtr simplify(const ExprPtr& f) {
    Canon canon;
    return canon.run(f);
}

}  // namespace mechlin
