#include "mechlin/integrate.hpp"

#include <vector>

namespace mechlin {

namespace {

bool depends_on(const ExprPtr& f, int index) { return free_vars(f).count(index) > 0; }

// For sin/cos/exp arguments: succeeds when arg is affine in x<index>, i.e.
// d(arg)/dx simplifies to something free of the coordinate.
struct Affine {
    ExprPtr a;  // slope, free of the coordinate
    ExprPtr b;  // value at x<index> = 0
};

std::optional<Affine> split_affine(const ExprPtr& arg, int index) {
    ExprPtr a = simplify(diff(arg, index));
    if (is_zero(a) || depends_on(a, index)) return std::nullopt;
    ExprPtr b = simplify(substitute(arg, {{index, zero()}}));
    return Affine{std::move(a), std::move(b)};
}

std::optional<ExprPtr> integrate_term(const ExprPtr& term, int index) {
    // Split the canonical term into coordinate-free parts and the factors that
    // carry the coordinate; only a single dependent factor is handled.
    std::vector<ExprPtr> coeff;
    std::vector<std::pair<ExprPtr, long long>> dependent;  // base, exponent

    std::vector<std::pair<ExprPtr, long long>> queue{{term, 1}};
    while (!queue.empty()) {
        auto [g, e] = queue.back();
        queue.pop_back();
        if (!depends_on(g, index)) {
            coeff.push_back(intpow(g, e));
            continue;
        }
        switch (g->kind) {
            case ExprKind::Mul:
                for (const auto& k : g->kids) queue.emplace_back(k, e);
                break;
            case ExprKind::Div:
                queue.emplace_back(g->kids[0], e);
                queue.emplace_back(g->kids[1], -e);
                break;
            case ExprKind::IntPow:
                queue.emplace_back(g->kids[0], e * g->expo);
                break;
            default:
                dependent.emplace_back(g, e);
                break;
        }
    }
    if (dependent.empty()) {
        coeff.push_back(var(index));
        return simplify(mul(std::move(coeff)));
    }
    if (dependent.size() != 1) return std::nullopt;
    auto [base, expo] = dependent[0];

    ExprPtr anti;
    if (base->kind == ExprKind::Var && base->index == index) {
        if (expo < 0) return std::nullopt;
        anti = div(intpow(base, expo + 1), rational(expo + 1));
    } else if (expo == 1 &&
               (base->kind == ExprKind::Sin || base->kind == ExprKind::Cos ||
                base->kind == ExprKind::Exp)) {
        auto aff = split_affine(base->kids[0], index);
        if (!aff) return std::nullopt;
        switch (base->kind) {
            case ExprKind::Sin:
                anti = div(sub(cos_(aff->b), cos_(base->kids[0])), aff->a);
                break;
            case ExprKind::Cos:
                anti = div(sub(sin_(base->kids[0]), sin_(aff->b)), aff->a);
                break;
            default:
                anti = div(sub(exp_(base->kids[0]), exp_(aff->b)), aff->a);
                break;
        }
    } else {
        return std::nullopt;
    }
    coeff.push_back(std::move(anti));
    return simplify(mul(std::move(coeff)));
}

}  // namespace

std::optional<ExprPtr> integrate_univariate(const ExprPtr& f, int index) {
    ExprPtr g = simplify(f);
    for (int v : free_vars(g))
        if (v != index) return std::nullopt;
    if (!depends_on(g, index)) return simplify(mul(g, var(index)));
    if (g->kind == ExprKind::Add) {
        std::vector<ExprPtr> parts;
        parts.reserve(g->kids.size());
        for (const auto& t : g->kids) {
            auto p = integrate_term(t, index);
            if (!p) return std::nullopt;
            parts.push_back(std::move(*p));
        }
        return simplify(add(std::move(parts)));
    }
    return integrate_term(g, index);
}

}  // namespace mechlin
