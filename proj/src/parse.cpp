#include "mechlin/parse.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>

namespace mechlin {

namespace {

class Parser {
  public:
    Parser(const std::string& text, const FnRegistry* fns) : text_(text), fns_(fns) {}

    ExprPtr parse() {
        ExprPtr e = sum();
        skip_ws();
        if (pos_ != text_.size())
            fail("unexpected '" + std::string(1, text_[pos_]) + "'");
        return e;
    }

  private:
    const std::string& text_;
    const FnRegistry* fns_;
    std::size_t pos_ = 0;

    [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, pos_); }

    void skip_ws() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }

    bool peek(char c) {
        skip_ws();
        return pos_ < text_.size() && text_[pos_] == c;
    }

    bool accept(char c) {
        if (!peek(c)) return false;
        ++pos_;
        return true;
    }

    void expect(char c, const char* what) {
        if (!accept(c)) fail(std::string("expected '") + c + "' " + what);
    }

    ExprPtr sum() {
        ExprPtr e = product();
        for (;;) {
            if (accept('+')) {
                e = add(std::move(e), product());
            } else if (accept('-')) {
                e = sub(std::move(e), product());
            } else {
                return e;
            }
        }
    }

    ExprPtr product() {
        ExprPtr e = unary();
        for (;;) {
            if (accept('*')) {
                e = mul(std::move(e), unary());
            } else if (accept('/')) {
                e = div(std::move(e), unary());
            } else {
                return e;
            }
        }
    }

    ExprPtr unary() {
        if (accept('-')) return neg(unary());
        return power();
    }

    ExprPtr power() {
        ExprPtr base = primary();
        if (!accept('^')) return base;
        skip_ws();
        const std::size_t at = pos_;
        bool negative = false;
        if (pos_ < text_.size() && text_[pos_] == '-') {
            negative = true;
            ++pos_;
        }
        if (pos_ >= text_.size() || !std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
            pos_ = at;
            fail("exponent must be an integer literal");
        }
        long long e = 0;
        while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
            e = e * 10 + (text_[pos_] - '0');
            if (e > 1000000) { pos_ = at; fail("exponent out of range"); }
            ++pos_;
        }
        if (pos_ < text_.size() && (text_[pos_] == '.' || text_[pos_] == 'e' || text_[pos_] == 'E')) {
            pos_ = at;
            fail("exponent must be an integer literal");
        }
        return intpow(std::move(base), negative ? -e : e);
    }

    ExprPtr primary() {
        skip_ws();
        if (pos_ >= text_.size()) fail("unexpected end of input");
        const char c = text_[pos_];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
        if (c == '(') {
            ++pos_;
            ExprPtr e = sum();
            expect(')', "to close '('");
            return e;
        }
        if (std::isalpha(static_cast<unsigned char>(c))) return identifier();
        fail(std::string("unexpected '") + c + "'");
    }

    // A run of digits with optional fraction and exponent.  Values that fit
    // become exact rationals; anything that overflows falls back to double.
    ExprPtr number() {
        const std::size_t start = pos_;
        bool exact = true;
        long long mantissa = 0;
        long long frac_digits = 0;
        bool any_digits = false;

        auto push_digit = [&](char d) {
            any_digits = true;
            if (!exact) return;
            if (__builtin_mul_overflow(mantissa, 10LL, &mantissa) ||
                __builtin_add_overflow(mantissa, static_cast<long long>(d - '0'), &mantissa))
                exact = false;
        };

        while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_])))
            push_digit(text_[pos_++]);
        if (pos_ < text_.size() && text_[pos_] == '.') {
            ++pos_;
            while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
                push_digit(text_[pos_++]);
                ++frac_digits;
            }
        }
        if (!any_digits) fail("malformed number");
        long long exp10 = 0;
        bool has_exp = false;
        if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
            const std::size_t mark = pos_;
            std::size_t p = pos_ + 1;
            bool neg_exp = false;
            if (p < text_.size() && (text_[p] == '+' || text_[p] == '-')) {
                neg_exp = text_[p] == '-';
                ++p;
            }
            if (p < text_.size() && std::isdigit(static_cast<unsigned char>(text_[p]))) {
                has_exp = true;
                while (p < text_.size() && std::isdigit(static_cast<unsigned char>(text_[p]))) {
                    exp10 = exp10 * 10 + (text_[p] - '0');
                    if (exp10 > 400) { exact = false; exp10 = 400; }
                    ++p;
                }
                if (neg_exp) exp10 = -exp10;
                pos_ = p;
            } else {
                pos_ = mark;  // 'e' belongs to something else ("2e" is "2 * e"? no: error later)
            }
        }
        const long long net = exp10 - frac_digits;
        if (exact) {
            long long num = mantissa, den = 1;
            long long k = net;
            while (k > 0 && exact) {
                exact = !__builtin_mul_overflow(num, 10LL, &num);
                --k;
            }
            while (k < 0 && exact) {
                exact = !__builtin_mul_overflow(den, 10LL, &den);
                ++k;
            }
            if (exact) return rational(num, den);
        }
        (void)has_exp;
        return constant(std::strtod(text_.c_str() + start, nullptr));
    }

    ExprPtr identifier() {
        const std::size_t start = pos_;
        while (pos_ < text_.size() &&
               (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
            ++pos_;
        std::string name = text_.substr(start, pos_ - start);

        // x followed by digits only is a coordinate.
        if (name.size() >= 2 && name[0] == 'x' &&
            name.find_first_not_of("0123456789", 1) == std::string::npos) {
            long long idx = 0;
            for (std::size_t i = 1; i < name.size(); ++i) {
                idx = idx * 10 + (name[i] - '0');
                if (idx > 1000000) { pos_ = start; fail("coordinate index out of range"); }
            }
            if (idx < 1) { pos_ = start; fail("coordinate index must be at least 1"); }
            return var(static_cast<int>(idx));
        }

        const bool call = peek('(');
        if (call) {
            ++pos_;
            ExprPtr arg = sum();
            expect(')', "to close function call");
            if (name == "sin") return sin_(std::move(arg));
            if (name == "cos") return cos_(std::move(arg));
            if (name == "exp") return exp_(std::move(arg));
            if (name == "ln") return ln_(std::move(arg));
            if (fns_) {
                auto it = fns_->find(name);
                if (it != fns_->end()) return numfn(it->second, std::move(arg));
            }
            pos_ = start;
            fail("unknown function '" + name + "'");
        }
        if (name == "sin" || name == "cos" || name == "exp" || name == "ln") {
            pos_ = start;
            fail("expected '(' after function name '" + name + "'");
        }
        return param(std::move(name));
    }
};

}  // namespace

ExprPtr parse_expr(const std::string& text) { return Parser(text, nullptr).parse(); }

ExprPtr parse_expr(const std::string& text, const FnRegistry& fns) {
    return Parser(text, &fns).parse();
}

}  // namespace mechlin
