#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>

namespace acip {

// Truncated Taylor series in one variable: c[k] = f^(k)(x0) / k!.
// Arithmetic keeps the smaller of the two operand orders.
class Jet {
public:
    static constexpr int kMaxOrder = 8;

    Jet() = default;
    explicit Jet(double value, int order = 0) : order_(order) {
        check_order(order);
        c_[0] = value;
    }

    // The identity jet t -> x0 + t.
    static Jet variable(double x0, int order) {
        Jet j(x0, order);
        if (order >= 1) j.c_[1] = 1.0;
        return j;
    }

    int order() const { return order_; }
    double value() const { return c_[0]; }
    double coeff(int k) const { return k <= order_ ? c_[k] : 0.0; }
    double& coeff_ref(int k) { return c_[k]; }
    // k-th derivative at the expansion point.
    double deriv(int k) const {
        if (k > order_) throw std::out_of_range("Jet::deriv: order exceeds jet order");
        double f = 1.0;
        for (int i = 2; i <= k; ++i) f *= i;
        return c_[k] * f;
    }

    Jet with_order(int order) const {
        check_order(order);
        Jet r;
        r.order_ = order;
        for (int k = 0; k <= order && k <= order_; ++k) r.c_[k] = c_[k];
        return r;
    }

    Jet operator-() const {
        Jet r = *this;
        for (int k = 0; k <= order_; ++k) r.c_[k] = -c_[k];
        return r;
    }

    friend Jet operator+(const Jet& a, const Jet& b) {
        Jet r = blank(a, b);
        for (int k = 0; k <= r.order_; ++k) r.c_[k] = a.c_[k] + b.c_[k];
        return r;
    }
    friend Jet operator-(const Jet& a, const Jet& b) {
        Jet r = blank(a, b);
        for (int k = 0; k <= r.order_; ++k) r.c_[k] = a.c_[k] - b.c_[k];
        return r;
    }
    friend Jet operator*(const Jet& a, const Jet& b) {
        Jet r = blank(a, b);
        for (int k = 0; k <= r.order_; ++k) {
            double s = 0.0;
            for (int i = 0; i <= k; ++i) s += a.c_[i] * b.c_[k - i];
            r.c_[k] = s;
        }
        return r;
    }
    friend Jet operator/(const Jet& a, const Jet& b) {
        Jet r = blank(a, b);
        for (int k = 0; k <= r.order_; ++k) {
            double s = a.c_[k];
            for (int i = 1; i <= k; ++i) s -= b.c_[i] * r.c_[k - i];
            r.c_[k] = s / b.c_[0];
        }
        return r;
    }

    friend Jet operator+(const Jet& a, double s) { Jet r = a; r.c_[0] += s; return r; }
    friend Jet operator+(double s, const Jet& a) { return a + s; }
    friend Jet operator-(const Jet& a, double s) { Jet r = a; r.c_[0] -= s; return r; }
    friend Jet operator-(double s, const Jet& a) { return (-a) + s; }
    friend Jet operator*(const Jet& a, double s) {
        Jet r = a;
        for (int k = 0; k <= r.order_; ++k) r.c_[k] *= s;
        return r;
    }
    friend Jet operator*(double s, const Jet& a) { return a * s; }
    friend Jet operator/(const Jet& a, double s) {
        Jet r = a;
        for (int k = 0; k <= r.order_; ++k) r.c_[k] /= s;
        return r;
    }
    friend Jet operator/(double s, const Jet& a) { return Jet(s, a.order_) / a; }

    friend Jet exp(const Jet& a) {
        Jet r = a.same_order();
        r.c_[0] = std::exp(a.c_[0]);
        for (int k = 1; k <= a.order_; ++k) {
            double s = 0.0;
            for (int i = 1; i <= k; ++i) s += i * a.c_[i] * r.c_[k - i];
            r.c_[k] = s / k;
        }
        return r;
    }
    friend Jet log(const Jet& a) {
        Jet r = a.same_order();
        r.c_[0] = std::log(a.c_[0]);
        for (int k = 1; k <= a.order_; ++k) {
            double s = 0.0;
            for (int i = 1; i < k; ++i) s += i * r.c_[i] * a.c_[k - i];
            r.c_[k] = (a.c_[k] - s / k) / a.c_[0];
        }
        return r;
    }
    friend void sincos(const Jet& a, Jet& s, Jet& c) {
        s = a.same_order();
        c = a.same_order();
        s.c_[0] = std::sin(a.c_[0]);
        c.c_[0] = std::cos(a.c_[0]);
        for (int k = 1; k <= a.order_; ++k) {
            double ss = 0.0, cc = 0.0;
            for (int i = 1; i <= k; ++i) {
                ss += i * a.c_[i] * c.c_[k - i];
                cc += i * a.c_[i] * s.c_[k - i];
            }
            s.c_[k] = ss / k;
            c.c_[k] = -cc / k;
        }
    }
    friend Jet sin(const Jet& a) { Jet s, c; sincos(a, s, c); return s; }
    friend Jet cos(const Jet& a) { Jet s, c; sincos(a, s, c); return c; }
    friend Jet sqrt(const Jet& a) {
        Jet r = a.same_order();
        r.c_[0] = std::sqrt(a.c_[0]);
        for (int k = 1; k <= a.order_; ++k) {
            double s = a.c_[k];
            for (int i = 1; i < k; ++i) s -= r.c_[i] * r.c_[k - i];
            r.c_[k] = s / (2.0 * r.c_[0]);
        }
        return r;
    }
    friend Jet tanh(const Jet& a) {
        Jet e = exp(2.0 * a);
        return (e - 1.0) / (e + 1.0);
    }
    // Integer powers by repeated squaring; exact at a zero base.
    friend Jet ipow(const Jet& a, int n) {
        if (n < 0) return 1.0 / ipow(a, -n);
        Jet result(1.0, a.order_);
        Jet base = a;
        while (n > 0) {
            if (n & 1) result = result * base;
            n >>= 1;
            if (n > 0) base = base * base;
        }
        return result;
    }
    // Real powers; requires a nonzero base value.
    friend Jet pow(const Jet& a, double alpha) {
        double ai = std::round(alpha);
        if (ai == alpha && std::fabs(ai) <= 64) return ipow(a, static_cast<int>(ai));
        Jet r = a.same_order();
        r.c_[0] = std::pow(a.c_[0], alpha);
        for (int k = 1; k <= a.order_; ++k) {
            double s = 0.0;
            for (int i = 1; i <= k; ++i) s += ((alpha + 1.0) * i - k) * a.c_[i] * r.c_[k - i];
            r.c_[k] = s / (k * a.c_[0]);
        }
        return r;
    }
    friend Jet pow(const Jet& a, const Jet& b) { return exp(b * log(a)); }
    friend Jet fabs(const Jet& a) { return a.c_[0] < 0.0 ? -a : a; }
    // Piecewise-constant part; derivatives vanish.
    friend Jet floor(const Jet& a) { return Jet(std::floor(a.c_[0]), a.order_); }
    friend Jet fmin(const Jet& a, const Jet& b) { return b.c_[0] < a.c_[0] ? b.with_order(std::min(a.order_, b.order_)) : a.with_order(std::min(a.order_, b.order_)); }
    friend Jet fmax(const Jet& a, const Jet& b) { return b.c_[0] > a.c_[0] ? b.with_order(std::min(a.order_, b.order_)) : a.with_order(std::min(a.order_, b.order_)); }

private:
    static void check_order(int order) {
        if (order < 0 || order > kMaxOrder) throw std::out_of_range("Jet: order out of range");
    }
    static Jet blank(const Jet& a, const Jet& b) {
        Jet r;
        r.order_ = a.order_ < b.order_ ? a.order_ : b.order_;
        return r;
    }
    Jet same_order() const {
        Jet r;
        r.order_ = order_;
        return r;
    }

    int order_ = 0;
    std::array<double, kMaxOrder + 1> c_{};
};

// Composition of a polynomial in t (Taylor coefficients) with a jet.
inline Jet horner(const double* coeffs, int degree, const Jet& t) {
    Jet r(coeffs[degree], t.order());
    for (int k = degree - 1; k >= 0; --k) r = r * t + coeffs[k];
    return r;
}

}  // namespace acip
