#pragma once

#include <cstddef>
#include <vector>

namespace acip {

// Dense polynomial sum_j c[j] t^j.
struct Poly {
    std::vector<double> c;

    int degree() const { return static_cast<int>(c.size()) - 1; }

    double eval(double t) const {
        double v = 0.0;
        for (std::size_t j = c.size(); j-- > 0;) v = v * t + c[j];
        return v;
    }

    // Taylor coefficients at t0: result.c[k] = P^(k)(t0)/k!.
    Poly shift(double t0) const { return compose_affine(t0, 1.0); }

    // t -> P(a + h t), exact in polynomial arithmetic.
    Poly compose_affine(double a, double h) const {
        Poly q;
        q.c.assign(c.size(), 0.0);
        // Horner with the linear factor (a + h t).
        for (std::size_t j = c.size(); j-- > 0;) {
            for (std::size_t i = q.c.size(); i-- > 0;) {
                double prev = i > 0 ? q.c[i - 1] : 0.0;
                q.c[i] = q.c[i] * a + prev * h;
            }
            q.c[0] += c[j];
        }
        return q;
    }

    double deriv(int k, double t) const {
        Poly s = shift(t);
        if (k > s.degree()) return 0.0;
        double f = 1.0;
        for (int i = 2; i <= k; ++i) f *= i;
        return s.c[k] * f;
    }
};

}  // namespace acip
