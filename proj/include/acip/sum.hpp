#pragma once

#include <cmath>

namespace acip {

// Neumaier compensated sum; the error term stays O(ulp) independent of the count.
struct Sum {
    double s = 0.0, c = 0.0;
    void add(double x) {
        double t = s + x;
        c += std::fabs(s) >= std::fabs(x) ? (s - t) + x : (x - t) + s;
        s = t;
    }
    double value() const { return s + c; }
};

}  // namespace acip
