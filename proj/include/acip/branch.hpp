#pragma once

#include <cstddef>
#include <ostream>
#include <string>
#include <vector>

#include "acip/map1d.hpp"

namespace acip {

enum class CutReason { Critical, PreimageOfZero, DomainBoundary };
const char* cut_reason_name(CutReason r);

struct CutPoint {
    double x = 0.0;
    CutReason reason = CutReason::Critical;
};

// Half-open branch [a, b). On the circle a lies in [0,1) and b in (a, a+1];
// an arc with b > 1 wraps through the marked point.
struct Branch {
    double a = 0.0;
    double b = 0.0;
    int sign = 1;            // sign of the derivative of the iterate on the branch
    double sup_slope = 0.0;  // sup of |derivative| over the branch
    // One-sided limits of g at a+ and b-, in [0,1] (depth-1 partitions only).
    double left_value = 0.0;
    double right_value = 0.0;
    double length() const { return b - a; }
};

struct BranchPartition {
    std::string map_name;
    Domain domain;
    int depth = 1;  // partition of g^depth
    std::vector<Branch> branches;
    std::vector<CutPoint> cut_points;
    std::vector<CriticalPiece> flat_pieces;
    bool truncated = false;

    // Branch containing x under the left-closed convention (the right end of the
    // interval belongs to the last branch); -1 when x lies in a flat piece.
    int index_of(double x) const;
};

BranchPartition monotone_branches(const SmoothMap1D& g, double tol = 1e-12);

struct SlopeCountReport {
    int count = 0;
    double bound = 0.0;
    double constant = 0.0;  // ||d^{r'} g||^{1/(r'-1)}
    double r_prime = 2.0;
    bool within_bound = true;
};

SlopeCountReport count_branches_with_min_slope(const SmoothMap1D& g, double s);
SlopeCountReport count_branches_with_min_slope(const SmoothMap1D& g, const BranchPartition& J, const MapNorms& norms,
                                               double s);

// Join of g^{-i} J over i < n by pulling back cut points through branch inverses.
BranchPartition refine_branches(const SmoothMap1D& g, int n, double tol = 1e-12, std::size_t cap = 1000000);

// Solve g(x) = y on the closure of branch `br` of the depth-1 partition J.
// Returns false when y is outside the open range of the branch.
bool branch_inverse(const SmoothMap1D& g, const BranchPartition& J, std::size_t br, double y, double tol, double& x);

void write_branches_csv(std::ostream& os, const BranchPartition& P);

}  // namespace acip
