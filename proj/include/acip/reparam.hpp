#pragma once

#include <cstddef>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "acip/map1d.hpp"
#include "acip/poly.hpp"
#include "acip/times.hpp"

namespace acip {

// t -> c + h t on [-1, 1].
struct Affine {
    double c = 0.0;
    double h = 1.0;

    double operator()(double t) const { return c + h * t; }
    double rate() const { return h < 0 ? -h : h; }
    // this ∘ inner
    Affine after(const Affine& inner) const { return {c + h * inner.c, h * inner.h}; }
    double inverse(double x) const { return (x - c) / h; }
};

// σ∘θ with σ a polynomial in t (lift values) and θ = chain[0] ∘ chain[1] ∘ ...
struct Reparametrization {
    Poly base;
    Domain domain;
    std::vector<Affine> chain;

    static Reparametrization affine(double left, double right, Domain domain);

    Affine theta() const;
    // The composed map as one polynomial (exact up to rounding).
    Poly composed() const;
    double eval(double t) const;
    std::pair<double, double> image() const;
    // Derivative never vanishes and ]-1,1] avoids the marked point 0, both sampled.
    bool is_reparametrization(int grid = 1001) const;
};

struct BoundednessCertificate {
    double eps = 0.0;
    double sup_first_deriv = 0.0;
    std::vector<NormEntry> sup_higher;  // orders in ]1, r]; `upper` holds the value used
    bool is_bounded = false;
    bool is_eps_bounded = false;
    int n_eps_bounded_up_to = -1;  // largest k with g^j∘σ ε-bounded for all j <= k; -1 if none
    double max_higher() const;
};

// Sup norms of d^s(model) over a grid of [-1,1] for s in [1, r]; the non-integer
// order r uses sup|d^{floor r + 1}| 2^{1-α} with α = r - floor r.
struct DerivSups {
    double first = 0.0;
    double first_min = 0.0;
    std::vector<NormEntry> higher;
    double max_higher() const;
    bool bounded() const { return max_higher() <= first / 6.0; }
    bool eps_bounded(double eps) const { return bounded() && first <= eps; }
};
DerivSups poly_sups(const Poly& P, double r, int grid = 1001);
// Orders in ]1, r]: 2..floor(r) and r itself when fractional.
std::vector<double> higher_orders(double r);
// Order of Taylor models needed for orders up to r.
int model_order(double r);

BoundednessCertificate check_bounded(const Reparametrization& sig, const SmoothMap1D& g, double eps, int n,
                                     int grid = 1001);

// sup |σ'(t)| / |σ'(s)| over sampled pairs.
double distortion_ratio(const Poly& P, int grid = 1001);
double distortion_ratio(const Reparametrization& sig, double r, int grid = 1001);

struct EpsilonChoice {
    double eps = 0.0;
    double norm_r_minus_1 = 0.0;  // ||g'||_{r-1} (upper estimate) used in the rule
    double r_prime = 2.0;
    // Sampled check of ||d^s g^x_{2ε}|| <= 3 ε max(1, |g'(x)|).
    bool aux_bound_holds = true;
    double aux_worst_margin = 0.0;
};
EpsilonChoice choose_epsilon(const SmoothMap1D& g);
EpsilonChoice choose_epsilon(const SmoothMap1D& g, const MapNorms& norms);

struct SplitResult {
    std::vector<Affine> plain;      // covering [-1,1] with their full images
    std::vector<Affine> expanding;  // covering with the images of [-1/3, 1/3]
    double rho = 1.0;
};
// Affine pieces splitting a bounded γ with sup|γ'| >= ε into plain and expanding parts.
// ρ >= 1 yields one identity piece in `plain`.
SplitResult split_reparam(const Poly& gamma, double r, double eps, int grid = 1001);
SplitResult split_reparam(const Reparametrization& gamma, double r, double eps, int grid = 1001);

enum class VertexType { Plain, Expanding };
const char* vertex_type_name(VertexType t);

struct TreeVertex {
    int level = 0;
    long parent = -1;
    Affine contraction;  // φ, in the parent's parameter
    int label_k = 0;
    int label_kprime = 0;
    VertexType vtype = VertexType::Plain;
    // Taylor model of g^level ∘ σ ∘ θ on [-1,1]; constant term reduced on the circle.
    Poly model;
    // g^level ∘ σ ∘ θ(-1) is the marked point.
    bool zero_at_left = false;
    long child_begin = 0;
    long child_end = 0;
    // |model'(0)| - ε/6 for expanding vertices; 0 for plain ones.
    double margin_item3 = 0.0;
};

struct TreeOptions {
    double C_r = 1e3;
    std::size_t budget = 1000000;  // vertices per level
    int kprime_max = 30;
    int jobs = 1;
    int build_grid = 257;
    // Expand only vertices whose usable image contains this point.
    std::optional<double> focus;
};

struct ReparamTree {
    std::string map_name;
    int p = 1;
    double eps = 0.0;
    double r = 2.0;
    double log_sup_gprime = 0.0;
    Reparametrization sigma;
    TreeOptions options;
    std::vector<TreeVertex> vertices;  // breadth first; vertex 0 is the root
    std::vector<std::size_t> level_begin;  // level_begin[n] .. level_begin[n+1]
    std::size_t dropped_kprime = 0;  // pieces discarded with k' above the cap

    int n_levels() const { return static_cast<int>(level_begin.size()) - 2; }
    std::size_t level_size(int n) const { return level_begin[n + 1] - level_begin[n]; }
    // Affine θ from the root parameter, exact only while rates stay above rounding.
    Affine theta(std::size_t id) const;
    // Model of g^k ∘ σ ∘ θ_id for k <= level(id), by restricting the ancestor's model.
    Poly model_at(std::size_t id, int k) const;
};

ReparamTree build_tree(const Reparametrization& sigma, const SmoothMap1D& g, int p, int n_levels, double eps,
                       const TreeOptions& opts = {});

// Vertices containing x at each level, found by descending from the root and
// locating x's parameter by inverting each vertex model at the orbit point.
struct TreeWalk {
    struct Hit {
        std::size_t id;
        double t;  // parameter of x in the vertex
    };
    std::vector<std::vector<Hit>> levels;
    std::vector<double> orbit;  // g^n(x)
};
TreeWalk walk_tree(const ReparamTree& tree, const SmoothMap1D& g, double x, int n_max);

struct ItemStats {
    long checked = 0;
    long failed = 0;
    double worst_margin;
    ItemStats();
    void add(double margin, double tol = 0.0);
    bool ok() const { return failed == 0; }
};

struct TreeReport {
    ItemStats item[7];  // items 1..6; index 0 unused
    ItemStats distortion;
    long witnesses = 0;
    long witnesses_skipped = 0;  // orbit too close to the critical set or cut by the k' cap
    bool ok() const;
};

// Certificate checks of items 1-6 and the distortion bound; sample points x are
// witnesses for the covering items 4 and 6.
TreeReport verify_tree(const ReparamTree& tree, const SmoothMap1D& g, const std::vector<double>& sample,
                       int grid = 1001);

void write_tree_csv(std::ostream& os, const ReparamTree& tree);

// Levels m in [1, n_max] where x sits in the central third of an expanding vertex
// whose k and k' labels agree with those of x along the whole chain.
TimeSet geometric_times_tree(const ReparamTree& tree, const SmoothMap1D& g, double x, int n_max);

}  // namespace acip
