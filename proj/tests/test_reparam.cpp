#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "acip/branch.hpp"
#include "acip/error.hpp"
#include "acip/map1d.hpp"
#include "acip/reparam.hpp"

using namespace acip;
using namespace acip::presets;

namespace {

const Domain kCircle{DomainKind::Circle};

Reparametrization poly_reparam(std::vector<double> coeffs) {
    Reparametrization s;
    s.base.c = std::move(coeffs);
    s.domain = kCircle;
    return s;
}

// Every t in [-1,1] lies in a plain image or in the central third of an expanding one.
bool covers(const SplitResult& sp) {
    for (int i = 0; i <= 4000; ++i) {
        double t = -1.0 + i / 2000.0;
        bool hit = false;
        for (const auto& a : sp.plain) hit = hit || std::fabs(a.inverse(t)) <= 1.0 + 1e-12;
        for (const auto& a : sp.expanding) hit = hit || std::fabs(a.inverse(t)) <= 1.0 / 3.0 + 1e-12;
        if (!hit) return false;
    }
    return true;
}

bool pieces_certified(const Poly& gamma, const SplitResult& sp, double eps) {
    auto ok = [&](const Affine& a) {
        Poly q = gamma.compose_affine(a.c, a.h);
        return poly_sups(q, 2.0).eps_bounded(eps) && std::fabs(q.c[1]) >= eps / 6.0 &&
               std::fabs(a.c) + a.rate() <= 1.0 + 1e-12;
    };
    return std::all_of(sp.plain.begin(), sp.plain.end(), ok) && std::all_of(sp.expanding.begin(), sp.expanding.end(), ok);
}

std::vector<double> witnesses_in(const Reparametrization& sigma, int count, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-0.999, 0.999);
    std::vector<double> xs;
    for (int i = 0; i < count; ++i) xs.push_back(sigma.domain.reduce(sigma.eval(u(rng))));
    return xs;
}

}  // namespace

TEST_CASE("affine parametrizations and epsilon-boundedness") {
    const double eps = 1.0 / 16.0;
    auto half = Reparametrization::affine(0.2, 0.2 + eps, kCircle);  // slope ε/2
    auto c1 = check_bounded(half, doubling(), eps, 0);
    CHECK(c1.is_bounded);
    CHECK(c1.is_eps_bounded);
    CHECK(c1.sup_first_deriv == doctest::Approx(eps / 2));

    auto twice = Reparametrization::affine(0.2, 0.2 + 4 * eps, kCircle);  // slope 2ε
    auto c2 = check_bounded(twice, doubling(), eps, 0);
    CHECK(c2.is_bounded);
    CHECK_FALSE(c2.is_eps_bounded);

    // σ'' = 2ε exceeds sup|σ'|/6 <= 3ε/6.
    auto curved = poly_reparam({0.3, eps, eps});
    CHECK_FALSE(check_bounded(curved, doubling(), eps, 0).is_bounded);

    // Doubling scales the slope: ε/4, ε/2, ε, 2ε.
    auto quarter = Reparametrization::affine(0.2, 0.2 + eps / 2, kCircle);
    CHECK(check_bounded(quarter, doubling(), eps, 4).n_eps_bounded_up_to == 2);

    CHECK(half.is_reparametrization());
    CHECK_FALSE(Reparametrization::affine(0.9, 1.1, kCircle).is_reparametrization());
    // A zero at t = -1 alone is allowed.
    CHECK(Reparametrization::affine(1.0, 1.1, kCircle).is_reparametrization());
}

TEST_CASE("chained contractions compose") {
    auto s = Reparametrization::affine(0.0, 0.5, kCircle);
    s.chain = {{0.5, 0.25}, {-0.5, 0.5}};
    Affine th = s.theta();
    CHECK(th.c == doctest::Approx(0.5 + 0.25 * -0.5));
    CHECK(th.h == doctest::Approx(0.125));
    for (double t : {-1.0, -0.3, 0.7, 1.0}) CHECK(s.eval(t) == doctest::Approx(s.composed().eval(t)));
}

TEST_CASE("distortion ratio") {
    const double eps = 0.01;
    // σ' = ε + (ε/6) t ranges over [5ε/6, 7ε/6].
    Poly P{{0.4, eps, eps / 12}};
    CHECK(distortion_ratio(P) == doctest::Approx(1.4).epsilon(1e-12));
    CHECK(distortion_ratio(poly_reparam(P.c), 2.0) <= 1.5);
    CHECK_THROWS_AS(distortion_ratio(poly_reparam({0.3, eps, eps}), 2.0), Error);
}

TEST_CASE("epsilon rule") {
    auto d = choose_epsilon(doubling());
    CHECK(d.eps == 0.0625);
    CHECK(d.norm_r_minus_1 == doctest::Approx(2.0));
    CHECK(d.aux_bound_holds);
    CHECK(choose_epsilon(affine(1.0, 0.25, kCircle)).eps == 0.125);
    // ||g'|| = 243 for x -> 3^5 x: (2ε) < 1/486.
    CHECK(choose_epsilon(power_map(linear_circle(3), 5)).eps == std::ldexp(1.0, -10));
}

TEST_CASE("split_reparam covers and certifies its pieces") {
    const double eps = 1.0 / 16.0;
    auto single = split_reparam(Poly{{0.5, eps}}, 2.0, eps);
    REQUIRE(single.plain.size() == 1);
    CHECK(single.expanding.empty());
    CHECK(single.plain[0].c == 0.0);
    CHECK(single.plain[0].h == 1.0);

    Poly lin{{0.5, 3 * eps}};
    auto sp = split_reparam(lin, 2.0, eps);
    CHECK(sp.rho == doctest::Approx(1.0 / 3.0));
    CHECK(sp.plain.size() == 2);
    CHECK(!sp.expanding.empty());
    CHECK(sp.plain.size() + sp.expanding.size() <= 24);  // 6 (sup|γ'|/ε + 1)
    CHECK(covers(sp));
    CHECK(pieces_certified(lin, sp, eps));

    // γ'' = ε/2 <= sup|γ'|/6 = 5.5ε/6.
    Poly curved{{0.1, 5 * eps, eps / 4}};
    auto sc = split_reparam(curved, 2.0, eps);
    CHECK(covers(sc));
    CHECK(pieces_certified(curved, sc, eps));
    CHECK(sc.plain.size() + sc.expanding.size() <= 6 * (5.5 + 1));

    CHECK_THROWS_AS(split_reparam(Poly{{0.1, eps, eps}}, 2.0, eps), Error);
}

TEST_CASE("doubling tree at level one satisfies all items") {
    auto g = doubling();
    const double eps = choose_epsilon(g).eps;
    auto sigma = Reparametrization::affine(0.3, 0.3 + eps, kCircle);
    auto tree = build_tree(sigma, g, 1, 1, eps);
    CHECK(tree.n_levels() == 1);
    // Tiles of half-length 1/100 over [-1,1].
    CHECK(tree.level_size(1) >= 100);
    auto rep = verify_tree(tree, g, witnesses_in(sigma, 50, 3));
    for (int i = 1; i <= 6; ++i) {
        CAPTURE(i);
        CHECK(rep.item[i].ok());
    }
    CHECK(rep.item[5].checked > 0);
    CHECK(rep.distortion.ok());
    CHECK(rep.witnesses == 50);
    CHECK(rep.ok());
}

TEST_CASE("slope-one circle rotation yields no expanding vertices") {
    auto g = affine(1.0, 0.25, kCircle);
    const double eps = choose_epsilon(g).eps;
    auto sigma = Reparametrization::affine(0.6, 0.6 + eps, kCircle);
    auto tree = build_tree(sigma, g, 1, 2, eps);
    for (const auto& v : tree.vertices) CHECK(v.vtype == VertexType::Plain);
    CHECK(tree.level_size(1) == 100);
    CHECK(tree.level_size(2) == 10000);
    auto rep = verify_tree(tree, g, witnesses_in(sigma, 20, 5));
    CHECK(rep.ok());
    CHECK(geometric_times_tree(tree, g, 0.6 + eps / 3, 2).elems.empty());
}

TEST_CASE("tripling power map grows expanding vertices") {
    auto g = power_map(linear_circle(3), 5);
    const double eps = choose_epsilon(g).eps;
    auto sigma = Reparametrization::affine(0.41, 0.41 + eps, kCircle);
    const double x = sigma.eval(0.123);
    TreeOptions opts;
    opts.focus = x;
    auto tree = build_tree(sigma, g, 5, 3, eps, opts);
    CHECK(tree.n_levels() == 3);
    long expanding = 0;
    for (const auto& v : tree.vertices) expanding += v.vtype == VertexType::Expanding;
    CHECK(expanding > 0);
    auto rep = verify_tree(tree, g, {x});
    CHECK(rep.ok());
    CHECK(rep.witnesses == 1);

    auto w = walk_tree(tree, g, x, 3);
    for (int n = 0; n <= 3; ++n) CHECK(!w.levels[n].empty());
}

TEST_CASE("geometric times agree with a direct scan of expanding vertices") {
    auto g = power_map(linear_circle(3), 5);
    const double eps = choose_epsilon(g).eps;
    auto sigma = Reparametrization::affine(0.41, 0.41 + eps, kCircle);
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(-0.99, 0.99);
    int found = 0;
    for (int rep = 0; rep < 12; ++rep) {
        const double x = sigma.eval(u(rng));
        TreeOptions opts;
        opts.focus = x;
        auto tree = build_tree(sigma, g, 5, 3, eps, opts);
        auto E = geometric_times_tree(tree, g, x, 3);
        // Oracle: σ∘θ_v maps [-1/3,1/3] over x, and every ancestor's labels match the orbit of x.
        std::vector<int> ks, kps;
        double y = x;
        for (int i = 0; i < 3; ++i) {
            double l = std::log(std::fabs(g.deriv1(y)));
            ks.push_back(static_cast<int>(std::floor(std::max(0.0, l))));
            kps.push_back(static_cast<int>(std::floor(std::max(0.0, -l))));
            y = g.eval(y);
        }
        for (int m = 1; m <= 3; ++m) {
            bool oracle = false;
            for (std::size_t id = tree.level_begin[m]; id < tree.level_begin[m + 1] && !oracle; ++id) {
                if (tree.vertices[id].vtype != VertexType::Expanding) continue;
                Poly P = tree.model_at(id, 0);
                double a = P.eval(-1.0 / 3.0), b = P.eval(1.0 / 3.0);
                if (a > b) std::swap(a, b);
                double xl = x + std::floor(a);
                if (xl < a) xl += 1.0;
                if (xl > b) continue;
                bool labels = true;
                for (long v = static_cast<long>(id); v > 0; v = tree.vertices[v].parent) {
                    const auto& tv = tree.vertices[v];
                    labels = labels && tv.label_k == ks[tv.level - 1] && tv.label_kprime == kps[tv.level - 1];
                }
                oracle = labels;
            }
            CAPTURE(m);
            CHECK(E.contains(m) == oracle);
            found += oracle;
        }
        CHECK_FALSE(E.contains(0));
    }
    CHECK(found > 0);
}

TEST_CASE("full tripling tree reaches ten thousand vertices in two levels") {
    auto g = power_map(linear_circle(3), 5);
    const double eps = choose_epsilon(g).eps;
    auto sigma = Reparametrization::affine(0.41, 0.41 + eps, kCircle);
    auto tree = build_tree(sigma, g, 5, 2, eps);
    CHECK(tree.vertices.size() >= 10000);
    std::ostringstream os;
    write_tree_csv(os, tree);
    const std::string csv = os.str();
    CHECK(csv.rfind("level,parent_id,rate,k,kprime,vtype,image_left,image_right,margin_item3\n", 0) == 0);
    CHECK(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')) == tree.vertices.size() + 1);

    TreeOptions small;
    small.budget = 1000;
    CHECK_THROWS_AS(build_tree(sigma, g, 5, 2, eps, small), Error);
}

TEST_CASE("corrupted contraction rate fails item 2") {
    auto g = doubling();
    const double eps = choose_epsilon(g).eps;
    auto sigma = Reparametrization::affine(0.3, 0.3 + eps, kCircle);
    auto tree = build_tree(sigma, g, 1, 1, eps);
    REQUIRE(verify_tree(tree, g, {}).item[2].ok());
    tree.vertices[5].contraction.h = 1.0 / 50.0;
    auto rep = verify_tree(tree, g, {});
    CHECK_FALSE(rep.item[2].ok());
    CHECK(rep.item[2].worst_margin == doctest::Approx(0.01 - 0.02));
    CHECK_FALSE(rep.ok());
}

TEST_CASE("tree vertices map into single monotone branches") {
    for (const auto& g : {doubling(), logistic()}) {
        CAPTURE(g.name());
        const double eps = choose_epsilon(g).eps;
        auto sigma = Reparametrization::affine(0.3, 0.3 + eps, g.domain());
        auto tree = build_tree(sigma, g, 1, 2, eps);
        for (int n = 1; n <= 2; ++n) {
            auto P = refine_branches(g, n);
            for (std::size_t id = tree.level_begin[n]; id < tree.level_begin[n + 1]; id += 7) {
                Affine th = tree.theta(id);
                std::vector<int> idx;
                for (double t : {-0.999, -0.5, 0.0, 0.5, 0.999})
                    idx.push_back(P.index_of(g.domain().reduce(sigma.eval(th(t)))));
                CHECK(std::adjacent_find(idx.begin(), idx.end(), std::not_equal_to<>()) == idx.end());
            }
        }
    }
}

TEST_CASE("tree times on the tripling power map have positive density and pass the expansion checks") {
    auto g = power_map(linear_circle(3), 5);
    const double eps = choose_epsilon(g).eps;
    auto sigma = Reparametrization::affine(0.41, 0.41 + eps, kCircle);
    const double x = sigma.eval(-0.377);
    TreeOptions opts;
    opts.focus = x;
    auto tree = build_tree(sigma, g, 5, 50, eps, opts);
    auto E = geometric_times_tree(tree, g, x, 50);
    CHECK(E.density(50) > 0.0);
    auto rep = verify_hyperbolic(g, x, E.elems, 50, 3, 2, 5 * std::log(3.0));
    CHECK(rep.ok());
    CHECK(rep.checked_i > 0);
}
