#include <doctest.h>

#include <cmath>

#include "sgmoe/mixing.hpp"
#include "test_util.hpp"

using namespace sgmoe;

namespace {

Atom make_atom(double pi, std::initializer_list<double> gate_slope,
               std::initializer_list<double> intercepts,
               std::initializer_list<std::initializer_list<double>> slopes) {
    Atom atom;
    atom.pi = pi;
    atom.gate_intercept = std::log(pi);
    atom.gate_slope.resize(static_cast<int>(gate_slope.size()));
    int i = 0;
    for (double v : gate_slope) atom.gate_slope[i++] = v;
    atom.expert_intercepts.resize(static_cast<int>(intercepts.size()));
    i = 0;
    for (double v : intercepts) atom.expert_intercepts[i++] = v;
    atom.expert_slopes.resize(static_cast<int>(slopes.size()),
                              static_cast<int>(gate_slope.size()));
    int m = 0;
    for (const auto& row : slopes) {
        int c = 0;
        for (double v : row) atom.expert_slopes(m, c++) = v;
        ++m;
    }
    return atom;
}

}  // namespace

TEST_CASE("from_theta weights and shapes") {
    // All-zero theta: equal weights, zero slopes.
    Theta flat(ModelSpec{2, 2, 1, 1});
    const MixingMeasure g = from_theta(flat);
    REQUIRE(g.atoms.size() == 2);
    CHECK(g.atoms[0].pi == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(g.atoms[1].pi == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(g.atoms[0].gate_slope.isZero(0.0));
    CHECK(g.atoms[0].expert_slopes.isZero(0.0));

    // Intercept ln 3 on the free gate: weights [0.75, 0.25].
    Theta skew(ModelSpec{2, 2, 1, 1});
    skew.set_gate_coef(0, 0, 0, std::log(3.0));
    const MixingMeasure gs = from_theta(skew);
    CHECK(gs.atoms[0].pi == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(gs.atoms[1].pi == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(gs.atoms[0].gate_intercept == doctest::Approx(std::log(0.75)).epsilon(1e-12));

    // Huge intercepts must not overflow the normalization.
    Theta big(ModelSpec{2, 2, 1, 1});
    big.set_gate_coef(0, 0, 0, 800.0);
    const MixingMeasure gb = from_theta(big);
    CHECK(std::isfinite(gb.atoms[0].pi));
    CHECK(gb.atoms[0].pi == doctest::Approx(1.0));
}

TEST_CASE("measure density equals the model density") {
    std::mt19937_64 gen(101);
    double worst = 0.0;
    for (int rep = 0; rep < 100; ++rep) {
        const ModelSpec spec = test::random_spec(gen);
        const Theta theta = test::random_theta(spec, gen);
        const MixingMeasure g = from_theta(theta);
        for (int inner = 0; inner < 10; ++inner) {
            VectorXd x(spec.input_dim);
            for (int p = 0; p < spec.input_dim; ++p) x[p] = 2.0 * (2.0 * uniform01(gen) - 1.0);
            worst = std::max(worst, (density_of_measure(g, x) - predict_proba(theta, x))
                                        .lpNorm<Eigen::Infinity>());
        }
    }
    CHECK(worst <= 1e-12);
}

TEST_CASE("density is invariant under common weight scaling") {
    std::mt19937_64 gen(103);
    const ModelSpec spec{3, 3, 1, 2};
    const Theta theta = test::random_theta(spec, gen);
    MixingMeasure g = from_theta(theta);
    MixingMeasure scaled = g;
    for (Atom& atom : scaled.atoms) {
        atom.pi *= 7.5;
        atom.gate_intercept = std::log(atom.pi);
    }
    for (int rep = 0; rep < 50; ++rep) {
        VectorXd x(1);
        x << 3.0 * (2.0 * uniform01(gen) - 1.0);
        CHECK((density_of_measure(g, x) - density_of_measure(scaled, x))
                  .lpNorm<Eigen::Infinity>() <= 1e-12);
    }

    // Single atom: the density is that expert's classifier.
    MixingMeasure single = g;
    single.atoms.resize(1);
    single.atoms[0].pi = 1.0;
    VectorXd x0 = VectorXd::Zero(1);
    const VectorXd probs = density_of_measure(single, x0);
    const VectorXd expected = baseline_softmax(single.atoms[0].expert_intercepts);
    CHECK((probs - expected).lpNorm<Eigen::Infinity>() <= 1e-12);
}

TEST_CASE("dissimilarity formula") {
    const Atom a = make_atom(0.5, {2.0, 0.0}, {0.0}, {{0.0, 0.0}});
    const Atom b = make_atom(0.5, {0.0, 0.0}, {0.0}, {{0.0, 0.0}});
    // Weight factor 0.25, squared slope gap 4.
    CHECK(dissimilarity(a, b) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(dissimilarity(a, a) == 0.0);

    std::mt19937_64 gen(107);
    for (int rep = 0; rep < 1000; ++rep) {
        Atom u = make_atom(0.1 + uniform01(gen), {uniform01(gen), uniform01(gen)},
                           {uniform01(gen)}, {{uniform01(gen), uniform01(gen)}});
        Atom v = make_atom(0.1 + uniform01(gen), {uniform01(gen), uniform01(gen)},
                           {uniform01(gen)}, {{uniform01(gen), uniform01(gen)}});
        CHECK(dissimilarity(u, v) == doctest::Approx(dissimilarity(v, u)).epsilon(1e-14));
        CHECK(dissimilarity(u, v) >= 0.0);
    }
}

TEST_CASE("merge_pair barycenters") {
    const Atom a = make_atom(0.3, {1.0, 0.0}, {2.0}, {{4.0, 0.0}});
    const Atom b = make_atom(0.1, {-1.0, 0.0}, {6.0}, {{0.0, 0.0}});
    const Atom merged = merge_pair(a, b);
    CHECK(merged.pi == doctest::Approx(0.4).epsilon(1e-15));
    CHECK(merged.gate_intercept == doctest::Approx(std::log(0.4)).epsilon(1e-12));
    CHECK(merged.gate_slope[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(merged.expert_intercepts[0] == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(merged.expert_slopes(0, 0) == doctest::Approx(3.0).epsilon(1e-12));

    // Merging an atom with its twin doubles the weight, keeps the parameters.
    const Atom twin = merge_pair(a, a);
    CHECK(twin.pi == doctest::Approx(0.6).epsilon(1e-15));
    CHECK((twin.gate_slope - a.gate_slope).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((twin.expert_intercepts - a.expert_intercepts).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("merged atoms stay inside the parents' span") {
    std::mt19937_64 gen(109);
    for (int rep = 0; rep < 200; ++rep) {
        const Atom u = make_atom(0.05 + uniform01(gen), {uniform01(gen) * 4 - 2},
                                 {uniform01(gen) * 4 - 2}, {{uniform01(gen) * 4 - 2}});
        const Atom v = make_atom(0.05 + uniform01(gen), {uniform01(gen) * 4 - 2},
                                 {uniform01(gen) * 4 - 2}, {{uniform01(gen) * 4 - 2}});
        const Atom ref = make_atom(1.0, {uniform01(gen) * 4 - 2}, {uniform01(gen) * 4 - 2},
                                   {{uniform01(gen) * 4 - 2}});
        const Atom merged = merge_pair(u, v);
        auto dist = [](const Atom& p, const Atom& q) {
            return std::sqrt((p.gate_slope - q.gate_slope).squaredNorm() +
                             (p.expert_intercepts - q.expert_intercepts).squaredNorm() +
                             (p.expert_slopes - q.expert_slopes).squaredNorm());
        };
        CHECK(dist(merged, ref) <= std::max(dist(u, ref), dist(v, ref)) + 1e-12);
    }
}

TEST_CASE("build_chain structure") {
    // Two atoms: a single level with the lone pairwise dissimilarity.
    Theta two(ModelSpec{2, 2, 1, 1});
    two.set_gate_coef(0, 1, 0, 1.0);
    const MixingMeasure g2 = from_theta(two);
    const MergeChain c2 = build_chain(g2);
    REQUIRE(c2.levels.size() == 1);
    REQUIRE(c2.heights.size() == 1);
    CHECK(c2.heights[0] == doctest::Approx(dissimilarity(g2.atoms[0], g2.atoms[1])));
    CHECK(c2.merged_pairs[0] == std::pair<int, int>{0, 1});

    // Four atoms with two near-duplicate pairs: duplicates merge first.
    MixingMeasure g4;
    g4.num_classes = 2;
    g4.input_dim = 1;
    g4.degree = 1;
    g4.atoms = {make_atom(0.25, {8.0}, {-10.0}, {{20.0}}),
                make_atom(0.25, {8.1}, {-10.1}, {{20.1}}),
                make_atom(0.25, {0.0}, {10.0}, {{20.0}}),
                make_atom(0.25, {0.05}, {10.05}, {{20.05}})};
    const MergeChain c4 = build_chain(g4);
    REQUIRE(c4.levels.size() == 3);
    CHECK(c4.merged_pairs[0] == std::pair<int, int>{2, 3});  // tightest pair first
    CHECK(c4.merged_pairs[1] == std::pair<int, int>{0, 1});
    CHECK(c4.heights[0] <= c4.heights[1]);
    for (const MixingMeasure& level : c4.levels)
        CHECK(level.total_weight() == doctest::Approx(1.0).epsilon(1e-12));
    for (std::size_t i = 0; i < c4.levels.size(); ++i)
        CHECK(c4.levels[i].atoms.size() == 4 - i);

    CHECK_THROWS_AS(build_chain(MixingMeasure{2, 1, 1, {g4.atoms[0]}}),
                    std::invalid_argument);
}

TEST_CASE("build_chain on duplicate atoms collapses losslessly") {
    MixingMeasure g;
    g.num_classes = 2;
    g.input_dim = 1;
    g.degree = 1;
    const Atom proto = make_atom(0.2, {1.5}, {0.7}, {{-2.0}});
    g.atoms = {proto, proto, proto, proto};
    const MergeChain chain = build_chain(g, nullptr, true);
    for (double h : chain.heights) CHECK(h <= 1e-20);
    const MixingMeasure& last = chain.levels.back();
    REQUIRE(last.atoms.size() == 1);
    CHECK(last.atoms[0].pi == doctest::Approx(0.8).epsilon(1e-12));
    CHECK((last.atoms[0].gate_slope - proto.gate_slope).lpNorm<Eigen::Infinity>() <= 1e-15);
}

TEST_CASE("build_chain records per-level mean log-likelihood") {
    const Theta truth = test::synthetic_truth();
    const Dataset data = sample_dataset(truth, 300, 5);
    const MixingMeasure g = from_theta(init_perturbed_truth(truth, 0.1, 2, 3));
    const MergeChain chain = build_chain(g, &data);
    REQUIRE(chain.logliks.size() == chain.levels.size());
    for (std::size_t i = 0; i < chain.levels.size(); ++i)
        CHECK(chain.logliks[i] ==
              doctest::Approx(mean_log_likelihood(chain.levels[i], data)).epsilon(1e-12));
}
