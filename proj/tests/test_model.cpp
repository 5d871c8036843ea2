#include <doctest.h>

#include <cmath>

#include "sgmoe/model.hpp"
#include "test_util.hpp"

using namespace sgmoe;

TEST_CASE("lift_features powers") {
    VectorXd x1(1);
    x1 << 0.0;
    CHECK(lift_features(x1, 1).isApprox((VectorXd(2) << 1, 0).finished()));

    VectorXd x2(1);
    x2 << 2.0;
    CHECK(lift_features(x2, 2).isApprox((VectorXd(3) << 1, 2, 4).finished()));

    VectorXd x3(2);
    x3 << 1.0, -1.0;
    CHECK(lift_features(x3, 1).isApprox((VectorXd(4) << 1, 1, 1, -1).finished()));
}

TEST_CASE("lift_features rejects non-finite input") {
    VectorXd x(1);
    x << std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(lift_features(x, 1), std::invalid_argument);
}

TEST_CASE("lift_matrix matches the row-wise lift") {
    std::mt19937_64 gen(3);
    MatrixXd x(5, 3);
    for (int i = 0; i < x.size(); ++i) x.data()[i] = 2.0 * uniform01(gen) - 1.0;
    const MatrixXd lifted = lift_matrix(x, 3);
    for (int n = 0; n < x.rows(); ++n)
        CHECK(lifted.row(n).transpose().isApprox(lift_features(x.row(n).transpose(), 3)));
}

TEST_CASE("gate_probs basics") {
    VectorXd x(1);
    x << 0.3;

    Theta flat(ModelSpec{2, 2, 1, 1});
    const VectorXd g2 = gate_probs(flat, x);
    CHECK(g2[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(g2[1] == doctest::Approx(0.5).epsilon(1e-12));

    Theta single(ModelSpec{1, 2, 1, 1});
    CHECK(gate_probs(single, x)[0] == doctest::Approx(1.0));

    // K=3 with w_1 = ln 2, w_2 = 0 at x = 0 (intercept-only scores).
    Theta three(ModelSpec{3, 2, 1, 1});
    three.set_gate_coef(0, 0, 0, std::log(2.0));
    VectorXd x0 = VectorXd::Zero(1);
    const VectorXd g3 = gate_probs(three, x0);
    CHECK(g3[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(g3[1] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(g3[2] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("expert_probs basics and saturation") {
    VectorXd x0 = VectorXd::Zero(1);

    Theta flat(ModelSpec{1, 2, 1, 1});
    const VectorXd e = expert_probs(flat, x0, 0);
    CHECK(e[0] == doctest::Approx(0.5).epsilon(1e-12));

    Theta three(ModelSpec{1, 3, 1, 1});
    three.set_expert_coef(0, 0, 0, 0, std::log(2.0));
    const VectorXd e3 = expert_probs(three, x0, 0);
    CHECK(e3[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(e3[1] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(e3[2] == doctest::Approx(0.25).epsilon(1e-12));

    // A logit of 700 would overflow a naive exp.
    Theta big(ModelSpec{1, 2, 1, 1});
    big.set_expert_coef(0, 0, 0, 0, 700.0);
    const VectorXd sat = expert_probs(big, x0, 0);
    CHECK(std::isfinite(sat[0]));
    CHECK(sat[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(sat[1] == doctest::Approx(0.0).epsilon(1e-12));

    CHECK_THROWS_AS(expert_probs(flat, x0, 1), std::invalid_argument);
}

TEST_CASE("predict_proba mixes experts") {
    VectorXd x0 = VectorXd::Zero(1);

    // Single expert: the mixture is that expert.
    Theta single(ModelSpec{1, 3, 1, 1});
    single.set_expert_coef(0, 0, 0, 0, 0.7);
    single.set_expert_coef(1, 0, 0, 0, -0.3);
    CHECK(predict_proba(single, x0).isApprox(expert_probs(single, x0, 0), 1e-14));

    // All parameters zero: uniform.
    Theta flat(ModelSpec{3, 4, 2, 1});
    VectorXd x2 = VectorXd::Zero(2);
    const VectorXd uniform = predict_proba(flat, x2);
    for (int m = 0; m < 4; ++m) CHECK(uniform[m] == doctest::Approx(0.25).epsilon(1e-12));

    // Half/half gate with two near-deterministic opposite experts.
    Theta mix(ModelSpec{2, 2, 1, 1});
    mix.set_expert_coef(0, 0, 0, 0, 50.0);
    mix.set_expert_coef(0, 1, 0, 0, -50.0);
    const VectorXd p = predict_proba(mix, x0);
    CHECK(p[0] == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(p[1] == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("log_likelihood closed forms") {
    // All parameters zero: -N log M.
    ModelSpec spec{2, 3, 1, 1};
    Theta flat(spec);
    std::mt19937_64 gen(11);
    const Dataset data = test::random_dataset(spec, 50, gen);
    CHECK(log_likelihood(flat, data) ==
          doctest::Approx(-50.0 * std::log(3.0)).epsilon(1e-12));

    // Single datum, K=1, M=2, class-1 logit ln 3 -> log(3/4).
    Theta one(ModelSpec{1, 2, 1, 1});
    one.set_expert_coef(0, 0, 0, 0, std::log(3.0));
    MatrixXd x(1, 1);
    x << 0.0;
    VectorXi y(1);
    y << 0;
    const Dataset datum(x, y, 2);
    CHECK(log_likelihood(one, datum) == doctest::Approx(std::log(0.75)).epsilon(1e-12));

    // Empty dataset: zero.
    const Dataset empty(MatrixXd(0, 1), VectorXi(0), 2);
    CHECK(log_likelihood(one, empty) == 0.0);
}

TEST_CASE("log_likelihood equals summed log predict_proba") {
    std::mt19937_64 gen(17);
    for (int rep = 0; rep < 20; ++rep) {
        const ModelSpec spec = test::random_spec(gen);
        const Theta theta = test::random_theta(spec, gen);
        const Dataset data = test::random_dataset(spec, 30, gen);
        double direct = 0.0;
        for (int n = 0; n < data.size(); ++n)
            direct += std::log(predict_proba(theta, data.x().row(n).transpose())[data.y()[n]]);
        CHECK(log_likelihood(theta, data) == doctest::Approx(direct).epsilon(1e-10));
    }
}

TEST_CASE("softmax shift invariance") {
    // Adding a common t to all gate scores, including the implicit reference,
    // leaves the probabilities unchanged. Materialize the shift by comparing
    // against an explicit softmax over shifted scores.
    std::mt19937_64 gen(23);
    for (int rep = 0; rep < 200; ++rep) {
        const ModelSpec spec = test::random_spec(gen);
        const Theta theta = test::random_theta(spec, gen);
        VectorXd x(spec.input_dim);
        for (int p = 0; p < spec.input_dim; ++p) x[p] = 2.0 * uniform01(gen) - 1.0;
        const double shift = 10.0 * (2.0 * uniform01(gen) - 1.0);

        const VectorXd xhat = lift_features(x, spec.degree);
        VectorXd scores(spec.num_experts);
        scores.head(spec.num_experts - 1) = theta.gate_scores(xhat);
        scores[spec.num_experts - 1] = 0.0;
        scores.array() += shift;
        const double zmax = scores.maxCoeff();
        VectorXd shifted = (scores.array() - zmax).exp();
        shifted /= shifted.sum();

        CHECK((gate_probs(theta, x) - shifted).lpNorm<Eigen::Infinity>() <= 1e-12);
    }
}

TEST_CASE("probability vectors are exact distributions") {
    std::mt19937_64 gen(29);
    for (int rep = 0; rep < 1000; ++rep) {
        const ModelSpec spec = test::random_spec(gen);
        const Theta theta = test::random_theta(spec, gen, 3.0);
        VectorXd x(spec.input_dim);
        for (int p = 0; p < spec.input_dim; ++p) x[p] = 3.0 * (2.0 * uniform01(gen) - 1.0);
        const VectorXd probs = predict_proba(theta, x);
        CHECK(probs.minCoeff() >= 0.0);
        CHECK(std::abs(probs.sum() - 1.0) <= 1e-12);
        const VectorXd g = gate_probs(theta, x);
        CHECK(std::abs(g.sum() - 1.0) <= 1e-12);
    }
}

TEST_CASE("class_indicator equality and polynomial equivalence") {
    CHECK(class_indicator(1, 1, 3) == 1);
    CHECK(class_indicator(2, 1, 3) == 0);
    CHECK_THROWS_AS(class_indicator(0, 1, 3), std::invalid_argument);
    CHECK_THROWS_AS(class_indicator(1, 4, 3), std::invalid_argument);

    for (int m = 2; m <= 5; ++m)
        for (int z = 1; z <= m; ++z)
            for (int l = 1; l <= m; ++l)
                CHECK(test::polynomial_indicator(z, l, m) ==
                      doctest::Approx(class_indicator(z, l, m)).epsilon(1e-12));
}

TEST_CASE("sample_dataset determinism and frequencies") {
    const Theta truth = test::synthetic_truth();
    const Dataset a = sample_dataset(truth, 500, 424242);
    const Dataset b = sample_dataset(truth, 500, 424242);
    CHECK(a.x() == b.x());
    CHECK(a.y() == b.y());

    // Uniform model: empirical class frequencies near 1/M.
    ModelSpec spec{2, 2, 1, 1};
    Theta flat(spec);
    const int n = 100000;
    const Dataset u = sample_dataset(flat, n, 5);
    const double freq = u.y().cast<double>().sum() / n;  // share of class 2
    const double sigma = std::sqrt(0.25 / n);
    CHECK(std::abs(freq - 0.5) <= 3.0 * sigma);
}

TEST_CASE("ground truth beats random perturbations on average log-likelihood") {
    const Theta truth = test::synthetic_truth();
    const Dataset data = sample_dataset(truth, 5000, 31);
    const double truth_ll = log_likelihood(truth, data);
    std::mt19937_64 gen(37);
    int beaten = 0;
    for (int rep = 0; rep < 50; ++rep) {
        Theta perturbed = truth;
        perturbed.gate() =
            truth.gate().unaryExpr([&](double v) { return v + 0.3 * standard_normal(gen); });
        for (int k = 0; k < 2; ++k)
            perturbed.expert(k) = truth.expert(k).unaryExpr(
                [&](double v) { return v + 0.3 * standard_normal(gen); });
        if (log_likelihood(perturbed, data) <= truth_ll) ++beaten;
    }
    CHECK(beaten >= 48);
}

TEST_CASE("dataset validation") {
    MatrixXd x(2, 1);
    x << 0.0, 1.0;
    VectorXi bad(2);
    bad << 0, 2;  // class 3 of 2
    CHECK_THROWS_AS(Dataset(x, bad, 2), std::invalid_argument);

    VectorXi ok(2);
    ok << 0, 1;
    const Dataset data(x, ok, 2);
    CHECK(data.lifted(2).cols() == 3);
    CHECK(data.lifted(2)(1, 2) == doctest::Approx(1.0));
}
