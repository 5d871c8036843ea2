// Mixing-measure view of a fitted model: weighted parameter atoms, atom
// dissimilarities, barycentric merges, and the dendrogram merge chain.
#pragma once

#include <Eigen/Dense>

#include <optional>
#include <utility>
#include <vector>

#include "sgmoe/model.hpp"

namespace sgmoe {

// One weighted parameter point. Slope vectors live in R^{P*D} using the
// non-constant lifted layout: degree-major, coordinate within, i.e.
// index (d, p) -> (d-1)*P + p.
struct Atom {
    double pi = 0.0;              // > 0
    double gate_intercept = 0.0;  // log(pi) under canonical normalization
    VectorXd gate_slope;          // P*D
    VectorXd expert_intercepts;   // M-1
    MatrixXd expert_slopes;       // (M-1) x (P*D)
};

struct MixingMeasure {
    int num_classes = 2;  // M
    int input_dim = 1;    // P
    int degree = 1;       // D
    std::vector<Atom> atoms;

    int slope_dim() const { return input_dim * degree; }
    double total_weight() const;
    void validate() const;
};

// Dendrogram of measures from kappa = K down to 2. Level i holds
// levels[i].atoms.size() atoms; heights[i] is the minimum pairwise
// dissimilarity at that level, which equals the dissimilarity of
// merged_pairs[i]. Per-level empirical mean log-likelihoods are recorded
// when a dataset is supplied.
struct MergeChain {
    std::vector<MixingMeasure> levels;
    std::vector<double> heights;
    std::vector<std::pair<int, int>> merged_pairs;
    std::vector<double> logliks;  // empty when built without data

    int level_of(int kappa) const;  // index into levels; throws if absent
};

// Intercept/slope decomposition of an identifiable theta. Weights are
// canonically normalized to sum to one (a common intercept shift the induced
// density is invariant to); the reference expert becomes an explicit atom.
MixingMeasure from_theta(const Theta& theta);

// s_G(. | x): gates proportional to pi_i exp(slope_i . phi_D(x)), experts
// multinomial-logistic with the reference class last.
VectorXd density_of_measure(const MixingMeasure& g, const VectorXd& x_row);

// Non-constant lifted features phi_D(x) = [x^1, ..., x^D], degree-major.
VectorXd lift_slope_features(const VectorXd& x_row, int degree);

// Weighted squared parameter gap: pi_i pi_j / (pi_i + pi_j) times the summed
// squared differences of gate slopes and per-class expert parameters.
double dissimilarity(const Atom& a, const Atom& b);

// Weight-additive barycentric merge; the merged intercept is log of the
// summed weight.
Atom merge_pair(const Atom& a, const Atom& b);

// Greedy agglomeration by minimum dissimilarity, ties broken by the lowest
// index pair. Descends to 2 atoms (1 when include_singleton_level is set).
MergeChain build_chain(const MixingMeasure& g, const Dataset* data = nullptr,
                       bool include_singleton_level = false);

double mean_log_likelihood(const MixingMeasure& g, const Dataset& data);

}  // namespace sgmoe
