// Parameter-recovery diagnostics: Voronoi assignment and loss against a
// reference measure, averaged total-variation discrepancy, and log-log
// rate-slope estimation.
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sgmoe/mixing.hpp"
#include "sgmoe/mm.hpp"
#include "sgmoe/model.hpp"

namespace sgmoe {

// Nearest-true-atom matching of fitted atoms; distances are Euclidean on the
// concatenated slope/intercept blocks, weights excluded.
struct VoronoiAssignment {
    std::vector<int> cell_of;             // fitted index -> true index
    std::vector<std::vector<int>> cells;  // true index -> fitted indices
};

struct VoronoiLossReport {
    double d_v = 0.0;  // full loss
    double d_e = 0.0;  // mass discrepancy + linear terms on singleton cells

    struct CellTerms {
        int true_index = 0;
        double mass_diff = 0.0;
        double linear = 0.0;     // singleton cells only
        double quadratic = 0.0;  // over-covered cells only
    };
    std::vector<CellTerms> per_cell;
    std::vector<int> overfit_cells;  // true indices with more than one fitted atom
};

struct RateFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
    std::vector<std::pair<double, double>> points;  // (N, metric)
};

VoronoiAssignment voronoi_assign(const MixingMeasure& g, const MixingMeasure& g0);

VoronoiLossReport voronoi_loss(const MixingMeasure& g, const MixingMeasure& g0);

// Euclidean parameter gap of one fitted atom to one reference atom.
double atom_distance(const Atom& a, const Atom& b);

// Average over the given covariate rows of half the L1 gap between the two
// induced class distributions; always in [0, 1].
double tv_discrepancy(const MixingMeasure& g, const MixingMeasure& g0, const MatrixXd& x_samples);

// Monte Carlo variant with standard-normal draws.
double tv_discrepancy_mc(const MixingMeasure& g, const MixingMeasure& g0, int num_samples,
                         std::uint64_t seed);

// OLS of log(metric) on log(N); requires >= 3 positive points.
RateFit rate_slope(const std::vector<std::pair<double, double>>& points);

// --- sample-size sweep reproducing the convergence-rate figures ---

enum class InitScheme { PerturbedTruth, Cluster };

struct RateExperimentConfig {
    Theta truth;
    int k_fit = 2;
    std::vector<double> n_grid;  // sample sizes, rounded to integers
    int num_seeds = 10;
    std::uint64_t base_seed = 1;
    InitScheme init = InitScheme::PerturbedTruth;
    double noise = 0.5;  // perturbed-truth noise level
    FitOptions fit;
    int threads = 0;  // 0 = hardware concurrency
};

struct RateExperimentRow {
    int n = 0;
    int seed_index = 0;
    double d_v = 0.0;
    double d_e = 0.0;
    bool converged = false;
    std::vector<double> component_err;  // per fitted atom, matched Frobenius gap
    std::vector<int> overcovered;       // per fitted atom, 1 if its cell holds > 1 atom
};

struct RateExperimentResult {
    std::vector<RateExperimentRow> rows;  // grid-major: all seeds of n_grid[0], ...
    RateFit dv_slope;                     // on per-N medians of d_v
    std::vector<RateFit> component_slopes;
    std::vector<double> overcovered_fraction;  // per fitted atom
};

RateExperimentResult run_rate_experiment(const RateExperimentConfig& config);

}  // namespace sgmoe
