// Expert-count selection: the dendrogram criterion over a merge chain and the
// classical AIC/BIC/ICL scores over a multi-K sweep.
#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "sgmoe/mixing.hpp"
#include "sgmoe/mm.hpp"
#include "sgmoe/model.hpp"

namespace sgmoe {

struct SelectionReport {
    std::string criterion;
    std::vector<int> candidate_k;  // ascending
    std::vector<double> scores;    // aligned with candidate_k
    int chosen_k = 0;
    double omega_n = 0.0;  // DSC weight; 0 for the classical criteria

    struct Detail {
        double height = std::numeric_limits<double>::quiet_NaN();
        double loglik = 0.0;  // mean for DSC, total for AIC/BIC/ICL
        int param_count = 0;
    };
    std::vector<Detail> details;
};

// Free parameters of an identifiable model: (K-1)P(D+1) + K(M-1)P(D+1).
int param_count(const ModelSpec& spec);

// DSC_N^(kappa) = -(h^(kappa) + omega * mean loglik^(kappa)) over kappa in
// {2..K}; omega defaults to log N. The chain must carry per-level logliks.
SelectionReport dsc_scores(const MergeChain& chain, int n,
                           std::optional<double> omega = std::nullopt);

enum class Criterion { Aic, Bic, Icl };

struct CandidateFit {
    Theta theta;
    FitTrace trace;
    const Dataset* data = nullptr;
};

// AIC = 2p - 2L, BIC = p log N - 2L, ICL = BIC + 2 * responsibility entropy.
// All fits must refer to the same dataset.
SelectionReport criterion_scores(const std::vector<CandidateFit>& fits, Criterion criterion);

std::string criterion_name(Criterion c);

// Fits kappa = 1..k_max with clustering-based initialization; deterministic
// under the seed.
std::vector<std::pair<Theta, FitTrace>> sweep_fit(const Dataset& data, int k_max, int degree,
                                                  const FitOptions& opts, std::uint64_t seed);

}  // namespace sgmoe
