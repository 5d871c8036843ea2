#include "sgmoe/selection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "sgmoe/rng.hpp"

namespace sgmoe {

int param_count(const ModelSpec& spec) {
    spec.validate();
    const int L = spec.lifted_dim();
    return (spec.num_experts - 1) * L + spec.num_experts * (spec.num_classes - 1) * L;
}

SelectionReport dsc_scores(const MergeChain& chain, int n, std::optional<double> omega) {
    if (chain.levels.empty()) throw std::invalid_argument("dsc_scores: empty chain");
    if (chain.logliks.size() != chain.levels.size())
        throw std::invalid_argument("dsc_scores: chain carries no per-level log-likelihoods");
    if (n < 2) throw std::invalid_argument("dsc_scores: need N >= 2");

    const int k_top = static_cast<int>(chain.levels.front().atoms.size());
    SelectionReport report;
    report.criterion = "dsc";
    report.omega_n = omega.value_or(std::log(static_cast<double>(n)));

    const MixingMeasure& top = chain.levels.front();
    double best = std::numeric_limits<double>::infinity();
    for (int kappa = 2; kappa <= k_top; ++kappa) {
        const int idx = chain.level_of(kappa);
        const double height = chain.heights.at(idx);
        const double loglik = chain.logliks.at(idx);
        const double score = -(height + report.omega_n * loglik);
        report.candidate_k.push_back(kappa);
        report.scores.push_back(score);
        report.details.push_back(
            {height, loglik,
             param_count({kappa, top.num_classes, top.input_dim, top.degree})});
        if (score < best) {  // strict: ties keep the smaller kappa
            best = score;
            report.chosen_k = kappa;
        }
    }
    return report;
}

std::string criterion_name(Criterion c) {
    switch (c) {
        case Criterion::Aic: return "aic";
        case Criterion::Bic: return "bic";
        case Criterion::Icl: return "icl";
    }
    throw std::invalid_argument("unknown criterion");
}

SelectionReport criterion_scores(const std::vector<CandidateFit>& fits, Criterion criterion) {
    if (fits.empty()) throw std::invalid_argument("criterion_scores: no candidate fits");
    const Dataset* data = fits.front().data;
    if (!data) throw std::invalid_argument("criterion_scores: candidate without dataset");
    for (const CandidateFit& fit : fits) {
        if (fit.data == data) continue;
        if (!fit.data || fit.data->size() != data->size() ||
            fit.data->num_classes() != data->num_classes() || fit.data->x() != data->x() ||
            fit.data->y() != data->y())
            throw std::invalid_argument("criterion_scores: fits use inconsistent datasets");
    }

    SelectionReport report;
    report.criterion = criterion_name(criterion);
    const double n = static_cast<double>(data->size());

    struct Entry {
        int k;
        double score;
        SelectionReport::Detail detail;
    };
    std::vector<Entry> entries;
    for (const CandidateFit& fit : fits) {
        const int p = param_count(fit.theta.spec());
        const double loglik = log_likelihood(fit.theta, *data);
        double score = 0.0;
        switch (criterion) {
            case Criterion::Aic:
                score = 2.0 * p - 2.0 * loglik;
                break;
            case Criterion::Bic:
                score = p * std::log(n) - 2.0 * loglik;
                break;
            case Criterion::Icl: {
                const Responsibilities resp = responsibilities(fit.theta, *data);
                double entropy = 0.0;
                for (int i = 0; i < resp.tau.rows(); ++i)
                    for (int k = 0; k < resp.tau.cols(); ++k) {
                        const double t = resp.tau(i, k);
                        if (t > 0.0) entropy -= t * std::log(t);
                    }
                score = p * std::log(n) - 2.0 * loglik + 2.0 * entropy;
                break;
            }
        }
        entries.push_back({fit.theta.spec().num_experts, score,
                           {std::numeric_limits<double>::quiet_NaN(), loglik, p}});
    }
    std::sort(entries.begin(), entries.end(),
              [](const Entry& a, const Entry& b) { return a.k < b.k; });

    double best = std::numeric_limits<double>::infinity();
    for (const Entry& e : entries) {
        report.candidate_k.push_back(e.k);
        report.scores.push_back(e.score);
        report.details.push_back(e.detail);
        if (e.score < best) {
            best = e.score;
            report.chosen_k = e.k;
        }
    }
    return report;
}

std::vector<std::pair<Theta, FitTrace>> sweep_fit(const Dataset& data, int k_max, int degree,
                                                  const FitOptions& opts, std::uint64_t seed) {
    if (k_max < 1) throw std::invalid_argument("sweep_fit: k_max must be >= 1");
    std::vector<std::pair<Theta, FitTrace>> fits;
    fits.reserve(k_max);
    for (int k = 1; k <= k_max; ++k) {
        const Theta theta0 = init_from_clustering(data, k, degree, mix_seed(seed, k));
        fits.push_back(fit_mm(theta0, data, opts));
    }
    return fits;
}

}  // namespace sgmoe
