#include "sgmoe/diagnostics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <thread>

#include "sgmoe/rng.hpp"

namespace sgmoe {

namespace {

void check_compatible(const MixingMeasure& g, const MixingMeasure& g0) {
    if (g.num_classes != g0.num_classes || g.input_dim != g0.input_dim || g.degree != g0.degree)
        throw std::invalid_argument("measures have different (M, P, D)");
}

double median(std::vector<double> values) {
    if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(values.begin(), values.end());
    const std::size_t mid = values.size() / 2;
    if (values.size() % 2 == 1) return values[mid];
    return 0.5 * (values[mid - 1] + values[mid]);
}

}  // namespace

double atom_distance(const Atom& a, const Atom& b) {
    double d2 = (a.gate_slope - b.gate_slope).squaredNorm();
    d2 += (a.expert_intercepts - b.expert_intercepts).squaredNorm();
    d2 += (a.expert_slopes - b.expert_slopes).squaredNorm();
    return std::sqrt(d2);
}

VoronoiAssignment voronoi_assign(const MixingMeasure& g, const MixingMeasure& g0) {
    g.validate();
    g0.validate();
    check_compatible(g, g0);
    VoronoiAssignment assignment;
    assignment.cell_of.resize(g.atoms.size());
    assignment.cells.assign(g0.atoms.size(), {});
    for (std::size_t i = 0; i < g.atoms.size(); ++i) {
        int best = 0;
        double best_d = atom_distance(g.atoms[i], g0.atoms[0]);
        for (std::size_t k = 1; k < g0.atoms.size(); ++k) {
            const double d = atom_distance(g.atoms[i], g0.atoms[k]);
            if (d < best_d) {  // strict: ties keep the lowest true index
                best_d = d;
                best = static_cast<int>(k);
            }
        }
        assignment.cell_of[i] = best;
        assignment.cells[best].push_back(static_cast<int>(i));
    }
    return assignment;
}

VoronoiLossReport voronoi_loss(const MixingMeasure& g, const MixingMeasure& g0) {
    const VoronoiAssignment assignment = voronoi_assign(g, g0);
    VoronoiLossReport report;
    for (std::size_t k = 0; k < g0.atoms.size(); ++k) {
        const Atom& truth = g0.atoms[k];
        const std::vector<int>& cell = assignment.cells[k];

        VoronoiLossReport::CellTerms terms;
        terms.true_index = static_cast<int>(k);
        double cell_mass = 0.0;
        for (int i : cell) cell_mass += g.atoms[i].pi;
        terms.mass_diff = std::abs(cell_mass - truth.pi);

        for (int i : cell) {
            const Atom& fitted = g.atoms[i];
            const VectorXd gate_gap = fitted.gate_slope - truth.gate_slope;
            for (int m = 0; m + 1 < g.num_classes; ++m) {
                const double int_gap = std::abs(fitted.expert_intercepts[m] -
                                                truth.expert_intercepts[m]);
                const double slope_gap =
                    (fitted.expert_slopes.row(m) - truth.expert_slopes.row(m)).norm();
                if (cell.size() == 1) {
                    terms.linear += fitted.pi * (gate_gap.norm() + int_gap + slope_gap);
                } else {
                    terms.quadratic += fitted.pi * (gate_gap.squaredNorm() + int_gap * int_gap +
                                                    slope_gap * slope_gap);
                }
            }
        }
        if (cell.size() > 1) report.overfit_cells.push_back(static_cast<int>(k));
        report.d_e += terms.mass_diff + terms.linear;
        report.d_v += terms.mass_diff + terms.linear + terms.quadratic;
        report.per_cell.push_back(terms);
    }
    return report;
}

double tv_discrepancy(const MixingMeasure& g, const MixingMeasure& g0,
                      const MatrixXd& x_samples) {
    g.validate();
    g0.validate();
    check_compatible(g, g0);
    if (x_samples.rows() < 1) throw std::invalid_argument("tv_discrepancy: no evaluation points");
    if (x_samples.cols() != g.input_dim)
        throw std::invalid_argument("tv_discrepancy: covariate dimension mismatch");
    double total = 0.0;
    for (int n = 0; n < x_samples.rows(); ++n) {
        const VectorXd x = x_samples.row(n).transpose();
        total += 0.5 * (density_of_measure(g, x) - density_of_measure(g0, x)).lpNorm<1>();
    }
    return total / x_samples.rows();
}

double tv_discrepancy_mc(const MixingMeasure& g, const MixingMeasure& g0, int num_samples,
                         std::uint64_t seed) {
    if (num_samples < 1) throw std::invalid_argument("tv_discrepancy_mc: need >= 1 sample");
    std::mt19937_64 gen(seed);
    MatrixXd x(num_samples, g.input_dim);
    for (int n = 0; n < num_samples; ++n)
        for (int p = 0; p < g.input_dim; ++p) x(n, p) = standard_normal(gen);
    return tv_discrepancy(g, g0, x);
}

RateFit rate_slope(const std::vector<std::pair<double, double>>& points) {
    if (points.size() < 3) throw std::invalid_argument("rate_slope: need >= 3 points");
    const int n = static_cast<int>(points.size());
    VectorXd lx(n), lz(n);
    for (int i = 0; i < n; ++i) {
        if (!(points[i].first > 0.0) || !(points[i].second > 0.0))
            throw std::invalid_argument("rate_slope: points must be positive");
        lx[i] = std::log(points[i].first);
        lz[i] = std::log(points[i].second);
    }
    const double mx = lx.mean();
    const double mz = lz.mean();
    const double sxx = (lx.array() - mx).square().sum();
    const double szz = (lz.array() - mz).square().sum();
    const double sxz = ((lx.array() - mx) * (lz.array() - mz)).sum();
    if (!(sxx > 0.0)) throw std::invalid_argument("rate_slope: sample sizes are all equal");

    RateFit fit;
    fit.points = points;
    fit.slope = sxz / sxx;
    fit.intercept = mz - fit.slope * mx;
    fit.r2 = (szz > 0.0) ? (sxz * sxz) / (sxx * szz) : 0.0;
    return fit;
}

RateExperimentResult run_rate_experiment(const RateExperimentConfig& config) {
    config.truth.validate();
    config.fit.validate();
    if (config.k_fit < 2) throw std::invalid_argument("rate experiment: k_fit must be >= 2");
    if (config.n_grid.empty()) throw std::invalid_argument("rate experiment: empty N grid");
    if (config.num_seeds < 1) throw std::invalid_argument("rate experiment: need >= 1 seed");

    const ModelSpec& truth_spec = config.truth.spec();
    const int extra = config.k_fit - truth_spec.num_experts;
    if (config.init == InitScheme::PerturbedTruth && extra < 0)
        throw std::invalid_argument("rate experiment: k_fit below the truth's expert count");
    const MixingMeasure g0 = from_theta(config.truth);

    struct Job {
        int grid_index;
        int seed_index;
    };
    std::vector<Job> jobs;
    for (int gi = 0; gi < static_cast<int>(config.n_grid.size()); ++gi)
        for (int si = 0; si < config.num_seeds; ++si) jobs.push_back({gi, si});

    auto run_job = [&](const Job& job) {
        const int n = static_cast<int>(std::llround(config.n_grid[job.grid_index]));
        const std::uint64_t seed =
            mix_seed(config.base_seed, static_cast<std::uint64_t>(job.grid_index) * 1000003ull +
                                           static_cast<std::uint64_t>(job.seed_index));
        const Dataset data = sample_dataset(config.truth, n, mix_seed(seed, 1));
        Theta theta0 = (config.init == InitScheme::PerturbedTruth)
                           ? init_perturbed_truth(config.truth, config.noise, extra,
                                                  mix_seed(seed, 2))
                           : init_from_clustering(data, config.k_fit, truth_spec.degree,
                                                  mix_seed(seed, 2));
        auto [theta, trace] = fit_mm(theta0, data, config.fit);
        const MixingMeasure g = from_theta(theta);
        const VoronoiAssignment assignment = voronoi_assign(g, g0);
        const VoronoiLossReport loss = voronoi_loss(g, g0);

        RateExperimentRow row;
        row.n = n;
        row.seed_index = job.seed_index;
        row.d_v = loss.d_v;
        row.d_e = loss.d_e;
        row.converged = trace.converged;
        row.component_err.resize(g.atoms.size());
        row.overcovered.resize(g.atoms.size());
        for (std::size_t i = 0; i < g.atoms.size(); ++i) {
            const int k = assignment.cell_of[i];
            row.component_err[i] = atom_distance(g.atoms[i], g0.atoms[k]);
            row.overcovered[i] = assignment.cells[k].size() > 1 ? 1 : 0;
        }
        return row;
    };

    // Jobs are pure given their seed; results land at fixed indices so the
    // outcome does not depend on the worker count.
    RateExperimentResult result;
    result.rows.resize(jobs.size());
    int num_threads = config.threads > 0
                          ? config.threads
                          : static_cast<int>(std::thread::hardware_concurrency());
    num_threads = std::max(1, std::min<int>(num_threads, static_cast<int>(jobs.size())));
    std::atomic<std::size_t> next_job{0};
    std::vector<std::thread> workers;
    std::vector<std::exception_ptr> errors(num_threads);
    for (int w = 0; w < num_threads; ++w)
        workers.emplace_back([&, w] {
            try {
                for (std::size_t j = next_job.fetch_add(1); j < jobs.size();
                     j = next_job.fetch_add(1))
                    result.rows[j] = run_job(jobs[j]);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    for (auto& t : workers) t.join();
    for (const auto& err : errors)
        if (err) std::rethrow_exception(err);

    // Per-N medians, then log-log slopes.
    std::vector<std::pair<double, double>> dv_points;
    const int k_fit = config.k_fit;
    std::vector<std::vector<std::pair<double, double>>> comp_points(k_fit);
    std::vector<double> overcov_total(k_fit, 0.0);
    for (int gi = 0; gi < static_cast<int>(config.n_grid.size()); ++gi) {
        std::vector<double> dv;
        std::vector<std::vector<double>> comp(k_fit);
        double n_value = 0.0;
        for (const RateExperimentRow& row : result.rows) {
            if (static_cast<int>(std::llround(config.n_grid[gi])) != row.n) continue;
            n_value = row.n;
            dv.push_back(row.d_v);
            for (int c = 0; c < k_fit; ++c) {
                comp[c].push_back(row.component_err[c]);
                overcov_total[c] += row.overcovered[c];
            }
        }
        dv_points.push_back({n_value, median(dv)});
        for (int c = 0; c < k_fit; ++c) comp_points[c].push_back({n_value, median(comp[c])});
    }
    result.dv_slope = rate_slope(dv_points);
    for (int c = 0; c < k_fit; ++c) result.component_slopes.push_back(rate_slope(comp_points[c]));
    for (int c = 0; c < k_fit; ++c)
        result.overcovered_fraction.push_back(overcov_total[c] / result.rows.size());
    return result;
}

}  // namespace sgmoe
