// Batch MM fitting: responsibilities, sufficient statistics, quadratic
// log-sum-exp majorizers, closed-form updates, and the monotone fit loop.
#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sgmoe/model.hpp"

namespace sgmoe {

// Posterior expert weights; each row is nonnegative and sums to 1.
struct Responsibilities {
    MatrixXd tau;  // N x K
};

struct FitOptions {
    std::optional<double> tol;  // absolute log-likelihood increment; default 1e-8 * N
    int max_iters = 500;
    double ridge = 1e-8;  // trace-scaled multiplier; 0 requests exact (unridged) solves
    bool record_trace = false;

    void validate() const;
    double resolved_tol(int n) const;
};

struct RidgeEvent {
    int iter = 0;
    std::string block;  // "gate" or "expert k"
    double lambda = 0.0;
};

struct FitTrace {
    std::vector<double> loglik;  // L(theta^(t)), starting at the initial point
    int iters = 0;
    bool converged = false;
    std::vector<RidgeEvent> ridge_events;
    std::vector<Theta> theta_path;  // filled when record_trace is set
};

// Thrown when a curvature factorization fails and no ridge escalation is allowed.
class SingularSystemError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

Responsibilities responsibilities(const Theta& theta, const Dataset& data);

// Aggregated gate design vector, length (K-1)*P(D+1): block k is
// sum_n tau_{n,k} xhat_n for the K-1 free gates.
VectorXd gate_stats(const Responsibilities& resp, const Dataset& data, const ModelSpec& spec);

// Aggregated expert design vector, length K*(M-1)*P(D+1), expert-major with
// class blocks inside; the reference class M carries no block.
VectorXd expert_stats(const Responsibilities& resp, const Dataset& data, const ModelSpec& spec);

// The uniform softmax curvature bound A_q = (3/4) I - 11^T / (2q) and its
// closed-form inverse (4/3) I + 8/(3q) 11^T.
std::pair<MatrixXd, MatrixXd> bound_factor(int q);

// Gradient of sum_n log(1 + sum_{k<K} exp(w_k(x_n))) in the stacked gate layout.
VectorXd gate_lse_grad(const Theta& theta, const Dataset& data);

// Per-expert responsibility-weighted gradients of the expert log-sum-exp terms.
std::vector<VectorXd> expert_lse_grad(const Theta& theta, const Responsibilities& resp,
                                      const Dataset& data);

// Per-sample curvature aggregates behind one MM step.
struct CurvatureBundle {
    MatrixXd xtx;               // P(D+1) square Gram, sum_n xhat xhat^T
    MatrixXd gate_curv_factor;  // A_{K-1}; empty when K = 1
    std::vector<MatrixXd> expert_curv;  // per expert, (M-1)P(D+1) square
    double ridge = 0.0;
};
CurvatureBundle curvature_bundle(const Theta& theta, const Responsibilities& resp,
                                 const Dataset& data, double ridge);

// Value of the quadratic MM surrogate of -L at theta, anchored at the iterate
// where responsibilities, statistics, and curvatures are formed. Majorizes
// -L(theta) everywhere and touches it at theta == anchor.
double surrogate_value(const Theta& theta, const Theta& anchor, const Dataset& data);

// One closed-form minimization of the surrogate anchored at theta.
Theta mm_step(const Theta& theta, const Dataset& data, const FitOptions& opts);

// Full batch MM loop: iterate until the likelihood increment drops below tol
// or max_iters is reached. The recorded log-likelihoods are non-decreasing.
std::pair<Theta, FitTrace> fit_mm(const Theta& theta0, const Dataset& data,
                                  const FitOptions& opts);

// Gradient of the observed-data log-likelihood, flattened like Theta::flatten.
VectorXd loglik_gradient(const Theta& theta, const Dataset& data);

// Plain full-batch gradient ascent with a fixed step on the normalized
// gradient; benchmarking contrast only, no monotonicity guarantee.
std::pair<Theta, FitTrace> fit_gradient_baseline(const Theta& theta0, const Dataset& data,
                                                 double step, int iters,
                                                 bool record_trace = false);

// Ground-truth perturbation initializer. Adds noise * N(0,1) to every free
// coefficient of the original experts; extra experts duplicate the first
// expert's parameters so over-parameterization creates near-duplicate atoms.
Theta init_perturbed_truth(const Theta& theta_true, double noise, int extra_experts,
                           std::uint64_t seed);

// Two-stage data-driven initializer: k-means++ on covariates, then one-expert
// multinomial-logistic fits per cluster; gate intercepts from log proportions.
Theta init_from_clustering(const Dataset& data, int num_experts, int degree,
                           std::uint64_t seed);

}  // namespace sgmoe
