#include "sgmoe/mm.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "sgmoe/rng.hpp"

namespace sgmoe {

namespace {

constexpr double kFrozenExpertMass = 1e-12;
constexpr double kMaxRidgeMultiplier = 1e-2;

// Probabilities of the free categories under baseline softmax, row-wise;
// the reference category's probability is the complement.
MatrixXd baseline_prob_matrix(const MatrixXd& scores) {
    MatrixXd probs(scores.rows(), scores.cols());
    for (int i = 0; i < scores.rows(); ++i) {
        const double lse = log1p_sum_exp(scores.row(i).transpose());
        probs.row(i) = (scores.row(i).array() - lse).exp();
    }
    return probs;
}

MatrixXd kronecker(const MatrixXd& a, const MatrixXd& b) {
    MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

void check_dims(const Theta& theta, const Dataset& data) {
    if (data.input_dim() != theta.spec().input_dim ||
        data.num_classes() != theta.spec().num_classes)
        throw std::invalid_argument("theta/dataset dimension mismatch");
}

// Vector of row-major stacked coefficients of one expert block.
VectorXd stack_rows(const MatrixXd& m) {
    VectorXd out(m.size());
    for (int r = 0; r < m.rows(); ++r)
        out.segment(r * m.cols(), m.cols()) = m.row(r).transpose();
    return out;
}

// Factorizes mat + lambda*I, escalating lambda by x10 on failure up to the
// cap. With base multiplier zero no escalation is attempted.
struct RidgedFactor {
    Eigen::LLT<MatrixXd> llt;
    double lambda = 0.0;
    double multiplier = 0.0;
    bool escalated = false;
};

RidgedFactor factor_with_ridge(const MatrixXd& mat, double base_multiplier,
                               const std::string& block) {
    const int dim = static_cast<int>(mat.rows());
    const double scale = mat.trace() / std::max(1, dim);
    RidgedFactor result;
    double mult = base_multiplier;
    while (true) {
        result.lambda = mult * scale;
        MatrixXd ridged = mat;
        ridged.diagonal().array() += result.lambda;
        result.llt.compute(ridged);
        if (result.llt.info() == Eigen::Success && ridged.allFinite()) {
            result.multiplier = mult;
            return result;
        }
        if (base_multiplier == 0.0)
            throw SingularSystemError("singular curvature in " + block +
                                      " solve; retry with FitOptions.ridge > 0");
        result.escalated = true;
        mult = (mult == 0.0) ? 1e-12 : mult * 10.0;
        if (mult > kMaxRidgeMultiplier)
            throw SingularSystemError("curvature in " + block +
                                      " solve stayed singular up to the ridge cap");
    }
}

}  // namespace

void FitOptions::validate() const {
    if (tol && (!(*tol > 0.0) || !std::isfinite(*tol)))
        throw std::invalid_argument("FitOptions: tol must be positive");
    if (max_iters < 1) throw std::invalid_argument("FitOptions: max_iters must be >= 1");
    if (!(ridge >= 0.0) || !std::isfinite(ridge))
        throw std::invalid_argument("FitOptions: ridge must be >= 0");
}

double FitOptions::resolved_tol(int n) const {
    return tol ? *tol : 1e-8 * std::max(1, n);
}

Responsibilities responsibilities(const Theta& theta, const Dataset& data) {
    check_dims(theta, data);
    const LogJointTable table =
        log_joint_table(theta, data.lifted(theta.spec().degree), data.y());
    Responsibilities resp;
    resp.tau = (table.log_joint.colwise() - table.loglik_n).array().exp();
    return resp;
}

VectorXd gate_stats(const Responsibilities& resp, const Dataset& data, const ModelSpec& spec) {
    const MatrixXd& xhat = data.lifted(spec.degree);
    const int L = spec.lifted_dim();
    VectorXd s = VectorXd::Zero((spec.num_experts - 1) * L);
    for (int k = 0; k + 1 < spec.num_experts; ++k)
        s.segment(k * L, L) = xhat.transpose() * resp.tau.col(k);
    return s;
}

VectorXd expert_stats(const Responsibilities& resp, const Dataset& data, const ModelSpec& spec) {
    const MatrixXd& xhat = data.lifted(spec.degree);
    const int L = spec.lifted_dim();
    const int block = (spec.num_classes - 1) * L;
    VectorXd r = VectorXd::Zero(spec.num_experts * block);
    for (int k = 0; k < spec.num_experts; ++k)
        for (int m = 0; m + 1 < spec.num_classes; ++m) {
            VectorXd w = VectorXd::Zero(data.size());
            for (int n = 0; n < data.size(); ++n)
                if (data.y()[n] == m) w[n] = resp.tau(n, k);
            r.segment(k * block + m * L, L) = xhat.transpose() * w;
        }
    return r;
}

std::pair<MatrixXd, MatrixXd> bound_factor(int q) {
    if (q < 1) throw std::invalid_argument("bound_factor: q must be >= 1");
    MatrixXd a = 0.75 * MatrixXd::Identity(q, q);
    a.array() -= 1.0 / (2.0 * q);
    MatrixXd a_inv = (4.0 / 3.0) * MatrixXd::Identity(q, q);
    a_inv.array() += 8.0 / (3.0 * q);
    return {a, a_inv};
}

VectorXd gate_lse_grad(const Theta& theta, const Dataset& data) {
    check_dims(theta, data);
    const ModelSpec& spec = theta.spec();
    const int L = spec.lifted_dim();
    VectorXd grad = VectorXd::Zero((spec.num_experts - 1) * L);
    if (spec.num_experts == 1 || data.size() == 0) return grad;
    const MatrixXd& xhat = data.lifted(spec.degree);
    const MatrixXd probs = baseline_prob_matrix(xhat * theta.gate().transpose());
    for (int k = 0; k + 1 < spec.num_experts; ++k)
        grad.segment(k * L, L) = xhat.transpose() * probs.col(k);
    return grad;
}

std::vector<VectorXd> expert_lse_grad(const Theta& theta, const Responsibilities& resp,
                                      const Dataset& data) {
    check_dims(theta, data);
    const ModelSpec& spec = theta.spec();
    const int L = spec.lifted_dim();
    const MatrixXd& xhat = data.lifted(spec.degree);
    std::vector<VectorXd> grads(spec.num_experts);
    for (int k = 0; k < spec.num_experts; ++k) {
        grads[k] = VectorXd::Zero((spec.num_classes - 1) * L);
        if (data.size() == 0) continue;
        const MatrixXd probs = baseline_prob_matrix(xhat * theta.expert(k).transpose());
        for (int m = 0; m + 1 < spec.num_classes; ++m)
            grads[k].segment(m * L, L) =
                xhat.transpose() * (resp.tau.col(k).cwiseProduct(probs.col(m)));
    }
    return grads;
}

CurvatureBundle curvature_bundle(const Theta& theta, const Responsibilities& resp,
                                 const Dataset& data, double ridge) {
    check_dims(theta, data);
    const ModelSpec& spec = theta.spec();
    const MatrixXd& xhat = data.lifted(spec.degree);
    CurvatureBundle bundle;
    bundle.ridge = ridge;
    bundle.xtx = xhat.transpose() * xhat;
    if (spec.num_experts > 1) bundle.gate_curv_factor = bound_factor(spec.num_experts - 1).first;
    const MatrixXd a_m = bound_factor(spec.num_classes - 1).first;
    bundle.expert_curv.reserve(spec.num_experts);
    for (int k = 0; k < spec.num_experts; ++k) {
        const MatrixXd gram_k =
            xhat.transpose() * resp.tau.col(k).asDiagonal() * xhat;
        bundle.expert_curv.push_back(kronecker(a_m, gram_k));
    }
    return bundle;
}

double surrogate_value(const Theta& theta, const Theta& anchor, const Dataset& data) {
    if (!(theta.spec() == anchor.spec()))
        throw std::invalid_argument("surrogate_value: theta/anchor spec mismatch");
    check_dims(anchor, data);
    const ModelSpec& spec = anchor.spec();
    const int L = spec.lifted_dim();
    const MatrixXd& xhat = data.lifted(spec.degree);
    const int n = data.size();

    const LogJointTable table = log_joint_table(anchor, xhat, data.y());
    Responsibilities resp;
    resp.tau = (table.log_joint.colwise() - table.loglik_n).array().exp();

    // Responsibility entropy term, with the 0 log 0 = 0 convention.
    double value = 0.0;
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < spec.num_experts; ++k) {
            const double t = resp.tau(i, k);
            if (t > 0.0) value += t * std::log(t);
        }

    // Linear sufficient-statistic terms at the evaluation point.
    const VectorXd s = gate_stats(resp, data, spec);
    const VectorXd r = expert_stats(resp, data, spec);
    const int block = (spec.num_classes - 1) * L;
    if (spec.num_experts > 1) value -= stack_rows(theta.gate()).dot(s);
    for (int k = 0; k < spec.num_experts; ++k)
        value -= stack_rows(theta.expert(k)).dot(r.segment(k * block, block));

    // Gate log-sum-exp majorizer around the anchor.
    if (spec.num_experts > 1) {
        const MatrixXd scores = xhat * anchor.gate().transpose();
        double g_sum = 0.0;
        for (int i = 0; i < n; ++i) g_sum += log1p_sum_exp(scores.row(i).transpose());
        const VectorXd grad = gate_lse_grad(anchor, data);
        const MatrixXd diff = theta.gate() - anchor.gate();
        const MatrixXd gram = xhat.transpose() * xhat;
        const MatrixXd a_k = bound_factor(spec.num_experts - 1).first;
        value += g_sum + stack_rows(diff).dot(grad) +
                 0.5 * a_k.cwiseProduct(diff * gram * diff.transpose()).sum();
    }

    // Per-expert responsibility-weighted majorizers.
    const MatrixXd a_m = bound_factor(spec.num_classes - 1).first;
    const std::vector<VectorXd> e_grads = expert_lse_grad(anchor, resp, data);
    for (int k = 0; k < spec.num_experts; ++k) {
        const MatrixXd scores = xhat * anchor.expert(k).transpose();
        double e_sum = 0.0;
        for (int i = 0; i < n; ++i)
            e_sum += resp.tau(i, k) * log1p_sum_exp(scores.row(i).transpose());
        const MatrixXd diff = theta.expert(k) - anchor.expert(k);
        const MatrixXd gram_k = xhat.transpose() * resp.tau.col(k).asDiagonal() * xhat;
        value += e_sum + stack_rows(diff).dot(e_grads[k]) +
                 0.5 * a_m.cwiseProduct(diff * gram_k * diff.transpose()).sum();
    }
    return value;
}

namespace {

// One-time lift/Gram setup shared across MM iterations; the gate Gram factor
// does not depend on the iterate and is factorized once per fit.
class MmStepper {
public:
    MmStepper(const ModelSpec& spec, const Dataset& data, const FitOptions& opts)
        : spec_(spec), data_(data), opts_(opts), xhat_(data.lifted(spec.degree)) {
        gram_ = xhat_.transpose() * xhat_;
        if (spec_.num_experts > 1) {
            auto [a, a_inv] = bound_factor(spec_.num_experts - 1);
            gate_a_inv_ = a_inv;
        }
        expert_a_ = bound_factor(spec_.num_classes - 1).first;
    }

    struct Result {
        Theta next;
        double loglik = 0.0;
    };

    Result step(const Theta& theta, int iter, FitTrace* trace) {
        const int L = spec_.lifted_dim();
        const int K = spec_.num_experts;
        const int M = spec_.num_classes;

        const LogJointTable table = log_joint_table(theta, xhat_, data_.y());
        Responsibilities resp;
        resp.tau = (table.log_joint.colwise() - table.loglik_n).array().exp();

        Result out;
        out.loglik = table.loglik_n.sum();
        out.next = theta;

        if (K > 1) {
            if (!gate_factor_) {
                RidgedFactor f = factor_with_ridge(gram_, opts_.ridge, "gate");
                if (f.escalated && trace)
                    trace->ridge_events.push_back({iter, "gate", f.lambda});
                gate_factor_ = std::move(f);
            }
            const VectorXd s = gate_stats(resp, data_, spec_);
            const VectorXd grad = gate_lse_grad(theta, data_);
            MatrixXd residual(K - 1, L);
            for (int k = 0; k + 1 < K; ++k)
                residual.row(k) = (s.segment(k * L, L) - grad.segment(k * L, L)).transpose();
            // (A^-1 kron Gram^-1) * residual, block by block.
            MatrixXd solved(K - 1, L);
            for (int k = 0; k + 1 < K; ++k)
                solved.row(k) = gate_factor_->llt.solve(residual.row(k).transpose()).transpose();
            out.next.gate() = theta.gate() + gate_a_inv_ * solved;
        }

        const VectorXd r = expert_stats(resp, data_, spec_);
        const std::vector<VectorXd> e_grads = expert_lse_grad(theta, resp, data_);
        const int block = (M - 1) * L;
        for (int k = 0; k < K; ++k) {
            // A numerically dead expert has a singular curvature block; its
            // parameters stay frozen for the iteration.
            if (resp.tau.col(k).sum() < kFrozenExpertMass) continue;
            const MatrixXd gram_k = xhat_.transpose() * resp.tau.col(k).asDiagonal() * xhat_;
            const MatrixXd curv = kronecker(expert_a_, gram_k);
            RidgedFactor f = factor_with_ridge(curv, opts_.ridge, "expert " + std::to_string(k));
            if (f.escalated && trace)
                trace->ridge_events.push_back({iter, "expert " + std::to_string(k), f.lambda});
            const VectorXd delta = f.llt.solve(r.segment(k * block, block) - e_grads[k]);
            for (int m = 0; m + 1 < M; ++m)
                out.next.expert(k).row(m) += delta.segment(m * L, L).transpose();
        }
        if (!out.next.all_finite())
            throw SingularSystemError("MM update produced non-finite parameters; "
                                      "retry with a larger FitOptions.ridge");
        return out;
    }

private:
    ModelSpec spec_;
    const Dataset& data_;
    FitOptions opts_;
    const MatrixXd& xhat_;
    MatrixXd gram_;
    MatrixXd gate_a_inv_;
    MatrixXd expert_a_;
    std::optional<RidgedFactor> gate_factor_;
};

}  // namespace

Theta mm_step(const Theta& theta, const Dataset& data, const FitOptions& opts) {
    opts.validate();
    theta.validate();
    check_dims(theta, data);
    MmStepper stepper(theta.spec(), data, opts);
    return stepper.step(theta, 0, nullptr).next;
}

std::pair<Theta, FitTrace> fit_mm(const Theta& theta0, const Dataset& data,
                                  const FitOptions& opts) {
    opts.validate();
    theta0.validate();
    check_dims(theta0, data);
    const double eps = opts.resolved_tol(data.size());

    MmStepper stepper(theta0.spec(), data, opts);
    FitTrace trace;
    Theta current = theta0;
    for (int t = 0; t < opts.max_iters; ++t) {
        MmStepper::Result result = stepper.step(current, t, &trace);
        trace.loglik.push_back(result.loglik);  // L(theta^(t))
        if (opts.record_trace) trace.theta_path.push_back(current);
        if (t > 0 && std::abs(trace.loglik[t] - trace.loglik[t - 1]) <= eps) {
            trace.converged = true;
            trace.iters = t;
            return {current, trace};
        }
        current = std::move(result.next);
    }
    trace.loglik.push_back(log_likelihood(current, data));
    if (opts.record_trace) trace.theta_path.push_back(current);
    trace.iters = opts.max_iters;
    trace.converged = std::abs(trace.loglik[opts.max_iters] - trace.loglik[opts.max_iters - 1]) <= eps;
    return {current, trace};
}

VectorXd loglik_gradient(const Theta& theta, const Dataset& data) {
    check_dims(theta, data);
    const ModelSpec& spec = theta.spec();
    const Responsibilities resp = responsibilities(theta, data);
    const VectorXd gate_part = gate_stats(resp, data, spec) - gate_lse_grad(theta, data);
    const VectorXd r = expert_stats(resp, data, spec);
    const std::vector<VectorXd> e_grads = expert_lse_grad(theta, resp, data);

    VectorXd grad(Theta(spec).num_free_params());
    const int L = spec.lifted_dim();
    const int block = (spec.num_classes - 1) * L;
    int pos = 0;
    grad.segment(0, gate_part.size()) = gate_part;
    pos += static_cast<int>(gate_part.size());
    for (int k = 0; k < spec.num_experts; ++k) {
        grad.segment(pos, block) = r.segment(k * block, block) - e_grads[k];
        pos += block;
    }
    return grad;
}

std::pair<Theta, FitTrace> fit_gradient_baseline(const Theta& theta0, const Dataset& data,
                                                 double step, int iters, bool record_trace) {
    if (!(step > 0.0)) throw std::invalid_argument("fit_gradient_baseline: step must be > 0");
    if (iters < 1) throw std::invalid_argument("fit_gradient_baseline: iters must be >= 1");
    theta0.validate();
    check_dims(theta0, data);
    const double scale = std::max(1, data.size());

    FitTrace trace;
    Theta theta = theta0;
    trace.loglik.push_back(log_likelihood(theta, data));
    if (record_trace) trace.theta_path.push_back(theta);
    for (int t = 0; t < iters; ++t) {
        const VectorXd grad = loglik_gradient(theta, data);
        theta = Theta::from_flat(theta.spec(), theta.flatten() + (step / scale) * grad);
        trace.loglik.push_back(log_likelihood(theta, data));
        if (record_trace) trace.theta_path.push_back(theta);
    }
    trace.iters = iters;
    trace.converged = false;
    return {theta, trace};
}

Theta init_perturbed_truth(const Theta& theta_true, double noise, int extra_experts,
                           std::uint64_t seed) {
    if (noise < 0.0) throw std::invalid_argument("init_perturbed_truth: noise must be >= 0");
    if (extra_experts < 0)
        throw std::invalid_argument("init_perturbed_truth: extra_experts must be >= 0");
    theta_true.validate();
    const ModelSpec& spec0 = theta_true.spec();
    const int k0 = spec0.num_experts;

    ModelSpec spec = spec0;
    spec.num_experts = k0 + extra_experts;
    Theta out(spec);

    // Expert order: originals 1..K0-1, then the duplicates, then the original
    // reference expert, which stays the reference of the enlarged model. Each
    // duplicate copies the first expert's gate and classifier coefficients.
    for (int k = 0; k + 1 < k0; ++k) out.gate().row(k) = theta_true.gate().row(k);
    for (int e = 0; e < extra_experts; ++e) {
        const int row = k0 - 1 + e;
        if (k0 > 1) out.gate().row(row) = theta_true.gate().row(0);
        out.expert(row) = theta_true.expert(0);
    }
    for (int k = 0; k + 1 < k0; ++k) out.expert(k) = theta_true.expert(k);
    out.expert(spec.num_experts - 1) = theta_true.expert(k0 - 1);

    std::mt19937_64 gen(seed);
    if (noise > 0.0) {
        for (int k = 0; k + 1 < k0; ++k)
            for (int j = 0; j < out.gate().cols(); ++j)
                out.gate()(k, j) += noise * standard_normal(gen);
        for (int idx = 0; idx < k0; ++idx) {
            const int k = (idx + 1 < k0) ? idx : spec.num_experts - 1;
            MatrixXd& mat = out.expert(k);
            for (int m = 0; m < mat.rows(); ++m)
                for (int j = 0; j < mat.cols(); ++j) mat(m, j) += noise * standard_normal(gen);
        }
    }
    return out;
}

namespace {

struct KmeansResult {
    std::vector<std::vector<int>> members;  // per cluster, may share rows after fallback
    std::vector<double> proportions;
};

std::vector<int> lloyd_assign(const MatrixXd& x, const MatrixXd& centroids) {
    std::vector<int> assign(x.rows());
    for (int n = 0; n < x.rows(); ++n) {
        int best = 0;
        double best_d = (x.row(n) - centroids.row(0)).squaredNorm();
        for (int c = 1; c < centroids.rows(); ++c) {
            const double d = (x.row(n) - centroids.row(c)).squaredNorm();
            if (d < best_d) {
                best_d = d;
                best = c;
            }
        }
        assign[n] = best;
    }
    return assign;
}

MatrixXd kmeanspp_seed(const MatrixXd& x, int k, std::mt19937_64& gen) {
    const int n = static_cast<int>(x.rows());
    MatrixXd centroids(k, x.cols());
    centroids.row(0) = x.row(std::min<int>(n - 1, static_cast<int>(uniform01(gen) * n)));
    VectorXd dist2 = (x.rowwise() - centroids.row(0)).rowwise().squaredNorm();
    for (int c = 1; c < k; ++c) {
        const double total = dist2.sum();
        int pick = 0;
        if (total > 0.0) {
            const double target = uniform01(gen) * total;
            double acc = 0.0;
            for (int i = 0; i < n; ++i) {
                acc += dist2[i];
                if (acc >= target) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = std::min<int>(n - 1, static_cast<int>(uniform01(gen) * n));
        }
        centroids.row(c) = x.row(pick);
        dist2 = dist2.cwiseMin((x.rowwise() - centroids.row(c)).rowwise().squaredNorm());
    }
    return centroids;
}

KmeansResult kmeans_clusters(const MatrixXd& x, int k, std::mt19937_64& gen) {
    const int n = static_cast<int>(x.rows());
    std::vector<int> assign;
    for (int attempt = 0; attempt < 5; ++attempt) {
        MatrixXd centroids = kmeanspp_seed(x, k, gen);
        assign = lloyd_assign(x, centroids);
        for (int iter = 0; iter < 100; ++iter) {
            MatrixXd sums = MatrixXd::Zero(k, x.cols());
            std::vector<int> counts(k, 0);
            for (int i = 0; i < n; ++i) {
                sums.row(assign[i]) += x.row(i);
                ++counts[assign[i]];
            }
            for (int c = 0; c < k; ++c)
                if (counts[c] > 0) centroids.row(c) = sums.row(c) / counts[c];
            std::vector<int> next = lloyd_assign(x, centroids);
            if (next == assign) break;
            assign = std::move(next);
        }
        std::vector<int> counts(k, 0);
        for (int a : assign) ++counts[a];
        if (std::all_of(counts.begin(), counts.end(), [](int c) { return c > 0; })) break;
    }

    KmeansResult result;
    result.members.assign(k, {});
    for (int i = 0; i < n; ++i) result.members[assign[i]].push_back(i);

    // Clusters still empty after the re-seed attempts borrow the members of
    // the smallest non-empty cluster.
    int smallest = -1;
    for (int c = 0; c < k; ++c) {
        if (result.members[c].empty()) continue;
        if (smallest < 0 || result.members[c].size() < result.members[smallest].size())
            smallest = c;
    }
    std::vector<double> counts(k, 0.0);
    for (int c = 0; c < k; ++c) {
        if (result.members[c].empty()) result.members[c] = result.members[smallest];
        counts[c] = static_cast<double>(result.members[c].size());
    }
    const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
    result.proportions.resize(k);
    for (int c = 0; c < k; ++c) result.proportions[c] = counts[c] / total;
    return result;
}

}  // namespace

Theta init_from_clustering(const Dataset& data, int num_experts, int degree,
                           std::uint64_t seed) {
    if (num_experts < 1) throw std::invalid_argument("init_from_clustering: K must be >= 1");
    if (data.size() < 1) throw std::invalid_argument("init_from_clustering: empty dataset");
    ModelSpec spec{num_experts, data.num_classes(), data.input_dim(), degree};
    spec.validate();

    std::mt19937_64 gen(mix_seed(seed, 0));
    const KmeansResult clusters = kmeans_clusters(data.x(), num_experts, gen);

    Theta out(spec);
    const ModelSpec one_expert{1, spec.num_classes, spec.input_dim, spec.degree};
    FitOptions warm;
    warm.max_iters = 10;
    for (int c = 0; c < num_experts; ++c) {
        const auto& rows = clusters.members[c];
        MatrixXd x_sub(rows.size(), data.input_dim());
        VectorXi y_sub(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            x_sub.row(static_cast<int>(i)) = data.x().row(rows[i]);
            y_sub[static_cast<int>(i)] = data.y()[rows[i]];
        }
        Dataset sub(std::move(x_sub), std::move(y_sub), data.num_classes());
        auto [fitted, trace] = fit_mm(Theta(one_expert), sub, warm);
        out.expert(c) = fitted.expert(0);
    }
    // Gate intercepts from log cluster proportions relative to the reference
    // expert; slopes start at zero.
    const double log_ref = std::log(clusters.proportions[num_experts - 1]);
    for (int c = 0; c + 1 < num_experts; ++c)
        out.set_gate_coef(c, 0, 0, std::log(clusters.proportions[c]) - log_ref);
    return out;
}

}  // namespace sgmoe
