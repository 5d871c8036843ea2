// Softmax-gated multinomial-logistic mixture-of-experts: model definition,
// identifiable parameterization, probability evaluation, and sampling.
#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

namespace sgmoe {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using Eigen::VectorXi;

// Problem dimensions. K experts over M classes, covariates in R^P lifted by
// per-coordinate powers up to degree D (one shared degree for gate and experts).
struct ModelSpec {
    int num_experts = 1;   // K >= 1
    int num_classes = 2;   // M >= 2
    int input_dim = 1;     // P >= 1
    int degree = 1;        // D >= 1

    int lifted_dim() const { return input_dim * (degree + 1); }  // P(D+1)
    int slope_dim() const { return input_dim * degree; }         // P*D

    void validate() const;
    bool operator==(const ModelSpec&) const = default;
};

// Identifiable parameter set. The gate of expert K and the class-M logits of
// every expert are fixed at zero and never stored:
//   gate()    is (K-1) x P(D+1), row k holds the score coefficients of gate k,
//   expert(k) is (M-1) x P(D+1), row m holds the class-(m+1) logit coefficients.
// Coefficient vectors follow the lifted-feature layout: coordinate-major,
// degree within, i.e. index (p, d) -> p*(D+1) + d.
class Theta {
public:
    Theta() = default;
    explicit Theta(const ModelSpec& spec);  // all coefficients zero
    Theta(const ModelSpec& spec, MatrixXd gate, std::vector<MatrixXd> experts);

    const ModelSpec& spec() const { return spec_; }
    const MatrixXd& gate() const { return gate_; }
    MatrixXd& gate() { return gate_; }
    const MatrixXd& expert(int k) const { return experts_.at(k); }
    MatrixXd& expert(int k) { return experts_.at(k); }
    const std::vector<MatrixXd>& experts() const { return experts_; }

    // Tensor-style access, 0-based k/m/p, degree d in 0..D.
    double gate_coef(int k, int d, int p) const;
    void set_gate_coef(int k, int d, int p, double value);
    double expert_coef(int m, int k, int d, int p) const;
    void set_expert_coef(int m, int k, int d, int p, double value);

    VectorXd gate_scores(const VectorXd& xhat) const;           // length K-1
    VectorXd expert_scores(int k, const VectorXd& xhat) const;  // length M-1

    // All free coefficients as one vector: gate rows first, then expert
    // matrices in expert order, each row-major (class-major, lifted inner).
    VectorXd flatten() const;
    static Theta from_flat(const ModelSpec& spec, const VectorXd& coeffs);
    int num_free_params() const;

    bool all_finite() const;
    void validate() const;

private:
    ModelSpec spec_;
    MatrixXd gate_;
    std::vector<MatrixXd> experts_;
};

// N covariate rows plus labels. Labels are 1..M at the API/file boundary and
// 0..M-1 internally; this class stores the internal form.
class Dataset {
public:
    Dataset(MatrixXd x, VectorXi y, int num_classes);

    int size() const { return static_cast<int>(x_.rows()); }
    int input_dim() const { return static_cast<int>(x_.cols()); }
    int num_classes() const { return num_classes_; }
    const MatrixXd& x() const { return x_; }
    const VectorXi& y() const { return y_; }  // 0-based

    // Lifted feature cache, built on first use for a given degree. Not safe to
    // build concurrently; call once before sharing the dataset across threads.
    const MatrixXd& lifted(int degree) const;

private:
    MatrixXd x_;
    VectorXi y_;
    int num_classes_ = 0;
    mutable MatrixXd lifted_;
    mutable int lifted_degree_ = -1;
};

// --- numerically safe softmax primitives (all max-shifted) ---

// log(1 + sum_j exp(z_j)); z may be empty.
double log1p_sum_exp(const VectorXd& z);
// Softmax over the scores [z_1..z_q, 0]; returns length q+1, reference last.
VectorXd baseline_softmax(const VectorXd& z);
VectorXd baseline_log_softmax(const VectorXd& z);

// --- model operations ---

// [x_1^0..x_1^D, ..., x_P^0..x_P^D]; the d=0 entry of every coordinate is 1.
VectorXd lift_features(const VectorXd& x_row, int degree);
// Row-wise lift of an N x P matrix into N x P(D+1).
MatrixXd lift_matrix(const MatrixXd& x, int degree);

VectorXd gate_probs(const Theta& theta, const VectorXd& x_row);            // length K
VectorXd expert_probs(const Theta& theta, const VectorXd& x_row, int k);   // length M
VectorXd predict_proba(const Theta& theta, const VectorXd& x_row);         // length M

double log_likelihood(const Theta& theta, const Dataset& data);

// Per-sample log g_k + log e_k(y_n) table and its row-wise log-sum-exp.
// Shared kernel behind log_likelihood and the E-step.
struct LogJointTable {
    MatrixXd log_joint;  // N x K
    VectorXd loglik_n;   // N
};
LogJointTable log_joint_table(const Theta& theta, const MatrixXd& xhat, const VectorXi& y);

// 1 iff z == l, labels 1-based in 1..M. The paper-style polynomial encoding is
// analytically the same Kronecker delta; equality is the implementation.
int class_indicator(int z, int l, int num_classes);

// Per-row covariate sampler; fills a length-P vector.
using CovariateSampler = std::function<void(std::mt19937_64&, Eigen::Ref<VectorXd>)>;
CovariateSampler standard_normal_sampler();

// Draw N rows from the covariate sampler and labels from predict_proba.
// Deterministic for a fixed seed.
Dataset sample_dataset(const Theta& theta, int n, const CovariateSampler& x_sampler,
                       std::uint64_t seed);
Dataset sample_dataset(const Theta& theta, int n, std::uint64_t seed);

}  // namespace sgmoe
