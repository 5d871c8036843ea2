#include "sgmoe/model.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "sgmoe/rng.hpp"

namespace sgmoe {

void ModelSpec::validate() const {
    if (num_experts < 1) throw std::invalid_argument("ModelSpec: K must be >= 1");
    if (num_classes < 2) throw std::invalid_argument("ModelSpec: M must be >= 2");
    if (input_dim < 1) throw std::invalid_argument("ModelSpec: P must be >= 1");
    if (degree < 1) throw std::invalid_argument("ModelSpec: D must be >= 1");
}

Theta::Theta(const ModelSpec& spec) : spec_(spec) {
    spec.validate();
    gate_ = MatrixXd::Zero(spec.num_experts - 1, spec.lifted_dim());
    experts_.assign(spec.num_experts, MatrixXd::Zero(spec.num_classes - 1, spec.lifted_dim()));
}

Theta::Theta(const ModelSpec& spec, MatrixXd gate, std::vector<MatrixXd> experts)
    : spec_(spec), gate_(std::move(gate)), experts_(std::move(experts)) {
    validate();
}

double Theta::gate_coef(int k, int d, int p) const {
    return gate_(k, p * (spec_.degree + 1) + d);
}

void Theta::set_gate_coef(int k, int d, int p, double value) {
    gate_(k, p * (spec_.degree + 1) + d) = value;
}

double Theta::expert_coef(int m, int k, int d, int p) const {
    return experts_.at(k)(m, p * (spec_.degree + 1) + d);
}

void Theta::set_expert_coef(int m, int k, int d, int p, double value) {
    experts_.at(k)(m, p * (spec_.degree + 1) + d) = value;
}

VectorXd Theta::gate_scores(const VectorXd& xhat) const {
    return gate_ * xhat;
}

VectorXd Theta::expert_scores(int k, const VectorXd& xhat) const {
    return experts_.at(k) * xhat;
}

VectorXd Theta::flatten() const {
    const int gate_len = static_cast<int>(gate_.size());
    int total = gate_len;
    for (const auto& e : experts_) total += static_cast<int>(e.size());
    VectorXd out(total);
    int pos = 0;
    for (int k = 0; k < gate_.rows(); ++k) {
        out.segment(pos, gate_.cols()) = gate_.row(k).transpose();
        pos += static_cast<int>(gate_.cols());
    }
    for (const auto& e : experts_) {
        for (int m = 0; m < e.rows(); ++m) {
            out.segment(pos, e.cols()) = e.row(m).transpose();
            pos += static_cast<int>(e.cols());
        }
    }
    return out;
}

Theta Theta::from_flat(const ModelSpec& spec, const VectorXd& coeffs) {
    Theta theta(spec);
    const int L = spec.lifted_dim();
    if (coeffs.size() != theta.num_free_params())
        throw std::invalid_argument("Theta::from_flat: coefficient length mismatch");
    int pos = 0;
    for (int k = 0; k + 1 < spec.num_experts; ++k) {
        theta.gate_.row(k) = coeffs.segment(pos, L).transpose();
        pos += L;
    }
    for (int k = 0; k < spec.num_experts; ++k)
        for (int m = 0; m + 1 < spec.num_classes; ++m) {
            theta.experts_[k].row(m) = coeffs.segment(pos, L).transpose();
            pos += L;
        }
    return theta;
}

int Theta::num_free_params() const {
    const int L = spec_.lifted_dim();
    return (spec_.num_experts - 1) * L + spec_.num_experts * (spec_.num_classes - 1) * L;
}

bool Theta::all_finite() const {
    if (!gate_.allFinite()) return false;
    for (const auto& e : experts_)
        if (!e.allFinite()) return false;
    return true;
}

void Theta::validate() const {
    spec_.validate();
    const int L = spec_.lifted_dim();
    if (gate_.rows() != spec_.num_experts - 1 || gate_.cols() != L)
        throw std::invalid_argument("Theta: gate tensor has wrong shape");
    if (static_cast<int>(experts_.size()) != spec_.num_experts)
        throw std::invalid_argument("Theta: expert count mismatch");
    for (const auto& e : experts_)
        if (e.rows() != spec_.num_classes - 1 || e.cols() != L)
            throw std::invalid_argument("Theta: expert tensor has wrong shape");
    if (!all_finite()) throw std::invalid_argument("Theta: non-finite coefficient");
}

Dataset::Dataset(MatrixXd x, VectorXi y, int num_classes)
    : x_(std::move(x)), y_(std::move(y)), num_classes_(num_classes) {
    if (num_classes_ < 2) throw std::invalid_argument("Dataset: M must be >= 2");
    if (x_.rows() != y_.size()) throw std::invalid_argument("Dataset: row/label count mismatch");
    if (!x_.allFinite()) throw std::invalid_argument("Dataset: non-finite covariate");
    for (int n = 0; n < y_.size(); ++n)
        if (y_[n] < 0 || y_[n] >= num_classes_) {
            std::ostringstream msg;
            msg << "Dataset: label " << (y_[n] + 1) << " at row " << n << " outside 1.." << num_classes_;
            throw std::invalid_argument(msg.str());
        }
}

const MatrixXd& Dataset::lifted(int degree) const {
    if (lifted_degree_ != degree) {
        lifted_ = lift_matrix(x_, degree);
        lifted_degree_ = degree;
    }
    return lifted_;
}

double log1p_sum_exp(const VectorXd& z) {
    if (z.size() == 0) return 0.0;
    double zmax = std::max(0.0, z.maxCoeff());
    double acc = std::exp(-zmax);  // the implicit zero score
    for (int i = 0; i < z.size(); ++i) acc += std::exp(z[i] - zmax);
    return zmax + std::log(acc);
}

VectorXd baseline_log_softmax(const VectorXd& z) {
    const double lse = log1p_sum_exp(z);
    VectorXd out(z.size() + 1);
    out.head(z.size()) = z.array() - lse;
    out[z.size()] = -lse;
    return out;
}

VectorXd baseline_softmax(const VectorXd& z) {
    return baseline_log_softmax(z).array().exp();
}

VectorXd lift_features(const VectorXd& x_row, int degree) {
    if (!x_row.allFinite()) throw std::invalid_argument("lift_features: non-finite input");
    if (degree < 0) throw std::invalid_argument("lift_features: negative degree");
    const int p_dim = static_cast<int>(x_row.size());
    VectorXd out(p_dim * (degree + 1));
    for (int p = 0; p < p_dim; ++p) {
        double pow_val = 1.0;
        for (int d = 0; d <= degree; ++d) {
            out[p * (degree + 1) + d] = pow_val;
            pow_val *= x_row[p];
        }
    }
    return out;
}

MatrixXd lift_matrix(const MatrixXd& x, int degree) {
    if (!x.allFinite()) throw std::invalid_argument("lift_matrix: non-finite input");
    const int n = static_cast<int>(x.rows());
    const int p_dim = static_cast<int>(x.cols());
    MatrixXd out(n, p_dim * (degree + 1));
    for (int p = 0; p < p_dim; ++p) {
        out.col(p * (degree + 1)).setOnes();
        for (int d = 1; d <= degree; ++d)
            out.col(p * (degree + 1) + d) = out.col(p * (degree + 1) + d - 1).cwiseProduct(x.col(p));
    }
    return out;
}

VectorXd gate_probs(const Theta& theta, const VectorXd& x_row) {
    const VectorXd xhat = lift_features(x_row, theta.spec().degree);
    return baseline_softmax(theta.gate_scores(xhat));
}

VectorXd expert_probs(const Theta& theta, const VectorXd& x_row, int k) {
    if (k < 0 || k >= theta.spec().num_experts)
        throw std::invalid_argument("expert_probs: expert index out of range");
    const VectorXd xhat = lift_features(x_row, theta.spec().degree);
    return baseline_softmax(theta.expert_scores(k, xhat));
}

VectorXd predict_proba(const Theta& theta, const VectorXd& x_row) {
    const ModelSpec& spec = theta.spec();
    const VectorXd xhat = lift_features(x_row, spec.degree);
    const VectorXd g = baseline_softmax(theta.gate_scores(xhat));
    VectorXd out = VectorXd::Zero(spec.num_classes);
    for (int k = 0; k < spec.num_experts; ++k)
        out += g[k] * baseline_softmax(theta.expert_scores(k, xhat));
    return out;
}

LogJointTable log_joint_table(const Theta& theta, const MatrixXd& xhat, const VectorXi& y) {
    const ModelSpec& spec = theta.spec();
    const int n = static_cast<int>(xhat.rows());
    const int K = spec.num_experts;
    const int M = spec.num_classes;

    LogJointTable table;
    table.log_joint.resize(n, K);

    // log gate probabilities, reference expert last.
    MatrixXd gate_scores = xhat * theta.gate().transpose();  // N x (K-1)
    for (int i = 0; i < n; ++i) {
        const double lse = log1p_sum_exp(gate_scores.row(i).transpose());
        for (int k = 0; k + 1 < K; ++k) table.log_joint(i, k) = gate_scores(i, k) - lse;
        table.log_joint(i, K - 1) = -lse;
    }
    // add log expert probability of the observed class.
    for (int k = 0; k < K; ++k) {
        MatrixXd scores = xhat * theta.expert(k).transpose();  // N x (M-1)
        for (int i = 0; i < n; ++i) {
            const double lse = log1p_sum_exp(scores.row(i).transpose());
            const double label_score = (y[i] < M - 1) ? scores(i, y[i]) : 0.0;
            table.log_joint(i, k) += label_score - lse;
        }
    }
    table.loglik_n.resize(n);
    for (int i = 0; i < n; ++i) {
        const double row_max = table.log_joint.row(i).maxCoeff();
        table.loglik_n[i] =
            row_max + std::log((table.log_joint.row(i).array() - row_max).exp().sum());
    }
    return table;
}

double log_likelihood(const Theta& theta, const Dataset& data) {
    const ModelSpec& spec = theta.spec();
    if (data.input_dim() != spec.input_dim || data.num_classes() != spec.num_classes)
        throw std::invalid_argument("log_likelihood: dataset/spec dimension mismatch");
    if (data.size() == 0) return 0.0;
    return log_joint_table(theta, data.lifted(spec.degree), data.y()).loglik_n.sum();
}

int class_indicator(int z, int l, int num_classes) {
    if (z < 1 || z > num_classes || l < 1 || l > num_classes)
        throw std::invalid_argument("class_indicator: label out of range");
    return z == l ? 1 : 0;
}

CovariateSampler standard_normal_sampler() {
    return [](std::mt19937_64& gen, Eigen::Ref<VectorXd> row) {
        for (int p = 0; p < row.size(); ++p) row[p] = standard_normal(gen);
    };
}

Dataset sample_dataset(const Theta& theta, int n, const CovariateSampler& x_sampler,
                       std::uint64_t seed) {
    const ModelSpec& spec = theta.spec();
    theta.validate();
    if (n < 0) throw std::invalid_argument("sample_dataset: negative size");
    std::mt19937_64 gen(seed);
    MatrixXd x(n, spec.input_dim);
    VectorXi y(n);
    VectorXd row(spec.input_dim);
    for (int i = 0; i < n; ++i) {
        x_sampler(gen, row);
        x.row(i) = row.transpose();
        const VectorXd probs = predict_proba(theta, row);
        const double u = uniform01(gen);
        double acc = 0.0;
        int label = spec.num_classes - 1;
        for (int m = 0; m < spec.num_classes; ++m) {
            acc += probs[m];
            if (u < acc) {
                label = m;
                break;
            }
        }
        y[i] = label;
    }
    return Dataset(std::move(x), std::move(y), spec.num_classes);
}

Dataset sample_dataset(const Theta& theta, int n, std::uint64_t seed) {
    return sample_dataset(theta, n, standard_normal_sampler(), seed);
}

}  // namespace sgmoe
