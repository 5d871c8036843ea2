#include "sgmoe/mixing.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace sgmoe {

double MixingMeasure::total_weight() const {
    double total = 0.0;
    for (const Atom& a : atoms) total += a.pi;
    return total;
}

void MixingMeasure::validate() const {
    if (num_classes < 2 || input_dim < 1 || degree < 1)
        throw std::invalid_argument("MixingMeasure: invalid (M, P, D)");
    if (atoms.empty()) throw std::invalid_argument("MixingMeasure: no atoms");
    for (const Atom& a : atoms) {
        if (!(a.pi > 0.0)) throw std::invalid_argument("MixingMeasure: nonpositive weight");
        if (a.gate_slope.size() != slope_dim() ||
            a.expert_intercepts.size() != num_classes - 1 ||
            a.expert_slopes.rows() != num_classes - 1 || a.expert_slopes.cols() != slope_dim())
            throw std::invalid_argument("MixingMeasure: atom shape mismatch");
    }
}

int MergeChain::level_of(int kappa) const {
    for (std::size_t i = 0; i < levels.size(); ++i)
        if (static_cast<int>(levels[i].atoms.size()) == kappa) return static_cast<int>(i);
    throw std::invalid_argument("MergeChain: no level with " + std::to_string(kappa) + " atoms");
}

VectorXd lift_slope_features(const VectorXd& x_row, int degree) {
    if (!x_row.allFinite()) throw std::invalid_argument("lift_slope_features: non-finite input");
    const int p_dim = static_cast<int>(x_row.size());
    VectorXd out(p_dim * degree);
    VectorXd pow_val = x_row;
    for (int d = 1; d <= degree; ++d) {
        out.segment((d - 1) * p_dim, p_dim) = pow_val;
        pow_val = pow_val.cwiseProduct(x_row);
    }
    return out;
}

MixingMeasure from_theta(const Theta& theta) {
    theta.validate();
    const ModelSpec& spec = theta.spec();
    const int K = spec.num_experts;
    const int M = spec.num_classes;
    const int P = spec.input_dim;
    const int D = spec.degree;

    MixingMeasure g;
    g.num_classes = M;
    g.input_dim = P;
    g.degree = D;
    g.atoms.resize(K);

    // Raw gate intercepts; the implicit reference expert contributes zero.
    VectorXd raw_intercepts = VectorXd::Zero(K);
    for (int k = 0; k + 1 < K; ++k) {
        double b = 0.0;
        for (int p = 0; p < P; ++p) b += theta.gate_coef(k, 0, p);
        raw_intercepts[k] = b;
    }
    // Canonical normalization: pi = softmax(raw intercepts), computed
    // max-shifted so large intercepts cannot overflow.
    const double shift = raw_intercepts.maxCoeff();
    const double lse = shift + std::log((raw_intercepts.array() - shift).exp().sum());

    for (int k = 0; k < K; ++k) {
        Atom& atom = g.atoms[k];
        atom.gate_intercept = raw_intercepts[k] - lse;
        atom.pi = std::exp(atom.gate_intercept);
        atom.gate_slope = VectorXd::Zero(P * D);
        if (k + 1 < K)
            for (int d = 1; d <= D; ++d)
                for (int p = 0; p < P; ++p)
                    atom.gate_slope[(d - 1) * P + p] = theta.gate_coef(k, d, p);
        atom.expert_intercepts = VectorXd::Zero(M - 1);
        atom.expert_slopes = MatrixXd::Zero(M - 1, P * D);
        for (int m = 0; m + 1 < M; ++m) {
            double b = 0.0;
            for (int p = 0; p < P; ++p) b += theta.expert_coef(m, k, 0, p);
            atom.expert_intercepts[m] = b;
            for (int d = 1; d <= D; ++d)
                for (int p = 0; p < P; ++p)
                    atom.expert_slopes(m, (d - 1) * P + p) = theta.expert_coef(m, k, d, p);
        }
    }
    return g;
}

VectorXd density_of_measure(const MixingMeasure& g, const VectorXd& x_row) {
    g.validate();
    const int count = static_cast<int>(g.atoms.size());
    const VectorXd phi = lift_slope_features(x_row, g.degree);

    VectorXd gate_scores(count);
    for (int i = 0; i < count; ++i)
        gate_scores[i] = std::log(g.atoms[i].pi) + g.atoms[i].gate_slope.dot(phi);
    const double shift = gate_scores.maxCoeff();
    VectorXd gates = (gate_scores.array() - shift).exp();
    gates /= gates.sum();

    VectorXd out = VectorXd::Zero(g.num_classes);
    for (int i = 0; i < count; ++i) {
        const VectorXd scores =
            g.atoms[i].expert_intercepts + g.atoms[i].expert_slopes * phi;
        out += gates[i] * baseline_softmax(scores);
    }
    return out;
}

double dissimilarity(const Atom& a, const Atom& b) {
    double gap = (a.gate_slope - b.gate_slope).squaredNorm();
    gap += (a.expert_slopes - b.expert_slopes).squaredNorm();
    gap += (a.expert_intercepts - b.expert_intercepts).squaredNorm();
    return (a.pi * b.pi) / (a.pi + b.pi) * gap;
}

Atom merge_pair(const Atom& a, const Atom& b) {
    Atom merged;
    merged.pi = a.pi + b.pi;
    merged.gate_intercept = std::log(merged.pi);
    const double wa = a.pi / merged.pi;
    const double wb = b.pi / merged.pi;
    merged.gate_slope = wa * a.gate_slope + wb * b.gate_slope;
    merged.expert_intercepts = wa * a.expert_intercepts + wb * b.expert_intercepts;
    merged.expert_slopes = wa * a.expert_slopes + wb * b.expert_slopes;
    return merged;
}

double mean_log_likelihood(const MixingMeasure& g, const Dataset& data) {
    if (data.input_dim() != g.input_dim || data.num_classes() != g.num_classes)
        throw std::invalid_argument("mean_log_likelihood: dataset/measure mismatch");
    if (data.size() == 0) return 0.0;
    double total = 0.0;
    for (int n = 0; n < data.size(); ++n) {
        const VectorXd probs = density_of_measure(g, data.x().row(n).transpose());
        total += std::log(probs[data.y()[n]]);
    }
    return total / data.size();
}

MergeChain build_chain(const MixingMeasure& g, const Dataset* data,
                       bool include_singleton_level) {
    g.validate();
    if (g.atoms.size() < 2)
        throw std::invalid_argument("build_chain: need at least 2 atoms");

    MergeChain chain;
    MixingMeasure current = g;
    const int floor_atoms = include_singleton_level ? 1 : 2;
    while (true) {
        chain.levels.push_back(current);
        if (data) chain.logliks.push_back(mean_log_likelihood(current, *data));

        const int count = static_cast<int>(current.atoms.size());
        if (count == 1) break;
        double best = std::numeric_limits<double>::infinity();
        std::pair<int, int> best_pair{0, 1};
        for (int i = 0; i < count; ++i)
            for (int j = i + 1; j < count; ++j) {
                const double d = dissimilarity(current.atoms[i], current.atoms[j]);
                if (d < best) {
                    best = d;
                    best_pair = {i, j};
                }
            }
        chain.heights.push_back(best);
        chain.merged_pairs.push_back(best_pair);
        if (count == floor_atoms) break;

        MixingMeasure next = current;
        next.atoms[best_pair.first] =
            merge_pair(current.atoms[best_pair.first], current.atoms[best_pair.second]);
        next.atoms.erase(next.atoms.begin() + best_pair.second);
        current = std::move(next);
    }
    return chain;
}

}  // namespace sgmoe
