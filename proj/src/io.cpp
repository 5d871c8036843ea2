#include "sgmoe/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <system_error>

namespace sgmoe {

namespace {

json require(const json& j, const std::string& key, const std::string& context) {
    if (!j.contains(key)) throw SchemaError(context + ": missing field '" + key + "'");
    return j.at(key);
}

double number_or_throw(const json& j, const std::string& context) {
    if (!j.is_number()) throw SchemaError(context + ": expected a number");
    return j.get<double>();
}

}  // namespace

std::string format_double(double value) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    if (ec != std::errc()) throw IoError("failed to format a double");
    return std::string(buf, ptr);
}

void write_text_atomic(const std::filesystem::path& path, const std::string& content) {
    namespace fs = std::filesystem;
    std::error_code ec;
    if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open for writing: " + tmp.string());
        out << content;
        if (!out) throw IoError("write failed: " + tmp.string());
    }
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("rename failed for " + path.string() + ": " + ec.message());
}

void save_json(const std::filesystem::path& path, const json& j) {
    write_text_atomic(path, j.dump(2) + "\n");
}

json load_json(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw SchemaError("invalid JSON in " + path.string() + ": " + e.what());
    }
}

json theta_to_json(const Theta& theta) {
    const ModelSpec& spec = theta.spec();
    json gate = json::array();
    for (int k = 0; k + 1 < spec.num_experts; ++k) {
        json per_degree = json::array();
        for (int d = 0; d <= spec.degree; ++d) {
            json per_coord = json::array();
            for (int p = 0; p < spec.input_dim; ++p) per_coord.push_back(theta.gate_coef(k, d, p));
            per_degree.push_back(per_coord);
        }
        gate.push_back(per_degree);
    }
    json experts = json::array();
    for (int m = 0; m + 1 < spec.num_classes; ++m) {
        json per_expert = json::array();
        for (int k = 0; k < spec.num_experts; ++k) {
            json per_degree = json::array();
            for (int d = 0; d <= spec.degree; ++d) {
                json per_coord = json::array();
                for (int p = 0; p < spec.input_dim; ++p)
                    per_coord.push_back(theta.expert_coef(m, k, d, p));
                per_degree.push_back(per_coord);
            }
            per_expert.push_back(per_degree);
        }
        experts.push_back(per_expert);
    }
    return json{{"spec",
                 {{"K", spec.num_experts},
                  {"M", spec.num_classes},
                  {"P", spec.input_dim},
                  {"D", spec.degree}}},
                {"gate", gate},
                {"experts", experts}};
}

Theta theta_from_json(const json& j) {
    const json spec_j = require(j, "spec", "theta");
    ModelSpec spec;
    spec.num_experts = require(spec_j, "K", "theta.spec").get<int>();
    spec.num_classes = require(spec_j, "M", "theta.spec").get<int>();
    spec.input_dim = require(spec_j, "P", "theta.spec").get<int>();
    spec.degree = require(spec_j, "D", "theta.spec").get<int>();
    try {
        spec.validate();
    } catch (const std::invalid_argument& e) {
        throw SchemaError(std::string("theta.spec: ") + e.what());
    }

    Theta theta(spec);
    const json gate = require(j, "gate", "theta");
    if (static_cast<int>(gate.size()) != spec.num_experts - 1)
        throw SchemaError("theta.gate: expected K-1 entries");
    for (int k = 0; k + 1 < spec.num_experts; ++k) {
        if (static_cast<int>(gate.at(k).size()) != spec.degree + 1)
            throw SchemaError("theta.gate: expected D+1 degree entries");
        for (int d = 0; d <= spec.degree; ++d) {
            if (static_cast<int>(gate.at(k).at(d).size()) != spec.input_dim)
                throw SchemaError("theta.gate: expected P coordinate entries");
            for (int p = 0; p < spec.input_dim; ++p)
                theta.set_gate_coef(k, d, p, number_or_throw(gate.at(k).at(d).at(p), "theta.gate"));
        }
    }
    const json experts = require(j, "experts", "theta");
    if (static_cast<int>(experts.size()) != spec.num_classes - 1)
        throw SchemaError("theta.experts: expected M-1 entries");
    for (int m = 0; m + 1 < spec.num_classes; ++m) {
        if (static_cast<int>(experts.at(m).size()) != spec.num_experts)
            throw SchemaError("theta.experts: expected K entries");
        for (int k = 0; k < spec.num_experts; ++k) {
            if (static_cast<int>(experts.at(m).at(k).size()) != spec.degree + 1)
                throw SchemaError("theta.experts: expected D+1 degree entries");
            for (int d = 0; d <= spec.degree; ++d) {
                if (static_cast<int>(experts.at(m).at(k).at(d).size()) != spec.input_dim)
                    throw SchemaError("theta.experts: expected P coordinate entries");
                for (int p = 0; p < spec.input_dim; ++p)
                    theta.set_expert_coef(
                        m, k, d, p, number_or_throw(experts.at(m).at(k).at(d).at(p), "theta.experts"));
            }
        }
    }
    try {
        theta.validate();
    } catch (const std::invalid_argument& e) {
        throw SchemaError(std::string("theta: ") + e.what());
    }
    return theta;
}

json trace_to_json(const FitTrace& trace) {
    json events = json::array();
    for (const RidgeEvent& e : trace.ridge_events)
        events.push_back({{"iter", e.iter}, {"block", e.block}, {"lambda", e.lambda}});
    json j{{"loglik", trace.loglik},
           {"iters", trace.iters},
           {"converged", trace.converged},
           {"ridge_events", events}};
    if (!trace.theta_path.empty()) {
        json path = json::array();
        for (const Theta& t : trace.theta_path) path.push_back(theta_to_json(t));
        j["theta_path"] = path;
    }
    return j;
}

FitTrace trace_from_json(const json& j) {
    FitTrace trace;
    trace.loglik = require(j, "loglik", "trace").get<std::vector<double>>();
    trace.iters = require(j, "iters", "trace").get<int>();
    trace.converged = require(j, "converged", "trace").get<bool>();
    for (const json& e : require(j, "ridge_events", "trace"))
        trace.ridge_events.push_back({require(e, "iter", "ridge_event").get<int>(),
                                      require(e, "block", "ridge_event").get<std::string>(),
                                      require(e, "lambda", "ridge_event").get<double>()});
    if (j.contains("theta_path"))
        for (const json& t : j.at("theta_path")) trace.theta_path.push_back(theta_from_json(t));
    return trace;
}

json measure_to_json(const MixingMeasure& g) {
    json atoms = json::array();
    for (const Atom& atom : g.atoms) {
        json slopes = json::array();
        for (int m = 0; m < atom.expert_slopes.rows(); ++m) {
            json row = json::array();
            for (int c = 0; c < atom.expert_slopes.cols(); ++c)
                row.push_back(atom.expert_slopes(m, c));
            slopes.push_back(row);
        }
        atoms.push_back({{"pi", atom.pi},
                         {"gate_slope", std::vector<double>(
                                            atom.gate_slope.data(),
                                            atom.gate_slope.data() + atom.gate_slope.size())},
                         {"expert_intercepts",
                          std::vector<double>(atom.expert_intercepts.data(),
                                              atom.expert_intercepts.data() +
                                                  atom.expert_intercepts.size())},
                         {"expert_slopes", slopes}});
    }
    return json{{"spec", {{"M", g.num_classes}, {"P", g.input_dim}, {"D", g.degree}}},
                {"atoms", atoms}};
}

MixingMeasure measure_from_json(const json& j) {
    const json spec = require(j, "spec", "measure");
    MixingMeasure g;
    g.num_classes = require(spec, "M", "measure.spec").get<int>();
    g.input_dim = require(spec, "P", "measure.spec").get<int>();
    g.degree = require(spec, "D", "measure.spec").get<int>();
    const json atoms = require(j, "atoms", "measure");
    for (const json& a : atoms) {
        Atom atom;
        atom.pi = number_or_throw(require(a, "pi", "atom"), "atom.pi");
        const auto slope = require(a, "gate_slope", "atom").get<std::vector<double>>();
        atom.gate_slope = Eigen::Map<const VectorXd>(slope.data(), slope.size());
        const auto intercepts = require(a, "expert_intercepts", "atom").get<std::vector<double>>();
        atom.expert_intercepts =
            Eigen::Map<const VectorXd>(intercepts.data(), intercepts.size());
        const json slopes = require(a, "expert_slopes", "atom");
        atom.expert_slopes.resize(slopes.size(), g.slope_dim());
        for (std::size_t m = 0; m < slopes.size(); ++m) {
            const auto row = slopes.at(m).get<std::vector<double>>();
            if (static_cast<int>(row.size()) != g.slope_dim())
                throw SchemaError("atom.expert_slopes: wrong slope length");
            atom.expert_slopes.row(m) = Eigen::Map<const VectorXd>(row.data(), row.size());
        }
        atom.gate_intercept = std::log(atom.pi);
        g.atoms.push_back(std::move(atom));
    }
    try {
        g.validate();
    } catch (const std::invalid_argument& e) {
        throw SchemaError(std::string("measure: ") + e.what());
    }
    return g;
}

json chain_to_json(const MergeChain& chain) {
    json levels = json::array();
    for (const MixingMeasure& g : chain.levels) levels.push_back(measure_to_json(g));
    json pairs = json::array();
    for (const auto& [i, k] : chain.merged_pairs) pairs.push_back({i, k});
    json j{{"levels", levels}, {"heights", chain.heights}, {"merged_pairs", pairs}};
    if (!chain.logliks.empty()) j["logliks"] = chain.logliks;
    return j;
}

MergeChain chain_from_json(const json& j) {
    MergeChain chain;
    for (const json& g : require(j, "levels", "chain")) chain.levels.push_back(measure_from_json(g));
    chain.heights = require(j, "heights", "chain").get<std::vector<double>>();
    for (const json& p : require(j, "merged_pairs", "chain")) {
        if (p.size() != 2) throw SchemaError("chain.merged_pairs: expected index pairs");
        chain.merged_pairs.push_back({p.at(0).get<int>(), p.at(1).get<int>()});
    }
    if (j.contains("logliks")) chain.logliks = j.at("logliks").get<std::vector<double>>();
    if (chain.levels.empty()) throw SchemaError("chain: no levels");
    if (chain.heights.size() != chain.merged_pairs.size())
        throw SchemaError("chain: heights and merged_pairs disagree");
    return chain;
}

json selection_to_json(const SelectionReport& report) {
    json details = json::array();
    for (std::size_t i = 0; i < report.details.size(); ++i) {
        const auto& d = report.details[i];
        json entry{{"k", report.candidate_k[i]},
                   {"loglik", d.loglik},
                   {"param_count", d.param_count}};
        entry["height"] = std::isnan(d.height) ? json(nullptr) : json(d.height);
        details.push_back(entry);
    }
    return json{{"criterion", report.criterion}, {"candidate_k", report.candidate_k},
                {"scores", report.scores},       {"chosen_k", report.chosen_k},
                {"omega_n", report.omega_n},     {"details", details}};
}

SelectionReport selection_from_json(const json& j) {
    SelectionReport report;
    report.criterion = require(j, "criterion", "selection").get<std::string>();
    report.candidate_k = require(j, "candidate_k", "selection").get<std::vector<int>>();
    report.scores = require(j, "scores", "selection").get<std::vector<double>>();
    report.chosen_k = require(j, "chosen_k", "selection").get<int>();
    report.omega_n = require(j, "omega_n", "selection").get<double>();
    for (const json& d : require(j, "details", "selection")) {
        SelectionReport::Detail detail;
        detail.loglik = require(d, "loglik", "detail").get<double>();
        detail.param_count = require(d, "param_count", "detail").get<int>();
        const json h = require(d, "height", "detail");
        detail.height = h.is_null() ? std::numeric_limits<double>::quiet_NaN() : h.get<double>();
        report.details.push_back(detail);
    }
    if (report.scores.size() != report.candidate_k.size() ||
        report.details.size() != report.candidate_k.size())
        throw SchemaError("selection: field lengths disagree");
    return report;
}

json rate_result_to_json(const RateExperimentResult& result) {
    auto fit_json = [](const RateFit& fit) {
        json points = json::array();
        for (const auto& [n, v] : fit.points) points.push_back({n, v});
        return json{{"slope", fit.slope}, {"intercept", fit.intercept}, {"r2", fit.r2},
                    {"points", points}};
    };
    json components = json::array();
    for (const RateFit& fit : result.component_slopes) components.push_back(fit_json(fit));
    return json{{"d_v", fit_json(result.dv_slope)},
                {"components", components},
                {"overcovered_fraction", result.overcovered_fraction}};
}

RateExperimentConfig rate_config_from_json(const json& j, const std::filesystem::path& base_dir) {
    RateExperimentConfig config;
    if (j.contains("truth"))
        config.truth = theta_from_json(j.at("truth"));
    else if (j.contains("truth_path"))
        config.truth = theta_from_json(load_json(base_dir / j.at("truth_path").get<std::string>()));
    else
        throw SchemaError("rate config: need 'truth' or 'truth_path'");
    config.k_fit = require(j, "k_fit", "rate config").get<int>();
    config.n_grid = require(j, "n_grid", "rate config").get<std::vector<double>>();
    config.num_seeds = require(j, "seeds", "rate config").get<int>();
    if (j.contains("base_seed")) config.base_seed = j.at("base_seed").get<std::uint64_t>();
    if (j.contains("init")) {
        const std::string scheme = j.at("init").get<std::string>();
        if (scheme == "perturbed-truth")
            config.init = InitScheme::PerturbedTruth;
        else if (scheme == "cluster")
            config.init = InitScheme::Cluster;
        else
            throw SchemaError("rate config: unknown init scheme '" + scheme + "'");
    }
    if (j.contains("noise")) config.noise = j.at("noise").get<double>();
    if (j.contains("fit")) {
        const json f = j.at("fit");
        if (f.contains("tol") && !f.at("tol").is_null()) config.fit.tol = f.at("tol").get<double>();
        if (f.contains("max_iters")) config.fit.max_iters = f.at("max_iters").get<int>();
        if (f.contains("ridge")) config.fit.ridge = f.at("ridge").get<double>();
    }
    if (j.contains("threads")) config.threads = j.at("threads").get<int>();
    return config;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.push_back("");
    return fields;
}

bool parse_int(const std::string& s, long& out) {
    const char* begin = s.data();
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(begin, end, out);
    return ec == std::errc() && ptr == end;
}

bool parse_double(const std::string& s, double& out) {
    const char* begin = s.data();
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(begin, end, out);
    return ec == std::errc() && ptr == end;
}

}  // namespace

CsvReadResult read_dataset_csv(const std::filesystem::path& path,
                               std::optional<int> num_classes) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path.string());

    std::string line;
    if (!std::getline(in, line)) throw SchemaError(path.string() + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::vector<std::string> header = split_csv_line(line);
    if (header.size() < 2 || header.back() != "y")
        throw SchemaError(path.string() + ": header must be x1,...,xP,y");
    const int p_dim = static_cast<int>(header.size()) - 1;
    for (int p = 0; p < p_dim; ++p)
        if (header[p] != "x" + std::to_string(p + 1))
            throw SchemaError(path.string() + ": covariate columns must be named x1..xP");

    std::vector<std::vector<double>> rows;
    std::vector<std::string> labels;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::vector<std::string> fields = split_csv_line(line);
        if (static_cast<int>(fields.size()) != p_dim + 1)
            throw SchemaError(path.string() + ": line " + std::to_string(line_no) +
                              " has the wrong column count");
        std::vector<double> row(p_dim);
        for (int p = 0; p < p_dim; ++p)
            if (!parse_double(fields[p], row[p]) || !std::isfinite(row[p]))
                throw SchemaError(path.string() + ": line " + std::to_string(line_no) +
                                  ": bad covariate '" + fields[p] + "'");
        rows.push_back(std::move(row));
        labels.push_back(fields[p_dim]);
    }

    // Integer labels covering 1..M are used directly; anything else is
    // categorical with classes assigned in sorted token order.
    bool integer_mode = !labels.empty();
    long max_label = 0;
    for (const std::string& token : labels) {
        long value = 0;
        if (!parse_int(token, value) || value < 1) {
            integer_mode = false;
            break;
        }
        max_label = std::max(max_label, value);
    }

    VectorXi y(static_cast<int>(labels.size()));
    std::vector<std::string> label_names;
    int m_classes = 0;
    if (integer_mode) {
        m_classes = static_cast<int>(max_label);
        if (num_classes) {
            if (*num_classes < m_classes)
                throw SchemaError(path.string() + ": labels exceed the declared class count " +
                                  std::to_string(*num_classes));
            m_classes = *num_classes;
        }
        if (m_classes < 2)
            throw SchemaError(path.string() + ": need at least 2 classes");
        for (std::size_t i = 0; i < labels.size(); ++i) {
            long value = 0;
            parse_int(labels[i], value);
            y[static_cast<int>(i)] = static_cast<int>(value) - 1;
        }
    } else {
        if (labels.empty()) throw SchemaError(path.string() + ": no data rows");
        std::set<std::string> distinct(labels.begin(), labels.end());
        if (num_classes && *num_classes != static_cast<int>(distinct.size()))
            throw SchemaError(path.string() + ": declared class count " +
                              std::to_string(*num_classes) + " does not match the " +
                              std::to_string(distinct.size()) + " distinct labels");
        if (distinct.size() < 2)
            throw SchemaError(path.string() + ": need at least 2 distinct labels");
        std::map<std::string, int> index;
        for (const std::string& token : distinct) {
            index[token] = static_cast<int>(label_names.size());
            label_names.push_back(token);
        }
        m_classes = static_cast<int>(distinct.size());
        for (std::size_t i = 0; i < labels.size(); ++i) y[static_cast<int>(i)] = index[labels[i]];
    }

    MatrixXd x(static_cast<int>(rows.size()), p_dim);
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (int p = 0; p < p_dim; ++p) x(static_cast<int>(i), p) = rows[i][p];
    return {Dataset(std::move(x), std::move(y), m_classes), std::move(label_names)};
}

void write_dataset_csv(const std::filesystem::path& path, const Dataset& data) {
    std::ostringstream out;
    for (int p = 0; p < data.input_dim(); ++p) out << "x" << (p + 1) << ",";
    out << "y\n";
    for (int n = 0; n < data.size(); ++n) {
        for (int p = 0; p < data.input_dim(); ++p) out << format_double(data.x()(n, p)) << ",";
        out << (data.y()[n] + 1) << "\n";
    }
    write_text_atomic(path, out.str());
}

void write_dendrogram_csv(const std::filesystem::path& path, const MergeChain& chain) {
    std::ostringstream out;
    out << "level,merged_i,merged_j,height\n";
    for (std::size_t i = 0; i < chain.heights.size(); ++i)
        out << chain.levels[i].atoms.size() << "," << chain.merged_pairs[i].first << ","
            << chain.merged_pairs[i].second << "," << format_double(chain.heights[i]) << "\n";
    write_text_atomic(path, out.str());
}

void write_selection_csv(const std::filesystem::path& path, const SelectionReport& report) {
    std::ostringstream out;
    out << "k,height,loglik,score\n";
    for (std::size_t i = 0; i < report.candidate_k.size(); ++i) {
        out << report.candidate_k[i] << ",";
        if (std::isnan(report.details[i].height))
            out << "";
        else
            out << format_double(report.details[i].height);
        out << "," << format_double(report.details[i].loglik) << ","
            << format_double(report.scores[i]) << "\n";
    }
    write_text_atomic(path, out.str());
}

void write_rates_csv(const std::filesystem::path& path, const RateExperimentResult& result) {
    std::ostringstream out;
    const int components =
        result.rows.empty() ? 0 : static_cast<int>(result.rows.front().component_err.size());
    out << "n,seed,d_v,d_e,converged";
    for (int c = 0; c < components; ++c) out << ",comp_err_" << (c + 1);
    for (int c = 0; c < components; ++c) out << ",overcovered_" << (c + 1);
    out << "\n";
    for (const RateExperimentRow& row : result.rows) {
        out << row.n << "," << row.seed_index << "," << format_double(row.d_v) << ","
            << format_double(row.d_e) << "," << (row.converged ? 1 : 0);
        for (double e : row.component_err) out << "," << format_double(e);
        for (int o : row.overcovered) out << "," << o;
        out << "\n";
    }
    write_text_atomic(path, out.str());
}

}  // namespace sgmoe
