// File formats: JSON serialization of every artifact, the dataset CSV schema,
// and atomic writes. Double fields survive a write/read round trip exactly.
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sgmoe/diagnostics.hpp"
#include "sgmoe/mixing.hpp"
#include "sgmoe/mm.hpp"
#include "sgmoe/model.hpp"
#include "sgmoe/selection.hpp"

namespace sgmoe {

using json = nlohmann::json;

// File-system failures (exit code 3 at the CLI).
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Content violating a documented schema (exit code 4 at the CLI).
class SchemaError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Shortest decimal string that parses back to the same double.
std::string format_double(double value);

void write_text_atomic(const std::filesystem::path& path, const std::string& content);
void save_json(const std::filesystem::path& path, const json& j);
json load_json(const std::filesystem::path& path);

json theta_to_json(const Theta& theta);
Theta theta_from_json(const json& j);

json trace_to_json(const FitTrace& trace);
FitTrace trace_from_json(const json& j);

json measure_to_json(const MixingMeasure& g);
MixingMeasure measure_from_json(const json& j);

json chain_to_json(const MergeChain& chain);
MergeChain chain_from_json(const json& j);

json selection_to_json(const SelectionReport& report);
SelectionReport selection_from_json(const json& j);

json rate_result_to_json(const RateExperimentResult& result);

// Rate-experiment config; `truth` may be inline Theta JSON or a `truth_path`
// resolved relative to the config file.
RateExperimentConfig rate_config_from_json(const json& j, const std::filesystem::path& base_dir);

// Dataset CSV with header x1,...,xP,y. Labels are written as 1..M. On read,
// a label column that is not integers in 1..M is treated as categorical and
// mapped to classes in sorted order; the mapping is reported back.
struct CsvReadResult {
    Dataset data;
    std::vector<std::string> label_names;  // class m -> original token; empty in integer mode
};
CsvReadResult read_dataset_csv(const std::filesystem::path& path,
                               std::optional<int> num_classes = std::nullopt);
void write_dataset_csv(const std::filesystem::path& path, const Dataset& data);

void write_dendrogram_csv(const std::filesystem::path& path, const MergeChain& chain);
void write_selection_csv(const std::filesystem::path& path, const SelectionReport& report);
void write_rates_csv(const std::filesystem::path& path, const RateExperimentResult& result);

}  // namespace sgmoe
