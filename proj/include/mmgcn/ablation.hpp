#pragma once

#include "mmgcn/evaluation.hpp"
#include "mmgcn/model.hpp"

namespace mmgcn {

// One sweep over a single config axis: modality subsets, GCN depth, speaker
// embedding on/off, or the fusion variant. Every cell shares the corpus, the
// train/test split and the seed list, so per-seed scores pair up for the
// t-test against the reference cell.
struct AblationSpec {
  std::string axis;                 // modality | layers | speaker | fusion
  std::vector<std::string> values;  // empty -> axis default
  std::vector<uint64_t> seeds;      // empty -> {1, 2, 3, 4, 5}
  std::string reference;            // empty -> axis default
  double split_ratio = 0.8;
  uint64_t split_seed = 17;
  int jobs = 1;
};

struct AblationCell {
  std::string value;
  std::vector<double> per_seed_f1;
  double mean_f1 = 0.0;
  TTest vs_reference;
  bool is_reference = false;
  std::string error;  // non-empty when training failed for this cell
};

struct AblationReport {
  std::string axis;
  std::vector<uint64_t> seeds;
  std::string reference;
  double split_ratio = 0.0;
  uint64_t split_seed = 0;
  std::vector<AblationCell> cells;

  nlohmann::json to_json() const;
  std::string table() const;  // human-readable summary
};

std::vector<std::string> default_axis_values(const std::string& axis);
std::string default_axis_reference(const std::string& axis);

// Applies one axis value to a base config (e.g. axis "layers", value "8").
RunConfig apply_axis_value(RunConfig base, const std::string& axis, const std::string& value);

AblationReport run_ablation(const Corpus& corpus, const RunConfig& base, const AblationSpec& spec);

}  // namespace mmgcn
