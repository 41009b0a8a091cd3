#include "mmgcn/ablation.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <thread>

namespace mmgcn {

using nlohmann::json;

std::vector<std::string> default_axis_values(const std::string& axis) {
  if (axis == "modality") return {"a", "v", "t", "at", "vt", "avt"};
  if (axis == "layers") return {"1", "2", "4", "8", "16", "32"};
  if (axis == "speaker") return {"with", "without"};
  if (axis == "fusion") return {"mmgcn", "early", "late", "gated"};
  throw ConfigError("unknown ablation axis \"" + axis +
                    "\" (expected modality, layers, speaker or fusion)");
}

std::string default_axis_reference(const std::string& axis) {
  if (axis == "modality") return "avt";
  if (axis == "layers") return "4";
  if (axis == "speaker") return "with";
  if (axis == "fusion") return "mmgcn";
  throw ConfigError("unknown ablation axis \"" + axis + "\"");
}

RunConfig apply_axis_value(RunConfig base, const std::string& axis, const std::string& value) {
  if (axis == "modality") {
    base.modalities = ModalityMask::parse(value);
  } else if (axis == "layers") {
    try {
      base.layers = std::stoi(value);
    } catch (const std::exception&) {
      throw ConfigError("layers axis value \"" + value + "\" is not an integer");
    }
  } else if (axis == "speaker") {
    if (value == "with") base.speaker_embedding = true;
    else if (value == "without") base.speaker_embedding = false;
    else throw ConfigError("speaker axis values are \"with\" and \"without\", got \"" + value + "\"");
  } else if (axis == "fusion") {
    base.fusion = fusion_from_string(value);
  } else {
    throw ConfigError("unknown ablation axis \"" + axis + "\"");
  }
  return base;
}

namespace {

double cell_seed_f1(const Corpus& train, const Corpus& test, RunConfig cfg, uint64_t seed) {
  cfg.seed = seed;
  TrainResult result = train_model(train, cfg);
  ConfusionMatrix cm(test.meta.num_classes());
  const auto preds = predict_labels(*result.net, test);
  for (size_t di = 0; di < preds.size(); ++di) {
    const Dialogue& d = test.dialogues[di];
    for (int i = 0; i < d.length(); ++i) {
      cm.add(d.utterances[static_cast<size_t>(i)].label, preds[di][static_cast<size_t>(i)]);
    }
  }
  return weighted_f1(cm);
}

}  // namespace

AblationReport run_ablation(const Corpus& corpus, const RunConfig& base,
                            const AblationSpec& spec) {
  AblationReport report;
  report.axis = spec.axis;
  report.seeds = spec.seeds.empty() ? std::vector<uint64_t>{1, 2, 3, 4, 5} : spec.seeds;
  report.reference = spec.reference.empty() ? default_axis_reference(spec.axis) : spec.reference;
  report.split_ratio = spec.split_ratio;
  report.split_seed = spec.split_seed;

  const std::vector<std::string> values =
      spec.values.empty() ? default_axis_values(spec.axis) : spec.values;
  if (std::find(values.begin(), values.end(), report.reference) == values.end()) {
    throw ConfigError("reference cell \"" + report.reference + "\" is not among the axis values");
  }
  for (const auto& value : values) {
    apply_axis_value(base, spec.axis, value).validate();  // fail fast on bad cells
  }

  // all cells share one corpus split
  auto [train, test] = split_corpus(corpus, spec.split_ratio, spec.split_seed);

  struct Job {
    size_t cell;
    size_t seed_idx;
  };
  std::vector<Job> jobs;
  report.cells.resize(values.size());
  for (size_t c = 0; c < values.size(); ++c) {
    report.cells[c].value = values[c];
    report.cells[c].is_reference = values[c] == report.reference;
    report.cells[c].per_seed_f1.assign(report.seeds.size(), 0.0);
    for (size_t s = 0; s < report.seeds.size(); ++s) jobs.push_back(Job{c, s});
  }

  const int workers = std::max(1, std::min<int>(spec.jobs, static_cast<int>(jobs.size())));
  std::atomic<size_t> next{0};
  std::vector<std::string> job_errors(jobs.size());  // one slot per job, no sharing
  auto worker = [&]() {
    for (;;) {
      const size_t j = next.fetch_add(1);
      if (j >= jobs.size()) return;
      const Job job = jobs[j];
      try {
        RunConfig cfg = apply_axis_value(base, spec.axis, values[job.cell]);
        report.cells[job.cell].per_seed_f1[job.seed_idx] =
            cell_seed_f1(train, test, cfg, report.seeds[job.seed_idx]);
      } catch (const std::exception& e) {
        job_errors[j] = e.what();
      }
    }
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  size_t ref_idx = 0;
  for (size_t c = 0; c < values.size(); ++c) {
    if (report.cells[c].is_reference) ref_idx = c;
  }
  for (size_t j = 0; j < jobs.size(); ++j) {
    if (!job_errors[j].empty() && report.cells[jobs[j].cell].error.empty()) {
      report.cells[jobs[j].cell].error = job_errors[j];
    }
  }
  for (auto& cell : report.cells) {
    if (!cell.error.empty()) continue;
    double sum = 0.0;
    for (double f : cell.per_seed_f1) sum += f;
    cell.mean_f1 = sum / static_cast<double>(cell.per_seed_f1.size());
  }
  const AblationCell& ref = report.cells[ref_idx];
  for (auto& cell : report.cells) {
    if (cell.is_reference || !cell.error.empty() || !ref.error.empty()) continue;
    if (report.seeds.size() >= 2) {
      cell.vs_reference = paired_t_test(cell.per_seed_f1, ref.per_seed_f1);
    }
  }
  return report;
}

json AblationReport::to_json() const {
  json cells_json = json::array();
  for (const auto& c : cells) {
    json jc = {{"value", c.value},
               {"is_reference", c.is_reference},
               {"per_seed_f1", c.per_seed_f1},
               {"mean_f1", c.mean_f1}};
    if (!c.error.empty()) jc["error"] = c.error;
    if (!c.is_reference && c.error.empty()) {
      jc["t_vs_reference"] = c.vs_reference.t;
      jc["p_vs_reference"] = c.vs_reference.p;
      jc["degenerate_t"] = c.vs_reference.degenerate;
    }
    cells_json.push_back(std::move(jc));
  }
  return json{{"axis", axis},
              {"seeds", seeds},
              {"reference", reference},
              {"split_ratio", split_ratio},
              {"split_seed", split_seed},
              {"cells", cells_json}};
}

std::string AblationReport::table() const {
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-10s %-10s %-12s %-12s %s\n", "axis:", axis.c_str(),
                "reference:", reference.c_str(), "");
  out += buf;
  std::snprintf(buf, sizeof(buf), "%-10s %10s %12s %12s\n", "value", "mean_f1", "t_vs_ref",
                "p_vs_ref");
  out += buf;
  for (const auto& c : cells) {
    if (!c.error.empty()) {
      std::snprintf(buf, sizeof(buf), "%-10s %10s   error: %s\n", c.value.c_str(), "-",
                    c.error.c_str());
    } else if (c.is_reference) {
      std::snprintf(buf, sizeof(buf), "%-10s %10.4f %12s %12s\n", c.value.c_str(), c.mean_f1,
                    "(ref)", "(ref)");
    } else {
      std::snprintf(buf, sizeof(buf), "%-10s %10.4f %12.4f %12.4f\n", c.value.c_str(), c.mean_f1,
                    c.vs_reference.t, c.vs_reference.p);
    }
    out += buf;
  }
  return out;
}

}  // namespace mmgcn
