// Command-line front door: corpus synthesis, training, evaluation, ablation
// sweeps and adjacency heatmap export.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "mmgcn/ablation.hpp"
#include "mmgcn/model.hpp"

using namespace mmgcn;
using nlohmann::json;

namespace {

// MMGCN_REPORT_DIR reroutes report/metrics outputs into one directory.
std::string report_path(const std::string& requested) {
  const char* env = std::getenv("MMGCN_REPORT_DIR");
  if (env == nullptr || *env == '\0' || requested.empty()) return requested;
  std::filesystem::path dir(env);
  std::filesystem::create_directories(dir);
  return (dir / std::filesystem::path(requested).filename()).string();
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << content;
  if (!out) throw IoError("write failed: " + path);
}

// Staging area for hyperparameter flags; only flags the user actually set
// override the config file, which overrides the built-in defaults.
struct HyperFlags {
  std::string fusion = "mmgcn";
  std::string modalities = "avt";
  int layers = 4;
  double alpha = 0.1, eta = 0.5, gamma = 0.7;
  int d_h = 100, d_s = 100, d_mlp = 0;
  double dropout = 0.4;
  std::string loss = "ce";
  double focal_gamma = 2.0;
  double lr = 3e-4, l2 = 3e-5;
  bool l2_literal = false;
  bool no_speaker = false;
  int epochs = 100, patience = 0;
  double val_fraction = 0.1, target_acc = 0.0;
  int max_speakers = 0;
  uint64_t seed = 1;
  std::string config_file;
};

void add_hyper_flags(CLI::App* cmd, HyperFlags& h) {
  cmd->add_option("--config", h.config_file, "JSON config file (flags win over file values)");
  cmd->add_option("--fusion", h.fusion, "fusion variant: mmgcn|early|late|gated");
  cmd->add_option("--modalities", h.modalities, "active modalities, subset of avt");
  cmd->add_option("--layers", h.layers, "GCN depth");
  cmd->add_option("--alpha", h.alpha, "initial-residual mixing weight");
  cmd->add_option("--eta", h.eta, "identity-mapping decay hyperparameter");
  cmd->add_option("--gamma", h.gamma, "cross-modal edge weight scale");
  cmd->add_option("--d-h", h.d_h, "encoded feature width per modality");
  cmd->add_option("--d-s", h.d_s, "speaker embedding width");
  cmd->add_option("--d-mlp", h.d_mlp, "classifier hidden width (0 = node width)");
  cmd->add_option("--dropout", h.dropout, "dropout rate");
  cmd->add_option("--loss", h.loss, "training loss: ce|focal");
  cmd->add_option("--focal-gamma", h.focal_gamma, "focal loss focusing parameter");
  cmd->add_option("--lr", h.lr, "Adam learning rate");
  cmd->add_option("--l2", h.l2, "L2 regularization weight");
  cmd->add_flag("--l2-literal-norm", h.l2_literal, "penalize ||theta|| instead of ||theta||^2");
  cmd->add_flag("--no-speaker-embedding", h.no_speaker, "freeze the speaker embedding at zero");
  cmd->add_option("--epochs", h.epochs, "training epochs");
  cmd->add_option("--patience", h.patience, "early-stop patience on selection F1 (0 = off)");
  cmd->add_option("--val-fraction", h.val_fraction,
                  "fraction of training dialogues held out for checkpoint selection");
  cmd->add_option("--target-acc", h.target_acc,
                  "stop once selection accuracy reaches this (0 = off)");
  cmd->add_option("--max-speakers", h.max_speakers, "speaker table size (0 = corpus header)");
  cmd->add_option("--seed", h.seed, "master RNG seed");
}

RunConfig resolve_config(const CLI::App* cmd, const HyperFlags& h) {
  RunConfig cfg;
  if (!h.config_file.empty()) {
    std::ifstream in(h.config_file);
    if (!in) throw IoError("cannot open config file: " + h.config_file);
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw ConfigError(h.config_file + ": malformed JSON: " + std::string(e.what()));
    }
    cfg = RunConfig::from_json(j, cfg);
  }
  auto set = [&](const std::string& flag) { return cmd->count(flag) > 0; };
  if (set("--fusion")) cfg.fusion = fusion_from_string(h.fusion);
  if (set("--modalities")) cfg.modalities = ModalityMask::parse(h.modalities);
  if (set("--layers")) cfg.layers = h.layers;
  if (set("--alpha")) cfg.alpha = h.alpha;
  if (set("--eta")) cfg.eta = h.eta;
  if (set("--gamma")) cfg.gamma = h.gamma;
  if (set("--d-h")) cfg.d_h = h.d_h;
  if (set("--d-s")) cfg.d_s = h.d_s;
  if (set("--d-mlp")) cfg.d_mlp = h.d_mlp;
  if (set("--dropout")) cfg.dropout = h.dropout;
  if (set("--loss")) cfg.loss = loss_from_string(h.loss);
  if (set("--focal-gamma")) cfg.focal_gamma = h.focal_gamma;
  if (set("--lr")) cfg.lr = h.lr;
  if (set("--l2")) cfg.l2 = h.l2;
  if (set("--l2-literal-norm")) cfg.l2_literal_norm = h.l2_literal;
  if (set("--no-speaker-embedding")) cfg.speaker_embedding = !h.no_speaker;
  if (set("--epochs")) cfg.epochs = h.epochs;
  if (set("--patience")) cfg.patience = h.patience;
  if (set("--val-fraction")) cfg.val_fraction = h.val_fraction;
  if (set("--target-acc")) cfg.target_acc = h.target_acc;
  if (set("--max-speakers")) cfg.max_speakers = h.max_speakers;
  if (set("--seed")) cfg.seed = h.seed;
  cfg.validate();
  return cfg;
}

void check_corpus_matches(const Network& net, const Corpus& corpus, const std::string& what) {
  const CorpusMeta& expect = net.meta();
  const CorpusMeta& found = corpus.meta;
  if (!(expect.dims == found.dims)) {
    throw ConfigError(what + ": feature dims mismatch; checkpoint expects (a=" +
                      std::to_string(expect.dims.a) + ", v=" + std::to_string(expect.dims.v) +
                      ", t=" + std::to_string(expect.dims.t) + "), corpus has (a=" +
                      std::to_string(found.dims.a) + ", v=" + std::to_string(found.dims.v) +
                      ", t=" + std::to_string(found.dims.t) + ")");
  }
  if (expect.classes != found.classes) {
    throw ConfigError(what + ": class list mismatch between checkpoint and corpus");
  }
  if (found.max_speakers > expect.max_speakers) {
    throw ConfigError(what + ": corpus allows " + std::to_string(found.max_speakers) +
                      " speakers, checkpoint table holds " +
                      std::to_string(expect.max_speakers));
  }
}

json metrics_json(const Network& net, const Corpus& corpus) {
  ConfusionMatrix cm(corpus.meta.num_classes());
  const auto preds = predict_labels(net, corpus);
  std::vector<int> gold, flat;
  for (size_t di = 0; di < preds.size(); ++di) {
    const Dialogue& d = corpus.dialogues[di];
    for (int i = 0; i < d.length(); ++i) {
      gold.push_back(d.utterances[static_cast<size_t>(i)].label);
      flat.push_back(preds[di][static_cast<size_t>(i)]);
      cm.add(gold.back(), flat.back());
    }
  }
  return json{{"weighted_f1", weighted_f1(cm)},
              {"accuracy", accuracy(gold, flat)},
              {"confusion", cm.rows()},
              {"classes", corpus.meta.classes},
              {"num_utterances", corpus.num_utterances()},
              {"config_fingerprint", net.config().fingerprint()},
              {"config", net.config().to_json()}};
}

int cmd_synth(const std::string& out_path, const SynthSpec& spec) {
  Corpus corpus = synthesize_corpus(spec);
  save_corpus(corpus, out_path);
  std::cout << "wrote " << corpus.num_dialogues() << " dialogues / " << corpus.num_utterances()
            << " utterances to " << out_path << "\n";
  return 0;
}

int cmd_train(const CLI::App* cmd, const HyperFlags& flags, const std::string& corpus_path,
              const std::string& checkpoint_path, const std::string& report_file) {
  RunConfig cfg = resolve_config(cmd, flags);
  cfg.corpus_path = corpus_path;
  Corpus corpus = load_corpus(corpus_path);

  TrainResult result = train_model(corpus, cfg, [](const EpochRecord& e) {
    std::cout << "epoch " << e.epoch << "  loss " << e.train_loss << "  selection_f1 "
              << e.selection_f1 << "  selection_acc " << e.selection_acc << "\n";
  });
  std::cout << "best epoch " << result.report.best_epoch << "  selection_f1 "
            << result.report.best_f1 << "\n";

  save_checkpoint(*result.net, checkpoint_path);
  std::cout << "checkpoint written to " << checkpoint_path << "\n";
  if (!report_file.empty()) {
    const std::string path = report_path(report_file);
    write_text(path, result.report.to_json().dump(2) + "\n");
    std::cout << "report written to " << path << "\n";
  }
  return 0;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& corpus_path,
             const std::string& out_file) {
  auto net = load_checkpoint(checkpoint_path);
  Corpus corpus = load_corpus(corpus_path);
  check_corpus_matches(*net, corpus, "eval");
  const json metrics = metrics_json(*net, corpus);
  std::cout << metrics.dump(2) << "\n";
  if (!out_file.empty()) {
    const std::string path = report_path(out_file);
    write_text(path, metrics.dump(2) + "\n");
  }
  return 0;
}

int cmd_ablate(const CLI::App* cmd, const HyperFlags& flags, const std::string& corpus_path,
               AblationSpec spec, const std::string& values_csv, const std::string& seeds_csv,
               const std::string& out_file) {
  RunConfig base = resolve_config(cmd, flags);
  Corpus corpus = load_corpus(corpus_path);

  if (!values_csv.empty()) {
    spec.values.clear();
    std::stringstream ss(values_csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!item.empty()) spec.values.push_back(item);
    }
  }
  if (!seeds_csv.empty()) {
    spec.seeds.clear();
    if (seeds_csv.find(',') == std::string::npos) {
      // a single integer means "first n seeds"
      const uint64_t n = std::stoull(seeds_csv);
      if (n == 0) throw ConfigError("--seeds needs at least one seed");
      for (uint64_t s = 1; s <= n; ++s) spec.seeds.push_back(s);
    } else {
      std::stringstream ss(seeds_csv);
      std::string item;
      while (std::getline(ss, item, ',')) {
        if (!item.empty()) spec.seeds.push_back(std::stoull(item));
      }
    }
  }

  AblationReport report = run_ablation(corpus, base, spec);
  std::cout << report.table();
  if (!out_file.empty()) {
    const std::string path = report_path(out_file);
    write_text(path, report.to_json().dump(2) + "\n");
    std::cout << "report written to " << path << "\n";
  }
  return 0;
}

int cmd_heatmap(const std::string& checkpoint_path, const std::string& corpus_path,
                const std::string& dialogue_id, int utterance, const std::string& out_file) {
  auto net = load_checkpoint(checkpoint_path);
  Corpus corpus = load_corpus(corpus_path);
  check_corpus_matches(*net, corpus, "heatmap");

  const Dialogue* dialogue = nullptr;
  for (const auto& d : corpus.dialogues) {
    if (d.id == dialogue_id) {
      dialogue = &d;
      break;
    }
  }
  if (dialogue == nullptr) throw DataError("no dialogue with id \"" + dialogue_id + "\"");

  std::vector<HeatmapRow> rows;
  for (const auto& graph : net->build_graphs(*dialogue)) {
    for (const auto& r : export_adjacency_heatmap(graph, utterance)) rows.push_back(r);
  }
  const std::string csv = heatmap_csv(rows);
  if (out_file.empty()) {
    std::cout << csv;
  } else {
    write_text(out_file, csv);
    std::cout << "heatmap written to " << out_file << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multimodal dialogue emotion recognition with deep spectral GCNs"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  SynthSpec synth_spec;
  std::string synth_out = "corpus.jsonl";
  synth->add_option("--dialogues", synth_spec.num_dialogues, "number of dialogues");
  synth->add_option("--classes", synth_spec.num_classes, "number of emotion classes");
  synth->add_option("--max-speakers", synth_spec.max_speakers, "speakers per dialogue at most");
  synth->add_option("--len-min", synth_spec.len_min, "shortest dialogue");
  synth->add_option("--len-max", synth_spec.len_max, "longest dialogue");
  synth->add_option("--d-a", synth_spec.dims.a, "acoustic feature width");
  synth->add_option("--d-v", synth_spec.dims.v, "visual feature width");
  synth->add_option("--d-t", synth_spec.dims.t, "textual feature width");
  synth->add_option("--info-a", synth_spec.info_a, "acoustic informativeness");
  synth->add_option("--info-v", synth_spec.info_v, "visual informativeness");
  synth->add_option("--info-t", synth_spec.info_t, "textual informativeness");
  synth->add_option("--noise", synth_spec.noise, "feature noise stddev");
  synth->add_option("--stay", synth_spec.stay_prob, "latent state stay probability");
  synth->add_option("--speaker-dependence", synth_spec.speaker_dependence,
                    "pull toward each speaker's preferred class");
  synth->add_option("--seed", synth_spec.seed, "generator seed");
  synth->add_option("-o,--out", synth_out, "output corpus path");

  // train
  auto* train = app.add_subcommand("train", "train a model on a corpus");
  HyperFlags train_flags;
  std::string train_corpus, train_checkpoint = "checkpoint.json", train_report;
  train->add_option("--corpus", train_corpus, "training corpus (JSONL)")->required();
  train->add_option("-o,--checkpoint", train_checkpoint, "checkpoint output path");
  train->add_option("--report", train_report, "run report output path (JSON)");
  add_hyper_flags(train, train_flags);

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a corpus");
  std::string eval_checkpoint, eval_corpus, eval_out;
  eval->add_option("--checkpoint", eval_checkpoint, "checkpoint path")->required();
  eval->add_option("--corpus", eval_corpus, "evaluation corpus")->required();
  eval->add_option("-o,--out", eval_out, "metrics output path (JSON)");

  // ablate
  auto* ablate = app.add_subcommand("ablate", "sweep one config axis over seeds");
  HyperFlags ablate_flags;
  AblationSpec ablate_spec;
  std::string ablate_corpus, ablate_values, ablate_seeds, ablate_out;
  ablate->add_option("--corpus", ablate_corpus, "corpus (split internally)")->required();
  ablate->add_option("--axis", ablate_spec.axis, "modality|layers|speaker|fusion")->required();
  ablate->add_option("--values", ablate_values, "comma-separated cell values (default per axis)");
  ablate->add_option("--seeds", ablate_seeds, "seed count or comma-separated seeds (default 5)");
  ablate->add_option("--reference", ablate_spec.reference, "reference cell for t-tests");
  ablate->add_option("--split-ratio", ablate_spec.split_ratio, "train fraction");
  ablate->add_option("--split-seed", ablate_spec.split_seed, "train/test split seed");
  ablate->add_option("--jobs", ablate_spec.jobs, "parallel training jobs");
  ablate->add_option("-o,--out", ablate_out, "report output path (JSON)");
  add_hyper_flags(ablate, ablate_flags);

  // heatmap
  auto* heatmap = app.add_subcommand("heatmap", "export adjacency rows for one utterance");
  std::string hm_checkpoint, hm_corpus, hm_dialogue, hm_out;
  int hm_utterance = 0;
  heatmap->add_option("--checkpoint", hm_checkpoint, "checkpoint path")->required();
  heatmap->add_option("--corpus", hm_corpus, "corpus containing the dialogue")->required();
  heatmap->add_option("--dialogue", hm_dialogue, "dialogue id")->required();
  heatmap->add_option("--utterance", hm_utterance, "utterance index within the dialogue")
      ->required();
  heatmap->add_option("-o,--out", hm_out, "CSV output path (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) return cmd_synth(synth_out, synth_spec);
    if (train->parsed())
      return cmd_train(train, train_flags, train_corpus, train_checkpoint, train_report);
    if (eval->parsed()) return cmd_eval(eval_checkpoint, eval_corpus, eval_out);
    if (ablate->parsed())
      return cmd_ablate(ablate, ablate_flags, ablate_corpus, ablate_spec, ablate_values,
                        ablate_seeds, ablate_out);
    if (heatmap->parsed())
      return cmd_heatmap(hm_checkpoint, hm_corpus, hm_dialogue, hm_utterance, hm_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
