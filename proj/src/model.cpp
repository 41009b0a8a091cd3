#include "mmgcn/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "mmgcn/evaluation.hpp"

namespace mmgcn {

using nlohmann::json;

double beta_schedule(int layer, double eta) {
  if (layer < 1) throw Error("beta_schedule: layer index is 1-based");
  if (eta <= 0.0) throw Error("beta_schedule: eta must be positive");
  return std::log(eta / static_cast<double>(layer) + 1.0);
}

Var gcn_layer(Var h, Var h0, Var p_tilde, Var w, Scalar alpha, Scalar beta, Var identity) {
  Var propagated = axpby(1.0 - alpha, matmul(p_tilde, h), alpha, h0);
  Var blend = axpby(1.0 - beta, identity, beta, w);
  return relu(matmul(propagated, blend));
}

Var l2_penalty(Tape& tape, ParamBind& p, const ParameterStore& store, Scalar lambda,
               bool literal_norm) {
  Var total = tape.leaf(Mat::Zero(1, 1));
  for (const auto& e : store.entries()) {
    if (!e.trainable) continue;
    total = add(total, sum_squares(p(e.name)));
  }
  if (literal_norm) total = sqrt_scalar(total);
  return scale(total, lambda);
}

// ---------------------------------------------------------------------------
// Network

Network::Network(RunConfig cfg, CorpusMeta meta) : cfg_(std::move(cfg)), meta_(std::move(meta)) {
  if (cfg_.max_speakers == 0) cfg_.max_speakers = meta_.max_speakers;
  if (cfg_.max_speakers < meta_.max_speakers) {
    throw ConfigError("config max_speakers=" + std::to_string(cfg_.max_speakers) +
                      " is smaller than the corpus max_speakers=" +
                      std::to_string(meta_.max_speakers));
  }
  cfg_.validate();
  if (meta_.num_classes() < 2) throw ConfigError("need at least two classes");

  enc_cfg_.dims = meta_.dims;
  enc_cfg_.d_h = cfg_.d_h;
  enc_cfg_.d_s = cfg_.d_s;
  enc_cfg_.max_speakers = cfg_.max_speakers;
  enc_cfg_.mask = cfg_.modalities;
  enc_cfg_.speaker_embedding = cfg_.speaker_embedding;
  enc_cfg_.validate();

  const int n_active = cfg_.modalities.count();
  node_dim_ = cfg_.fusion == FusionKind::Early ? n_active * cfg_.d_h + cfg_.d_s
                                               : cfg_.d_h + cfg_.d_s;
  switch (cfg_.fusion) {
    case FusionKind::MMGCN:
    case FusionKind::Late:
      cls_in_dim_ = 2 * n_active * node_dim_;  // [h' blocks, g blocks]
      break;
    case FusionKind::Early:
      cls_in_dim_ = 2 * node_dim_;
      break;
    case FusionKind::Gated:
      cls_in_dim_ = 3 * node_dim_;  // [r_av, r_at, r_vt]
      break;
  }
  d_mlp_ = cfg_.d_mlp > 0 ? cfg_.d_mlp : node_dim_;
}

void Network::init_params(uint64_t seed) {
  if (params_.size() > 0) throw Error("Network: parameters already initialized");
  Rng rng = Rng::substream(seed, "init");
  add_encoder_params(params_, enc_cfg_, rng);

  const double bound = 1.0 / std::sqrt(static_cast<double>(node_dim_));
  auto add_stack = [&](const std::string& prefix) {
    for (int l = 0; l < cfg_.layers; ++l) {
      params_.add(prefix + "l" + std::to_string(l) + ".W",
                  rng.uniform_mat(node_dim_, node_dim_, -bound, bound));
    }
  };
  switch (cfg_.fusion) {
    case FusionKind::MMGCN:
    case FusionKind::Early:
      add_stack("gcn.");
      break;
    case FusionKind::Late:
    case FusionKind::Gated:
      for (Modality m : cfg_.modalities.active()) add_stack("gcn." + modality_name(m) + ".");
      break;
  }
  if (cfg_.fusion == FusionKind::Gated) add_gated_fusion_params(params_, node_dim_, rng);

  const double cls_bound = 1.0 / std::sqrt(static_cast<double>(cls_in_dim_));
  params_.add("cls.W1", rng.uniform_mat(cls_in_dim_, d_mlp_, -cls_bound, cls_bound));
  params_.add("cls.b1", Mat::Zero(1, d_mlp_));
  const double out_bound = 1.0 / std::sqrt(static_cast<double>(d_mlp_));
  params_.add("cls.W2", rng.uniform_mat(d_mlp_, meta_.num_classes(), -out_bound, out_bound));
  params_.add("cls.b2", Mat::Zero(1, meta_.num_classes()));
}

Var Network::run_stack(Tape& tape, ParamBind& p, Var h_init, const Mat& laplacian,
                       const std::string& weight_prefix, bool training, Rng* dropout_rng,
                       std::vector<Mat>* stack_trace) const {
  Var p_tilde = tape.leaf(laplacian);
  Var identity = tape.leaf(Mat::Identity(node_dim_, node_dim_));
  Var h0 = dropout_rng ? dropout(h_init, cfg_.dropout, training, *dropout_rng) : h_init;
  if (stack_trace) stack_trace->push_back(tape.val(h0));
  Var h = h0;
  for (int l = 0; l < cfg_.layers; ++l) {
    h = gcn_layer(h, h0, p_tilde, p(weight_prefix + "l" + std::to_string(l) + ".W"), cfg_.alpha,
                  beta_schedule(l + 1, cfg_.eta), identity);
    if (stack_trace) stack_trace->push_back(tape.val(h));
  }
  return h;
}

std::vector<MultimodalGraph> Network::build_graphs(const Dialogue& d) const {
  Tape tape;
  ParamBind p(tape, params_);
  const DialogueFeatures feats = dialogue_features(d, meta_);
  NodeInits inits = build_node_inits(tape, p, feats, enc_cfg_, cfg_.dropout, false, nullptr);

  std::vector<MultimodalGraph> graphs;
  if (cfg_.fusion == FusionKind::Early) {
    std::vector<Var> parts;
    for (const auto& [m, h] : inits.encoded) parts.push_back(h);
    parts.push_back(inits.speaker);
    graphs.push_back(build_graph({{Modality::Fused, tape.val(concat_cols(parts))}}, cfg_.gamma));
  } else if (cfg_.fusion == FusionKind::MMGCN) {
    std::vector<std::pair<Modality, Mat>> blocks;
    for (const auto& [m, b] : inits.blocks) blocks.emplace_back(m, tape.val(b));
    graphs.push_back(build_graph(blocks, cfg_.gamma));
  } else {
    for (const auto& [m, b] : inits.blocks) {
      graphs.push_back(build_graph({{m, tape.val(b)}}, cfg_.gamma));
    }
  }
  return graphs;
}

Var Network::forward_probs(Tape& tape, ParamBind& p, const Dialogue& d, bool training,
                           Rng* dropout_rng, const std::vector<MultimodalGraph>* frozen_graphs,
                           ForwardTrace* trace) const {
  if (training && cfg_.dropout > 0.0 && dropout_rng == nullptr) {
    throw Error("forward_probs: training mode needs a dropout rng");
  }
  const DialogueFeatures feats = dialogue_features(d, meta_);
  const int n = d.length();
  NodeInits inits =
      build_node_inits(tape, p, feats, enc_cfg_, cfg_.dropout, training, dropout_rng);

  // Early fusion folds the per-modality encodings into one node block.
  Var fused;
  if (cfg_.fusion == FusionKind::Early) {
    std::vector<Var> parts;
    for (const auto& [m, h] : inits.encoded) parts.push_back(h);
    parts.push_back(inits.speaker);
    fused = concat_cols(parts);
  }

  // Edge weights come from the current node initializations; no gradient
  // flows through the adjacency.
  std::vector<MultimodalGraph> built;
  if (frozen_graphs == nullptr) {
    if (cfg_.fusion == FusionKind::Early) {
      built.push_back(build_graph({{Modality::Fused, tape.val(fused)}}, cfg_.gamma));
    } else if (cfg_.fusion == FusionKind::MMGCN) {
      std::vector<std::pair<Modality, Mat>> blocks;
      for (const auto& [m, b] : inits.blocks) blocks.emplace_back(m, tape.val(b));
      built.push_back(build_graph(blocks, cfg_.gamma));
    } else {
      for (const auto& [m, b] : inits.blocks) {
        built.push_back(build_graph({{m, tape.val(b)}}, cfg_.gamma));
      }
    }
  }
  const std::vector<MultimodalGraph>& graphs = frozen_graphs ? *frozen_graphs : built;
  const size_t expected_graphs =
      (cfg_.fusion == FusionKind::MMGCN || cfg_.fusion == FusionKind::Early)
          ? 1
          : static_cast<size_t>(cfg_.modalities.count());
  if (graphs.size() != expected_graphs) {
    throw Error("forward_probs: expected " + std::to_string(expected_graphs) + " graphs, got " +
                std::to_string(graphs.size()));
  }

  Var e;
  if (cfg_.fusion == FusionKind::MMGCN) {
    std::vector<Var> block_vars;
    for (const auto& [m, b] : inits.blocks) block_vars.push_back(b);
    Var h_init = concat_rows(block_vars);
    std::vector<Mat>* st = trace ? &trace->stacks.emplace_back() : nullptr;
    Var h_top =
        run_stack(tape, p, h_init, graphs[0].laplacian, "gcn.", training, dropout_rng, st);
    std::vector<Var> g_parts;
    for (size_t b = 0; b < block_vars.size(); ++b) {
      g_parts.push_back(slice_rows(h_top, static_cast<int>(b) * n, n));
    }
    Var g = concat_cols(g_parts);
    Var h_prime = concat_cols(block_vars);
    e = concat_cols({h_prime, g});
    if (trace) {
      trace->g = tape.val(g);
      trace->e = tape.val(e);
    }
  } else if (cfg_.fusion == FusionKind::Early) {
    std::vector<Mat>* st = trace ? &trace->stacks.emplace_back() : nullptr;
    Var h_top =
        run_stack(tape, p, fused, graphs[0].laplacian, "gcn.", training, dropout_rng, st);
    e = concat_cols({fused, h_top});
    if (trace) {
      trace->g = tape.val(h_top);
      trace->e = tape.val(e);
    }
  } else {
    // one GCN per modality (late and gated fusion)
    std::vector<Var> tops;
    for (size_t b = 0; b < inits.blocks.size(); ++b) {
      const auto& [m, block] = inits.blocks[b];
      std::vector<Mat>* st = trace ? &trace->stacks.emplace_back() : nullptr;
      tops.push_back(run_stack(tape, p, block, graphs[b].laplacian,
                               "gcn." + modality_name(m) + ".", training, dropout_rng, st));
    }
    if (cfg_.fusion == FusionKind::Late) {
      Var g = concat_cols(tops);
      std::vector<Var> block_vars;
      for (const auto& [m, b] : inits.blocks) block_vars.push_back(b);
      Var h_prime = concat_cols(block_vars);
      if (trace) trace->g = tape.val(g);
      e = concat_cols({h_prime, g});
    } else {
      e = gated_attention_fuse(tape, p, tops[0], tops[1], tops[2]);
      if (trace) trace->g = tape.val(concat_cols(tops));
    }
    if (trace) trace->e = tape.val(e);
  }

  Var hidden = relu(add_rowvec(matmul(e, p("cls.W1")), p("cls.b1")));
  Var logits = add_rowvec(matmul(hidden, p("cls.W2")), p("cls.b2"));
  Var probs = softmax_rows(logits);
  if (trace) trace->probs = tape.val(probs);
  return probs;
}

Var Network::data_loss(Tape& tape, Var probs, const std::vector<int>& labels,
                       const std::vector<Scalar>& class_weights) const {
  (void)tape;
  if (cfg_.loss == LossKind::Focal) {
    return focal_loss_mean(probs, labels, class_weights, cfg_.focal_gamma);
  }
  return ce_loss_mean(probs, labels);
}

Mat Network::predict_probs(const Dialogue& d) const {
  Tape tape;
  ParamBind p(tape, params_);
  Var probs = forward_probs(tape, p, d, false, nullptr);
  return tape.val(probs);
}

// ---------------------------------------------------------------------------
// training

std::vector<Scalar> inverse_frequency_weights(const Corpus& corpus) {
  const auto counts = corpus.class_counts();
  std::vector<Scalar> inv(counts.size(), 0.0);
  double sum = 0.0;
  int present = 0;
  for (size_t k = 0; k < counts.size(); ++k) {
    if (counts[k] > 0) {
      inv[k] = 1.0 / static_cast<double>(counts[k]);
      sum += inv[k];
      ++present;
    }
  }
  std::vector<Scalar> weights(counts.size(), 1.0);
  if (present == 0) return weights;
  const double mean = sum / present;
  for (size_t k = 0; k < counts.size(); ++k) {
    if (counts[k] > 0) weights[k] = inv[k] / mean;
  }
  return weights;
}

namespace {

struct SplitEval {
  double f1 = 0.0;
  double acc = 0.0;
  ConfusionMatrix conf;
};

SplitEval evaluate_split(const Network& net, const Corpus& corpus) {
  SplitEval out{0.0, 0.0, ConfusionMatrix(net.meta().num_classes())};
  std::vector<int> gold, pred;
  for (const auto& d : corpus.dialogues) {
    const Mat probs = net.predict_probs(d);
    for (int i = 0; i < d.length(); ++i) {
      Eigen::Index arg = 0;
      probs.row(i).maxCoeff(&arg);
      gold.push_back(d.utterances[static_cast<size_t>(i)].label);
      pred.push_back(static_cast<int>(arg));
      out.conf.add(gold.back(), pred.back());
    }
  }
  out.f1 = weighted_f1(out.conf);
  out.acc = accuracy(gold, pred);
  return out;
}

}  // namespace

json RunReport::to_json() const {
  json epochs_json = json::array();
  for (const auto& e : epochs) {
    epochs_json.push_back(json{{"epoch", e.epoch},
                               {"train_loss", e.train_loss},
                               {"selection_f1", e.selection_f1},
                               {"selection_acc", e.selection_acc}});
  }
  return json{{"config", config},
              {"fingerprint", fingerprint},
              {"seed", seed},
              {"selection_split", selection_split},
              {"epochs", epochs_json},
              {"best_epoch", best_epoch},
              {"best_f1", best_f1},
              {"final_acc", final_acc},
              {"confusion", confusion}};
}

TrainResult train_model(const Corpus& corpus, const RunConfig& cfg_in,
                        const EpochCallback& on_epoch) {
  RunConfig cfg = cfg_in;
  if (cfg.max_speakers == 0) cfg.max_speakers = corpus.meta.max_speakers;
  cfg.validate();
  if (corpus.dialogues.empty()) throw DataError("training corpus has no dialogues");

  Corpus fit;
  Corpus val;
  const bool has_val = cfg.val_fraction > 0.0;
  if (has_val) {
    if (corpus.num_dialogues() < 2) {
      throw ConfigError("val_fraction > 0 needs at least 2 dialogues; use --val-fraction 0");
    }
    std::tie(fit, val) =
        split_corpus(corpus, 1.0 - cfg.val_fraction, splitmix64(cfg.seed ^ fnv1a64("valsplit")));
  } else {
    fit = corpus;
  }

  auto net = std::make_unique<Network>(cfg, corpus.meta);
  net->init_params(cfg.seed);

  AdamState adam;
  adam.lr = cfg.lr;
  Rng shuffle_rng = Rng::substream(cfg.seed, "shuffle");
  Rng dropout_rng = Rng::substream(cfg.seed, "dropout");

  std::vector<Scalar> class_weights(static_cast<size_t>(corpus.meta.num_classes()), 1.0);
  if (cfg.loss == LossKind::Focal) class_weights = inverse_frequency_weights(fit);

  const Corpus& sel = has_val ? val : fit;

  RunReport report;
  report.config = net->config().to_json();
  report.fingerprint = net->config().fingerprint();
  report.seed = cfg.seed;
  report.selection_split = has_val ? "val" : "train";

  ParameterStore best_params;
  double best_f1 = -1.0;
  int best_epoch = 0;
  int since_best = 0;

  std::vector<int> order(static_cast<size_t>(fit.num_dialogues()));
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    for (int idx : order) {
      const Dialogue& d = fit.dialogues[static_cast<size_t>(idx)];
      try {
        Tape tape;
        ParamBind p(tape, net->params());
        Var probs = net->forward_probs(tape, p, d, true, &dropout_rng);
        std::vector<int> labels;
        for (const auto& u : d.utterances) labels.push_back(u.label);
        Var loss = add(net->data_loss(tape, probs, labels, class_weights),
                       l2_penalty(tape, p, net->params(), cfg.l2, cfg.l2_literal_norm));
        loss_sum += tape.val(loss)(0, 0);
        tape.backward(loss);
        adam_step(net->params(), p.grads(), adam);
      } catch (const NumericError& e) {
        throw Error("training diverged at epoch " + std::to_string(epoch) + ", dialogue \"" +
                    d.id + "\": " + e.what());
      }
    }

    const SplitEval ev = evaluate_split(*net, sel);
    report.epochs.push_back(EpochRecord{epoch, loss_sum / fit.num_dialogues(), ev.f1, ev.acc});
    if (on_epoch) on_epoch(report.epochs.back());

    if (ev.f1 > best_f1) {
      best_f1 = ev.f1;
      best_epoch = epoch;
      best_params = net->params();
      since_best = 0;
    } else {
      ++since_best;
    }
    if (cfg.target_acc > 0.0 && ev.acc >= cfg.target_acc) {
      // the stopping checkpoint is the product when a target is requested
      best_f1 = ev.f1;
      best_epoch = epoch;
      best_params = net->params();
      break;
    }
    if (cfg.patience > 0 && since_best >= cfg.patience) break;
  }

  net->params() = best_params;
  const SplitEval final_ev = evaluate_split(*net, sel);
  report.best_epoch = best_epoch;
  report.best_f1 = final_ev.f1;
  report.final_acc = final_ev.acc;
  report.confusion = final_ev.conf.rows();

  return TrainResult{std::move(net), std::move(report)};
}

std::vector<std::vector<int>> predict_labels(const Network& net, const Corpus& corpus) {
  std::vector<std::vector<int>> out;
  for (const auto& d : corpus.dialogues) {
    const Mat probs = net.predict_probs(d);
    std::vector<int> labels;
    for (int i = 0; i < d.length(); ++i) {
      Eigen::Index arg = 0;
      probs.row(i).maxCoeff(&arg);
      labels.push_back(static_cast<int>(arg));
    }
    out.push_back(std::move(labels));
  }
  return out;
}

// ---------------------------------------------------------------------------
// checkpoints

void save_checkpoint(const Network& net, const std::string& path) {
  json params = json::array();
  for (const auto& e : net.params().entries()) {
    params.push_back(json{{"name", e.name},
                          {"rows", e.value.rows()},
                          {"cols", e.value.cols()},
                          {"trainable", e.trainable},
                          {"data", std::vector<double>(e.value.data(),
                                                       e.value.data() + e.value.size())}});
  }
  const CorpusMeta& meta = net.meta();
  json doc = {{"format", "mmgcn-checkpoint"},
              {"version", 1},
              {"config", net.config().to_json()},
              {"fingerprint", net.config().fingerprint()},
              {"meta",
               {{"classes", meta.classes},
                {"dims", {{"a", meta.dims.a}, {"v", meta.dims.v}, {"t", meta.dims.t}}},
                {"max_speakers", meta.max_speakers}}},
              {"params", std::move(params)}};
  std::ofstream out(path);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out << doc.dump() << "\n";
  if (!out) throw IoError("checkpoint write failed: " + path);
}

std::unique_ptr<Network> load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw DataError(path + ": malformed checkpoint JSON: " + std::string(e.what()));
  }
  if (!doc.is_object() || doc.value("format", "") != "mmgcn-checkpoint") {
    throw DataError(path + ": not an mmgcn checkpoint");
  }
  if (doc.value("version", 0) != 1) {
    throw DataError(path + ": unsupported checkpoint version");
  }
  RunConfig cfg = RunConfig::from_json(doc.at("config"));
  CorpusMeta meta;
  const json& jm = doc.at("meta");
  meta.classes = jm.at("classes").get<std::vector<std::string>>();
  meta.dims.a = jm.at("dims").at("a").get<int>();
  meta.dims.v = jm.at("dims").at("v").get<int>();
  meta.dims.t = jm.at("dims").at("t").get<int>();
  meta.max_speakers = jm.at("max_speakers").get<int>();

  auto net = std::make_unique<Network>(cfg, meta);
  net->init_params(cfg.seed);

  const json& params = doc.at("params");
  if (params.size() != net->params().size()) {
    throw DataError(path + ": checkpoint has " + std::to_string(params.size()) +
                    " parameters, model expects " + std::to_string(net->params().size()));
  }
  for (const json& jp : params) {
    const std::string name = jp.at("name").get<std::string>();
    if (!net->params().has(name)) throw DataError(path + ": unexpected parameter " + name);
    Mat& value = net->params().get(name);
    const auto rows = jp.at("rows").get<Eigen::Index>();
    const auto cols = jp.at("cols").get<Eigen::Index>();
    if (rows != value.rows() || cols != value.cols()) {
      throw DataError(path + ": parameter " + name + " has shape " + std::to_string(rows) + "x" +
                      std::to_string(cols) + ", model expects " + shape_str(value));
    }
    const auto data = jp.at("data").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(data.size()) != value.size()) {
      throw DataError(path + ": parameter " + name + " has wrong element count");
    }
    std::copy(data.begin(), data.end(), value.data());
    require_finite(value, "checkpoint parameter " + name);
  }
  return net;
}

}  // namespace mmgcn
