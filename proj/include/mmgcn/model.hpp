#pragma once

#include <memory>

#include "mmgcn/config.hpp"
#include "mmgcn/data.hpp"
#include "mmgcn/encoders.hpp"
#include "mmgcn/fusion.hpp"
#include "mmgcn/graph.hpp"

namespace mmgcn {

// Identity-mapping decay: beta(l) = log(eta / l + 1) for the 1-based layer
// index l, monotone decreasing in l.
double beta_schedule(int layer, double eta);

// One propagation step:
//   relu(((1-alpha) * P H + alpha * H0) * ((1-beta) I + beta W))
// p_tilde and identity are constant leaves; H0 is the (possibly dropped-out)
// stack input.
Var gcn_layer(Var h, Var h0, Var p_tilde, Var w, Scalar alpha, Scalar beta, Var identity);

// Regularization over every trainable parameter: lambda * sum of squared
// entries, or lambda * sqrt(sum) when literal_norm is set.
Var l2_penalty(Tape& tape, ParamBind& p, const ParameterStore& store, Scalar lambda,
               bool literal_norm);

// Values captured during a forward pass for inspection; one layer stack per
// graph (a single stack except for late/gated fusion).
struct ForwardTrace {
  std::vector<std::vector<Mat>> stacks;  // each: H0 .. HL
  Mat g;
  Mat e;
  Mat probs;
};

// The full network for one fusion variant: modality encoders + speaker
// embedding, dialogue graph(s), deep GCN stack(s) and the MLP classifier.
class Network {
 public:
  Network(RunConfig cfg, CorpusMeta meta);

  const RunConfig& config() const { return cfg_; }
  const CorpusMeta& meta() const { return meta_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }

  int node_dim() const { return node_dim_; }
  int classifier_in_dim() const { return cls_in_dim_; }
  int mlp_dim() const { return d_mlp_; }

  void init_params(uint64_t seed);

  // Graphs from the current parameters with dropout off; edge weights are
  // plain values (no gradient flows through the adjacency).
  std::vector<MultimodalGraph> build_graphs(const Dialogue& d) const;

  // Class probabilities for one dialogue (N x num_classes). When
  // frozen_graphs is supplied the adjacency/Laplacian are taken from it
  // instead of being rebuilt from the pass's own node features.
  Var forward_probs(Tape& tape, ParamBind& p, const Dialogue& d, bool training,
                    Rng* dropout_rng, const std::vector<MultimodalGraph>* frozen_graphs = nullptr,
                    ForwardTrace* trace = nullptr) const;

  // Data term of the training objective (cross entropy or focal, per config).
  Var data_loss(Tape& tape, Var probs, const std::vector<int>& labels,
                const std::vector<Scalar>& class_weights) const;

  Mat predict_probs(const Dialogue& d) const;

 private:
  RunConfig cfg_;
  CorpusMeta meta_;
  EncoderConfig enc_cfg_;
  ParameterStore params_;
  int node_dim_ = 0;
  int cls_in_dim_ = 0;
  int d_mlp_ = 0;

  Var run_stack(Tape& tape, ParamBind& p, Var h_init, const Mat& laplacian,
                const std::string& weight_prefix, bool training, Rng* dropout_rng,
                std::vector<Mat>* stack_trace) const;
};

// Per-epoch training record and the run summary serialized to JSON. The
// report carries no timestamps so identical runs serialize byte-identically.
struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double selection_f1 = 0.0;
  double selection_acc = 0.0;
};

struct RunReport {
  nlohmann::json config;
  std::string fingerprint;
  uint64_t seed = 0;
  std::string selection_split;  // "val" or "train"
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_f1 = 0.0;
  double final_acc = 0.0;
  std::vector<std::vector<long>> confusion;  // gold x pred on the selection split

  nlohmann::json to_json() const;
};

struct TrainResult {
  std::unique_ptr<Network> net;
  RunReport report;
};

// Full training loop: seeded dialogue shuffling, one Adam step per dialogue,
// per-epoch evaluation on the selection split and best-checkpoint tracking.
// Aborts with a diagnostic if the loss turns non-finite. on_epoch, when set,
// streams each epoch record as it is produced.
using EpochCallback = std::function<void(const EpochRecord&)>;
TrainResult train_model(const Corpus& corpus, const RunConfig& cfg,
                        const EpochCallback& on_epoch = nullptr);

// Argmax labels per dialogue, dropout off.
std::vector<std::vector<int>> predict_labels(const Network& net, const Corpus& corpus);

// Inverse-frequency class weights normalized to mean 1 (absent classes get 1).
std::vector<Scalar> inverse_frequency_weights(const Corpus& corpus);

// Versioned JSON checkpoint: config + corpus header + named parameters.
void save_checkpoint(const Network& net, const std::string& path);
std::unique_ptr<Network> load_checkpoint(const std::string& path);

}  // namespace mmgcn
