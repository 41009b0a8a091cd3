#pragma once

#include <string>

#include <json.hpp>

#include "mmgcn/graph.hpp"

namespace mmgcn {

enum class FusionKind { MMGCN, Early, Late, Gated };

FusionKind fusion_from_string(const std::string& s);
std::string fusion_to_string(FusionKind k);

enum class LossKind { CrossEntropy, Focal };

LossKind loss_from_string(const std::string& s);
std::string loss_to_string(LossKind k);

// Every knob of a training run. Defaults follow the reference configuration:
// 4 GCN layers, dropout 0.4, lr 3e-4, L2 3e-5, alpha/eta/gamma = 0.1/0.5/0.7.
struct RunConfig {
  FusionKind fusion = FusionKind::MMGCN;
  ModalityMask modalities;
  int layers = 4;
  double alpha = 0.1;
  double eta = 0.5;
  double gamma = 0.7;
  int d_h = 100;
  int d_s = 100;
  int d_mlp = 0;  // 0 resolves to the node width
  double dropout = 0.4;
  LossKind loss = LossKind::CrossEntropy;
  double focal_gamma = 2.0;
  double lr = 3e-4;
  double l2 = 3e-5;
  bool l2_literal_norm = false;  // lambda*||theta||_2 instead of the squared norm
  bool speaker_embedding = true;
  int epochs = 100;
  int patience = 0;          // 0 disables early stopping on validation F1
  double val_fraction = 0.1; // 0 selects checkpoints on the training split
  double target_acc = 0.0;   // stop once selection-split accuracy reaches this (0 = off)
  int max_speakers = 0;      // 0 resolves from the corpus header
  uint64_t seed = 1;

  // paths (not part of the fingerprint)
  std::string corpus_path;
  std::string checkpoint_path;
  std::string report_path;

  // Throws ConfigError listing every violated constraint at once.
  void validate() const;

  nlohmann::json to_json() const;  // hyperparameters only, canonical key order
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig from_json(const nlohmann::json& j, RunConfig base);

  // FNV-1a over the canonical JSON dump.
  std::string fingerprint() const;
};

}  // namespace mmgcn
