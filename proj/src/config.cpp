#include "mmgcn/config.hpp"

#include <cmath>
#include <cstdio>

namespace mmgcn {

using nlohmann::json;

FusionKind fusion_from_string(const std::string& s) {
  if (s == "mmgcn") return FusionKind::MMGCN;
  if (s == "early") return FusionKind::Early;
  if (s == "late") return FusionKind::Late;
  if (s == "gated") return FusionKind::Gated;
  throw ConfigError("unknown fusion \"" + s + "\" (expected mmgcn, early, late or gated)");
}

std::string fusion_to_string(FusionKind k) {
  switch (k) {
    case FusionKind::MMGCN: return "mmgcn";
    case FusionKind::Early: return "early";
    case FusionKind::Late: return "late";
    case FusionKind::Gated: return "gated";
  }
  return "?";
}

LossKind loss_from_string(const std::string& s) {
  if (s == "ce") return LossKind::CrossEntropy;
  if (s == "focal") return LossKind::Focal;
  throw ConfigError("unknown loss \"" + s + "\" (expected ce or focal)");
}

std::string loss_to_string(LossKind k) {
  return k == LossKind::CrossEntropy ? "ce" : "focal";
}

void RunConfig::validate() const {
  std::vector<std::string> problems;
  if (layers < 1) problems.push_back("layers must be >= 1");
  if (alpha <= 0.0 || alpha >= 1.0) problems.push_back("alpha must lie in (0, 1)");
  if (eta <= 0.0) problems.push_back("eta must be positive");
  else if (std::log(eta + 1.0) > 1.0) problems.push_back("eta too large: log(eta + 1) must stay <= 1");
  if (gamma <= 0.0) problems.push_back("gamma must be positive");
  if (d_h < 2 || d_h % 2 != 0) problems.push_back("d_h must be an even integer >= 2");
  if (d_s < 1) problems.push_back("d_s must be >= 1");
  if (d_mlp < 0) problems.push_back("d_mlp must be >= 0 (0 = node width)");
  if (dropout < 0.0 || dropout >= 1.0) problems.push_back("dropout must lie in [0, 1)");
  if (focal_gamma < 0.0) problems.push_back("focal_gamma must be >= 0");
  if (lr <= 0.0) problems.push_back("lr must be positive");
  if (l2 < 0.0) problems.push_back("l2 must be >= 0");
  if (epochs < 1) problems.push_back("epochs must be >= 1");
  if (patience < 0) problems.push_back("patience must be >= 0");
  if (val_fraction < 0.0 || val_fraction >= 1.0) problems.push_back("val_fraction must lie in [0, 1)");
  if (target_acc < 0.0 || target_acc > 1.0) problems.push_back("target_acc must lie in [0, 1]");
  if (max_speakers < 0) problems.push_back("max_speakers must be >= 0");
  if (modalities.count() == 0) problems.push_back("at least one modality must be active");
  if (fusion == FusionKind::Gated && modalities.count() != 3) {
    problems.push_back("gated fusion needs all three modalities (it gates the pairs av, at, vt)");
  }
  if (!problems.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& p : problems) msg += "\n  - " + p;
    throw ConfigError(msg);
  }
}

json RunConfig::to_json() const {
  // nlohmann keeps object keys sorted, so the dump is canonical
  return json{{"fusion", fusion_to_string(fusion)},
              {"modalities", modalities.str()},
              {"layers", layers},
              {"alpha", alpha},
              {"eta", eta},
              {"gamma", gamma},
              {"d_h", d_h},
              {"d_s", d_s},
              {"d_mlp", d_mlp},
              {"dropout", dropout},
              {"loss", loss_to_string(loss)},
              {"focal_gamma", focal_gamma},
              {"lr", lr},
              {"l2", l2},
              {"l2_literal_norm", l2_literal_norm},
              {"speaker_embedding", speaker_embedding},
              {"epochs", epochs},
              {"patience", patience},
              {"val_fraction", val_fraction},
              {"target_acc", target_acc},
              {"max_speakers", max_speakers},
              {"seed", seed}};
}

RunConfig RunConfig::from_json(const json& j) { return from_json(j, RunConfig{}); }

RunConfig RunConfig::from_json(const json& j, RunConfig base) {
  if (!j.is_object()) throw ConfigError("config JSON must be an object");
  for (const auto& [key, value] : j.items()) {
    if (key == "fusion") base.fusion = fusion_from_string(value.get<std::string>());
    else if (key == "modalities") base.modalities = ModalityMask::parse(value.get<std::string>());
    else if (key == "layers") base.layers = value.get<int>();
    else if (key == "alpha") base.alpha = value.get<double>();
    else if (key == "eta") base.eta = value.get<double>();
    else if (key == "gamma") base.gamma = value.get<double>();
    else if (key == "d_h") base.d_h = value.get<int>();
    else if (key == "d_s") base.d_s = value.get<int>();
    else if (key == "d_mlp") base.d_mlp = value.get<int>();
    else if (key == "dropout") base.dropout = value.get<double>();
    else if (key == "loss") base.loss = loss_from_string(value.get<std::string>());
    else if (key == "focal_gamma") base.focal_gamma = value.get<double>();
    else if (key == "lr") base.lr = value.get<double>();
    else if (key == "l2") base.l2 = value.get<double>();
    else if (key == "l2_literal_norm") base.l2_literal_norm = value.get<bool>();
    else if (key == "speaker_embedding") base.speaker_embedding = value.get<bool>();
    else if (key == "epochs") base.epochs = value.get<int>();
    else if (key == "patience") base.patience = value.get<int>();
    else if (key == "val_fraction") base.val_fraction = value.get<double>();
    else if (key == "target_acc") base.target_acc = value.get<double>();
    else if (key == "max_speakers") base.max_speakers = value.get<int>();
    else if (key == "seed") base.seed = value.get<uint64_t>();
    else throw ConfigError("unknown config key \"" + key + "\"");
  }
  return base;
}

std::string RunConfig::fingerprint() const {
  const uint64_t h = fnv1a64(to_json().dump());
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace mmgcn
