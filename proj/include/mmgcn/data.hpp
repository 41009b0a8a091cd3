#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mmgcn/common.hpp"

namespace mmgcn {

// One speaker turn with aligned acoustic / visual / textual feature vectors,
// a dialogue-local speaker index and a gold emotion class.
struct Utterance {
  Eigen::VectorXd a;
  Eigen::VectorXd v;
  Eigen::VectorXd t;
  int speaker = 0;
  int label = 0;
};

struct Dialogue {
  std::string id;
  std::vector<Utterance> utterances;

  int length() const { return static_cast<int>(utterances.size()); }
};

struct FeatureDims {
  int a = 0;
  int v = 0;
  int t = 0;

  bool operator==(const FeatureDims&) const = default;
};

struct CorpusMeta {
  std::vector<std::string> classes;
  FeatureDims dims;
  int max_speakers = 2;

  int num_classes() const { return static_cast<int>(classes.size()); }
  int label_index(const std::string& name) const;  // -1 when unknown
};

struct Corpus {
  CorpusMeta meta;
  std::vector<Dialogue> dialogues;
  std::string split_tag;

  int num_dialogues() const { return static_cast<int>(dialogues.size()); }
  long num_utterances() const;
  std::vector<long> class_counts() const;
};

// JSON-Lines corpus format. First line is a header object
//   {"meta": {"classes": [...], "dims": {"a":.., "v":.., "t":..}, "max_speakers": ..}}
// followed by one dialogue object per line:
//   {"id": "...", "utterances": [{"speaker":0, "label":"...", "a":[..], "v":[..], "t":[..]}]}
// Feature values are serialized with round-trip precision.
Corpus load_corpus(const std::string& path, std::optional<FeatureDims> expected_dims = {});
void save_corpus(const Corpus& corpus, const std::string& path);

// Parameters for the synthetic corpus generator. Labels follow a latent
// per-speaker emotion state that evolves as a first-order Markov chain;
// each modality observes a noisy projection of the state whose fidelity is
// set by the informativeness knobs.
struct SynthSpec {
  int num_dialogues = 30;
  int len_min = 5;
  int len_max = 12;
  int num_classes = 6;
  int max_speakers = 2;
  FeatureDims dims{10, 8, 12};
  double info_a = 0.6;
  double info_v = 0.3;
  double info_t = 0.9;
  double noise = 0.5;              // feature noise stddev
  double stay_prob = 0.6;          // chance the latent state repeats
  double speaker_dependence = 0.0; // pull toward each speaker's preferred class
  uint64_t seed = 1;

  void validate() const;
};

Corpus synthesize_corpus(const SynthSpec& spec);

// Dialogue-level split; train side gets floor(ratio * n) dialogues chosen by
// a seeded shuffle. Both sides must end up non-empty.
std::pair<Corpus, Corpus> split_corpus(const Corpus& corpus, double ratio, uint64_t seed);

// Packed per-dialogue views used by the encoders (row i = utterance i).
struct DialogueFeatures {
  Mat a;  // N x d_a
  Mat v;  // N x d_v
  Mat t;  // N x d_t
  std::vector<int> speakers;
  std::vector<int> labels;
};

DialogueFeatures dialogue_features(const Dialogue& d, const CorpusMeta& meta);

}  // namespace mmgcn
