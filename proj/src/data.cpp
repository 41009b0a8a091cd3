#include "mmgcn/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include <json.hpp>

namespace mmgcn {

using nlohmann::json;

int CorpusMeta::label_index(const std::string& name) const {
  for (size_t i = 0; i < classes.size(); ++i) {
    if (classes[i] == name) return static_cast<int>(i);
  }
  return -1;
}

long Corpus::num_utterances() const {
  long n = 0;
  for (const auto& d : dialogues) n += d.length();
  return n;
}

std::vector<long> Corpus::class_counts() const {
  std::vector<long> counts(static_cast<size_t>(meta.num_classes()), 0);
  for (const auto& d : dialogues)
    for (const auto& u : d.utterances) counts[static_cast<size_t>(u.label)] += 1;
  return counts;
}

namespace {

Eigen::VectorXd parse_features(const json& arr, int expected_dim, const std::string& where) {
  if (!arr.is_array()) throw DataError(where + ": expected an array of numbers");
  if (static_cast<int>(arr.size()) != expected_dim) {
    throw DataError(where + ": expected " + std::to_string(expected_dim) + " values, found " +
                    std::to_string(arr.size()));
  }
  Eigen::VectorXd v(expected_dim);
  for (int i = 0; i < expected_dim; ++i) {
    if (!arr[static_cast<size_t>(i)].is_number()) throw DataError(where + ": non-numeric entry");
    v(i) = arr[static_cast<size_t>(i)].get<double>();
    if (!std::isfinite(v(i))) throw DataError(where + ": non-finite feature value");
  }
  return v;
}

void validate_dialogue(const Dialogue& d, const CorpusMeta& meta, const std::string& where) {
  if (d.utterances.empty()) throw DataError(where + ": dialogue has no utterances");
  std::set<int> seen;
  for (const auto& u : d.utterances) {
    if (u.speaker < 0 || u.speaker >= meta.max_speakers) {
      throw DataError(where + ": speaker index " + std::to_string(u.speaker) +
                      " outside max_speakers=" + std::to_string(meta.max_speakers));
    }
    if (u.label < 0 || u.label >= meta.num_classes()) {
      throw DataError(where + ": label index out of range");
    }
    seen.insert(u.speaker);
  }
  // speakers must form the contiguous set {0..k}
  if (*seen.rbegin() != static_cast<int>(seen.size()) - 1) {
    throw DataError(where + ": speaker indices are not a contiguous 0..k set");
  }
}

}  // namespace

Corpus load_corpus(const std::string& path, std::optional<FeatureDims> expected_dims) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus file: " + path);

  Corpus corpus;
  std::string line;
  long line_no = 0;

  // header
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json header;
    try {
      header = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError(path + ":" + std::to_string(line_no) + ": malformed JSON: " + e.what());
    }
    if (!header.is_object() || !header.contains("meta")) {
      throw DataError(path + ":" + std::to_string(line_no) +
                      ": first record must be the {\"meta\": ...} header");
    }
    const json& m = header["meta"];
    for (const char* key : {"classes", "dims", "max_speakers"}) {
      if (!m.contains(key))
        throw DataError(path + ":" + std::to_string(line_no) + ": meta missing field \"" +
                        key + "\"");
    }
    corpus.meta.classes = m["classes"].get<std::vector<std::string>>();
    if (corpus.meta.classes.empty())
      throw DataError(path + ":" + std::to_string(line_no) + ": meta.classes is empty");
    for (const char* key : {"a", "v", "t"}) {
      if (!m["dims"].contains(key))
        throw DataError(path + ":" + std::to_string(line_no) + ": meta.dims missing \"" +
                        std::string(key) + "\"");
    }
    corpus.meta.dims.a = m["dims"]["a"].get<int>();
    corpus.meta.dims.v = m["dims"]["v"].get<int>();
    corpus.meta.dims.t = m["dims"]["t"].get<int>();
    corpus.meta.max_speakers = m["max_speakers"].get<int>();
    if (corpus.meta.dims.a <= 0 || corpus.meta.dims.v <= 0 || corpus.meta.dims.t <= 0) {
      throw DataError(path + ":" + std::to_string(line_no) + ": feature dims must be positive");
    }
    if (corpus.meta.max_speakers < 1)
      throw DataError(path + ":" + std::to_string(line_no) + ": max_speakers must be >= 1");
    break;
  }
  if (corpus.meta.classes.empty()) throw DataError(path + ": missing meta header line");
  if (expected_dims && !(corpus.meta.dims == *expected_dims)) {
    throw DataError(path + ": feature dims (a=" + std::to_string(corpus.meta.dims.a) +
                    ", v=" + std::to_string(corpus.meta.dims.v) +
                    ", t=" + std::to_string(corpus.meta.dims.t) + ") do not match expected (a=" +
                    std::to_string(expected_dims->a) + ", v=" + std::to_string(expected_dims->v) +
                    ", t=" + std::to_string(expected_dims->t) + ")");
  }

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(line_no);
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError(where + ": malformed JSON: " + e.what());
    }
    if (!rec.is_object() || !rec.contains("id") || !rec.contains("utterances")) {
      throw DataError(where + ": dialogue record must contain \"id\" and \"utterances\"");
    }
    Dialogue d;
    d.id = rec["id"].get<std::string>();
    const json& utts = rec["utterances"];
    if (!utts.is_array()) throw DataError(where + ": \"utterances\" must be an array");
    int utt_no = 0;
    for (const json& ju : utts) {
      const std::string uwhere = where + ": utterance " + std::to_string(utt_no);
      for (const char* key : {"speaker", "label", "a", "v", "t"}) {
        if (!ju.contains(key))
          throw DataError(uwhere + ": missing field \"" + std::string(key) + "\"");
      }
      Utterance u;
      u.speaker = ju["speaker"].get<int>();
      const std::string label_name = ju["label"].get<std::string>();
      u.label = corpus.meta.label_index(label_name);
      if (u.label < 0) throw DataError(uwhere + ": unknown label \"" + label_name + "\"");
      u.a = parse_features(ju["a"], corpus.meta.dims.a, uwhere + ": field \"a\"");
      u.v = parse_features(ju["v"], corpus.meta.dims.v, uwhere + ": field \"v\"");
      u.t = parse_features(ju["t"], corpus.meta.dims.t, uwhere + ": field \"t\"");
      d.utterances.push_back(std::move(u));
      ++utt_no;
    }
    validate_dialogue(d, corpus.meta, where);
    corpus.dialogues.push_back(std::move(d));
  }
  if (corpus.dialogues.empty()) throw DataError(path + ": corpus contains no dialogues");
  return corpus;
}

void save_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write corpus file: " + path);
  json header = {{"meta",
                  {{"classes", corpus.meta.classes},
                   {"dims",
                    {{"a", corpus.meta.dims.a}, {"v", corpus.meta.dims.v}, {"t", corpus.meta.dims.t}}},
                   {"max_speakers", corpus.meta.max_speakers}}}};
  out << header.dump() << "\n";
  for (const auto& d : corpus.dialogues) {
    json utts = json::array();
    for (const auto& u : d.utterances) {
      json ju;
      ju["speaker"] = u.speaker;
      ju["label"] = corpus.meta.classes[static_cast<size_t>(u.label)];
      ju["a"] = std::vector<double>(u.a.data(), u.a.data() + u.a.size());
      ju["v"] = std::vector<double>(u.v.data(), u.v.data() + u.v.size());
      ju["t"] = std::vector<double>(u.t.data(), u.t.data() + u.t.size());
      utts.push_back(std::move(ju));
    }
    json rec = {{"id", d.id}, {"utterances", std::move(utts)}};
    out << rec.dump() << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

void SynthSpec::validate() const {
  std::vector<std::string> problems;
  if (num_dialogues < 1) problems.push_back("num_dialogues must be >= 1");
  if (len_min < 1 || len_max < len_min) problems.push_back("need 1 <= len_min <= len_max");
  if (num_classes < 2) problems.push_back("num_classes must be >= 2");
  if (max_speakers < 1) problems.push_back("max_speakers must be >= 1");
  if (dims.a < 1 || dims.v < 1 || dims.t < 1) problems.push_back("feature dims must be >= 1");
  for (double info : {info_a, info_v, info_t}) {
    if (info < 0.0 || !std::isfinite(info)) problems.push_back("informativeness must be >= 0");
  }
  if (noise < 0.0) problems.push_back("noise must be >= 0");
  if (stay_prob < 0.0 || stay_prob >= 1.0) problems.push_back("stay_prob must lie in [0, 1)");
  if (speaker_dependence < 0.0 || speaker_dependence > 1.0)
    problems.push_back("speaker_dependence must lie in [0, 1]");
  if (!problems.empty()) {
    std::string msg = "invalid synthesis spec:";
    for (const auto& p : problems) msg += "\n  - " + p;
    throw ConfigError(msg);
  }
}

Corpus synthesize_corpus(const SynthSpec& spec) {
  spec.validate();
  Rng rng = Rng::substream(spec.seed, "synth");

  Corpus corpus;
  for (int k = 0; k < spec.num_classes; ++k) {
    corpus.meta.classes.push_back("class_" + std::to_string(k));
  }
  corpus.meta.dims = spec.dims;
  corpus.meta.max_speakers = spec.max_speakers;

  // one unit-norm prototype per (modality, class); draw order is fixed
  auto draw_protos = [&](int dim) {
    std::vector<Eigen::VectorXd> protos;
    for (int k = 0; k < spec.num_classes; ++k) {
      Eigen::VectorXd p(dim);
      for (int i = 0; i < dim; ++i) p(i) = rng.normal();
      const double norm = p.norm();
      if (norm > 0) p /= norm;
      protos.push_back(std::move(p));
    }
    return protos;
  };
  const auto protos_a = draw_protos(spec.dims.a);
  const auto protos_v = draw_protos(spec.dims.v);
  const auto protos_t = draw_protos(spec.dims.t);

  auto emit_features = [&](const std::vector<Eigen::VectorXd>& protos, double info, int dim,
                           int label) {
    Eigen::VectorXd x(dim);
    for (int i = 0; i < dim; ++i) x(i) = rng.normal() * spec.noise;
    x += info * protos[static_cast<size_t>(label)];
    return x;
  };

  for (int di = 0; di < spec.num_dialogues; ++di) {
    Dialogue d;
    d.id = "synth_" + std::to_string(di);
    const int length = spec.len_min + rng.uniform_int(spec.len_max - spec.len_min + 1);
    const int parties =
        spec.max_speakers >= 2 ? 2 + rng.uniform_int(spec.max_speakers - 1) : 1;

    std::vector<int> state(static_cast<size_t>(parties));
    for (auto& s : state) s = rng.uniform_int(spec.num_classes);

    for (int i = 0; i < length; ++i) {
      const int speaker = i % parties;  // rotation preserves first-appearance order
      if (rng.uniform() >= spec.stay_prob) {
        if (rng.uniform() < spec.speaker_dependence) {
          state[static_cast<size_t>(speaker)] = speaker % spec.num_classes;
        } else {
          state[static_cast<size_t>(speaker)] = rng.uniform_int(spec.num_classes);
        }
      }
      Utterance u;
      u.speaker = speaker;
      u.label = state[static_cast<size_t>(speaker)];
      u.a = emit_features(protos_a, spec.info_a, spec.dims.a, u.label);
      u.v = emit_features(protos_v, spec.info_v, spec.dims.v, u.label);
      u.t = emit_features(protos_t, spec.info_t, spec.dims.t, u.label);
      d.utterances.push_back(std::move(u));
    }
    corpus.dialogues.push_back(std::move(d));
  }
  return corpus;
}

std::pair<Corpus, Corpus> split_corpus(const Corpus& corpus, double ratio, uint64_t seed) {
  if (ratio <= 0.0 || ratio >= 1.0) throw ConfigError("split ratio must lie in (0, 1)");
  const int n = corpus.num_dialogues();
  std::vector<int> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Rng rng = Rng::substream(seed, "split");
  rng.shuffle(order);

  const int n_train = static_cast<int>(std::floor(ratio * n + 1e-9));
  if (n_train < 1 || n_train >= n) {
    throw DataError("split leaves an empty side (" + std::to_string(n_train) + "/" +
                    std::to_string(n - n_train) + " of " + std::to_string(n) + " dialogues)");
  }
  std::vector<int> train_ids(order.begin(), order.begin() + n_train);
  std::vector<int> test_ids(order.begin() + n_train, order.end());
  // keep original dialogue order within each side
  std::sort(train_ids.begin(), train_ids.end());
  std::sort(test_ids.begin(), test_ids.end());

  Corpus train, test;
  train.meta = corpus.meta;
  test.meta = corpus.meta;
  train.split_tag = "train";
  test.split_tag = "test";
  for (int id : train_ids) train.dialogues.push_back(corpus.dialogues[static_cast<size_t>(id)]);
  for (int id : test_ids) test.dialogues.push_back(corpus.dialogues[static_cast<size_t>(id)]);
  return {std::move(train), std::move(test)};
}

DialogueFeatures dialogue_features(const Dialogue& d, const CorpusMeta& meta) {
  const int n = d.length();
  DialogueFeatures f;
  f.a = Mat(n, meta.dims.a);
  f.v = Mat(n, meta.dims.v);
  f.t = Mat(n, meta.dims.t);
  for (int i = 0; i < n; ++i) {
    const Utterance& u = d.utterances[static_cast<size_t>(i)];
    if (u.a.size() != meta.dims.a || u.v.size() != meta.dims.v || u.t.size() != meta.dims.t) {
      throw DataError("dialogue " + d.id + ": utterance feature dims do not match corpus meta");
    }
    f.a.row(i) = u.a.transpose();
    f.v.row(i) = u.v.transpose();
    f.t.row(i) = u.t.transpose();
    f.speakers.push_back(u.speaker);
    f.labels.push_back(u.label);
  }
  return f;
}

}  // namespace mmgcn
