#include "mmgcn/encoders.hpp"

#include <cmath>

namespace mmgcn {

void EncoderConfig::validate() const {
  std::vector<std::string> problems;
  if (d_h < 2 || d_h % 2 != 0) problems.push_back("d_h must be an even integer >= 2");
  if (d_s < 1) problems.push_back("d_s must be >= 1");
  if (max_speakers < 1) problems.push_back("max_speakers must be >= 1");
  if (mask.count() == 0) problems.push_back("at least one modality must be active");
  if (mask.a && dims.a < 1) problems.push_back("d_a must be >= 1");
  if (mask.v && dims.v < 1) problems.push_back("d_v must be >= 1");
  if (mask.t && dims.t < 1) problems.push_back("d_t must be >= 1");
  if (!problems.empty()) {
    std::string msg = "invalid encoder config:";
    for (const auto& p : problems) msg += "\n  - " + p;
    throw ConfigError(msg);
  }
}

namespace {

Mat fan_in_uniform(Rng& rng, int rows, int cols) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
  return rng.uniform_mat(rows, cols, -bound, bound);
}

// gate blocks within the fused LSTM weight: input, forget, cell, output
Mat lstm_bias(int h2) {
  Mat b = Mat::Zero(1, 4 * h2);
  b.middleCols(h2, h2).setConstant(1.0);  // forget gate opens at init
  return b;
}

}  // namespace

void add_encoder_params(ParameterStore& store, const EncoderConfig& cfg, Rng& rng) {
  cfg.validate();
  if (cfg.mask.a) {
    store.add("enc.a.W", fan_in_uniform(rng, cfg.dims.a, cfg.d_h));
    store.add("enc.a.b", Mat::Zero(1, cfg.d_h));
  }
  if (cfg.mask.v) {
    store.add("enc.v.W", fan_in_uniform(rng, cfg.dims.v, cfg.d_h));
    store.add("enc.v.b", Mat::Zero(1, cfg.d_h));
  }
  if (cfg.mask.t) {
    const int h2 = cfg.d_h / 2;
    for (const char* dir : {"fwd", "bwd"}) {
      const std::string prefix = std::string("enc.t.") + dir + ".";
      store.add(prefix + "Wx", fan_in_uniform(rng, cfg.dims.t, 4 * h2));
      store.add(prefix + "Wh", fan_in_uniform(rng, h2, 4 * h2));
      store.add(prefix + "b", lstm_bias(h2));
    }
  }
  const bool spk = cfg.speaker_embedding;
  store.add("spk.table",
            spk ? fan_in_uniform(rng, cfg.max_speakers, cfg.d_s)
                : Mat::Zero(cfg.max_speakers, cfg.d_s),
            spk);
  store.add("spk.bias", Mat::Zero(1, cfg.d_s), spk);
  store.add("spk.ln.gain", spk ? Mat::Ones(1, cfg.d_s) : Mat::Zero(1, cfg.d_s), spk);
  store.add("spk.ln.bias", Mat::Zero(1, cfg.d_s), spk);
}

namespace {

// One LSTM direction over the rows of zx (precomputed x*Wx + b, N x 4h).
// Returns the per-step hidden states in *visit* order.
std::vector<Var> lstm_direction(Tape& tape, Var zx, Var wh, int h2, bool reverse) {
  const int n = static_cast<int>(tape.val(zx).rows());
  Var h = tape.leaf(Mat::Zero(1, h2));
  Var c = tape.leaf(Mat::Zero(1, h2));
  std::vector<Var> states;
  states.reserve(static_cast<size_t>(n));
  for (int step = 0; step < n; ++step) {
    const int row = reverse ? n - 1 - step : step;
    Var z = add(slice_rows(zx, row, 1), matmul(h, wh));
    Var gi = sigmoid(slice_cols(z, 0, h2));
    Var gf = sigmoid(slice_cols(z, h2, h2));
    Var gc = tanh(slice_cols(z, 2 * h2, h2));
    Var go = sigmoid(slice_cols(z, 3 * h2, h2));
    c = add(hadamard(gf, c), hadamard(gi, gc));
    h = hadamard(go, tanh(c));
    states.push_back(h);
  }
  return states;
}

}  // namespace

Var encode_text(Tape& tape, ParamBind& p, Var text_feats, int d_h) {
  const int h2 = d_h / 2;
  const int n = static_cast<int>(tape.val(text_feats).rows());
  if (n < 1) throw ShapeError("encode_text: empty dialogue");

  Var zx_f = add_rowvec(matmul(text_feats, p("enc.t.fwd.Wx")), p("enc.t.fwd.b"));
  Var zx_b = add_rowvec(matmul(text_feats, p("enc.t.bwd.Wx")), p("enc.t.bwd.b"));
  std::vector<Var> fwd = lstm_direction(tape, zx_f, p("enc.t.fwd.Wh"), h2, false);
  std::vector<Var> bwd = lstm_direction(tape, zx_b, p("enc.t.bwd.Wh"), h2, true);

  std::vector<Var> rows;
  rows.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    rows.push_back(concat_cols({fwd[static_cast<size_t>(i)],
                                bwd[static_cast<size_t>(n - 1 - i)]}));
  }
  return concat_rows(rows);
}

Var encode_audio(Tape& tape, ParamBind& p, Var audio_feats) {
  (void)tape;
  return add_rowvec(matmul(audio_feats, p("enc.a.W")), p("enc.a.b"));
}

Var encode_visual(Tape& tape, ParamBind& p, Var visual_feats) {
  (void)tape;
  return add_rowvec(matmul(visual_feats, p("enc.v.W")), p("enc.v.b"));
}

Var speaker_embed(Tape& tape, ParamBind& p, const std::vector<int>& speakers, int max_speakers,
                  int d_s) {
  (void)d_s;
  Mat onehot = Mat::Zero(static_cast<Eigen::Index>(speakers.size()), max_speakers);
  for (size_t i = 0; i < speakers.size(); ++i) {
    if (speakers[i] < 0 || speakers[i] >= max_speakers) {
      throw Error("speaker_embed: speaker index " + std::to_string(speakers[i]) +
                  " outside table of " + std::to_string(max_speakers));
    }
    onehot(static_cast<Eigen::Index>(i), speakers[i]) = 1.0;
  }
  Var raw = add_rowvec(matmul(tape.leaf(std::move(onehot)), p("spk.table")), p("spk.bias"));
  return layer_norm(raw, p("spk.ln.gain"), p("spk.ln.bias"));
}

NodeInits build_node_inits(Tape& tape, ParamBind& p, const DialogueFeatures& feats,
                           const EncoderConfig& cfg, Scalar dropout_rate, bool training,
                           Rng* dropout_rng) {
  cfg.validate();
  if (training && dropout_rate > 0.0 && dropout_rng == nullptr) {
    throw Error("build_node_inits: dropout in training mode needs an rng");
  }
  Var spk = speaker_embed(tape, p, feats.speakers, cfg.max_speakers, cfg.d_s);

  auto drop = [&](Var h) {
    return dropout_rng ? dropout(h, dropout_rate, training, *dropout_rng) : h;
  };

  NodeInits out;
  out.speaker = spk;
  if (cfg.mask.a) {
    Var h = drop(encode_audio(tape, p, tape.leaf(feats.a)));
    out.encoded.emplace_back(Modality::Audio, h);
    out.blocks.emplace_back(Modality::Audio, concat_cols({h, spk}));
  }
  if (cfg.mask.v) {
    Var h = drop(encode_visual(tape, p, tape.leaf(feats.v)));
    out.encoded.emplace_back(Modality::Visual, h);
    out.blocks.emplace_back(Modality::Visual, concat_cols({h, spk}));
  }
  if (cfg.mask.t) {
    Var h = drop(encode_text(tape, p, tape.leaf(feats.t), cfg.d_h));
    out.encoded.emplace_back(Modality::Text, h);
    out.blocks.emplace_back(Modality::Text, concat_cols({h, spk}));
  }
  return out;
}

}  // namespace mmgcn
