#pragma once

#include "mmgcn/data.hpp"
#include "mmgcn/graph.hpp"
#include "mmgcn/optim.hpp"

namespace mmgcn {

// Shapes shared by the modality encoders and the speaker embedding.
struct EncoderConfig {
  FeatureDims dims;        // raw feature widths
  int d_h = 100;           // encoded width per modality (BiLSTM uses d_h/2 per direction)
  int d_s = 100;           // speaker embedding width
  int max_speakers = 2;
  ModalityMask mask;
  bool speaker_embedding = true;

  void validate() const;
};

// Registers all encoder parameters on the store. Weight matrices are drawn
// uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases start at zero except the
// LSTM forget gate (+1). With the speaker embedding disabled the table and
// layer-norm parameters are frozen at zero, which makes the model exactly
// independent of speaker indices.
void add_encoder_params(ParameterStore& store, const EncoderConfig& cfg, Rng& rng);

// Single-layer BiLSTM over the dialogue: row i of the result concatenates the
// forward state after consuming utterances 0..i and the backward state after
// consuming N-1..i. Output is N x d_h.
Var encode_text(Tape& tape, ParamBind& p, Var text_feats, int d_h);

// Plain affine maps, no activation. Output N x d_h.
Var encode_audio(Tape& tape, ParamBind& p, Var audio_feats);
Var encode_visual(Tape& tape, ParamBind& p, Var visual_feats);

// Speaker embedding rows: layer_norm(onehot(speaker) * table + bias) per
// utterance. Output N x d_s.
Var speaker_embed(Tape& tape, ParamBind& p, const std::vector<int>& speakers, int max_speakers,
                  int d_s);

// Per-modality node initialization blocks [h_m, S], each N x (d_h + d_s), in
// active-modality order (a, v, t). Dropout applies to the encoder outputs
// before the speaker columns are attached. The raw encoded features and the
// shared speaker rows are kept for fusion variants that recombine them.
struct NodeInits {
  std::vector<std::pair<Modality, Var>> encoded;  // h_m after dropout, N x d_h
  Var speaker;                                    // N x d_s
  std::vector<std::pair<Modality, Var>> blocks;   // [h_m, S]
};

NodeInits build_node_inits(Tape& tape, ParamBind& p, const DialogueFeatures& feats,
                           const EncoderConfig& cfg, Scalar dropout_rate, bool training,
                           Rng* dropout_rng);

}  // namespace mmgcn
