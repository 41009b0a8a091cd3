#include <doctest.h>

#include <set>

#include "mmgcn/ablation.hpp"
#include "mmgcn/model.hpp"
#include "testutil.hpp"

using namespace mmgcn;

namespace {

SynthSpec tiny_synth(uint64_t seed = 91) {
  SynthSpec s;
  s.num_dialogues = 6;
  s.len_min = 2;
  s.len_max = 5;
  s.num_classes = 3;
  s.max_speakers = 2;
  s.dims = FeatureDims{3, 2, 4};
  s.seed = seed;
  return s;
}

RunConfig tiny_config(FusionKind fusion) {
  RunConfig cfg;
  cfg.fusion = fusion;
  cfg.layers = 2;
  cfg.d_h = 4;
  cfg.d_s = 2;
  cfg.dropout = 0.0;
  cfg.epochs = 2;
  cfg.val_fraction = 0.0;
  return cfg;
}

}  // namespace

TEST_CASE("early fusion topology") {
  Corpus corpus = synthesize_corpus(tiny_synth());
  RunConfig cfg = tiny_config(FusionKind::Early);
  Network net(cfg, corpus.meta);
  net.init_params(1);

  // one node per utterance, width 3*d_h + d_s
  CHECK(net.node_dim() == 3 * cfg.d_h + cfg.d_s);
  const Dialogue& d = corpus.dialogues[0];
  auto graphs = net.build_graphs(d);
  REQUIRE(graphs.size() == 1);
  CHECK(graphs[0].num_nodes() == d.length());
  CHECK(graphs[0].node_features.cols() == net.node_dim());

  Tape tape;
  ParamBind p(tape, net.params());
  ForwardTrace trace;
  Var probs = net.forward_probs(tape, p, d, false, nullptr, nullptr, &trace);
  CHECK(trace.e.cols() == 2 * net.node_dim());
  CHECK(tape.val(probs).rows() == d.length());
}

TEST_CASE("late fusion topology") {
  Corpus corpus = synthesize_corpus(tiny_synth(92));
  RunConfig cfg = tiny_config(FusionKind::Late);
  Network net(cfg, corpus.meta);
  net.init_params(2);

  const Dialogue& d = corpus.dialogues[0];
  auto graphs = net.build_graphs(d);
  CHECK(graphs.size() == 3);  // three separate laplacians
  for (const auto& g : graphs) {
    CHECK(g.num_nodes() == d.length());
    CHECK(g.laplacian.rows() == d.length());
  }

  // classifier consumes [h' blocks, g blocks] = 3d + 3d
  CHECK(net.classifier_in_dim() == 6 * net.node_dim());

  // per-modality weight stacks exist
  for (const char* m : {"a", "v", "t"}) {
    CHECK(net.params().has(std::string("gcn.") + m + ".l0.W"));
    CHECK(net.params().has(std::string("gcn.") + m + ".l1.W"));
  }
}

TEST_CASE("zeroing one modality's features only moves its own late-fusion branch") {
  Corpus corpus = synthesize_corpus(tiny_synth(93));
  RunConfig cfg = tiny_config(FusionKind::Late);
  Network net(cfg, corpus.meta);
  net.init_params(3);

  Dialogue d = corpus.dialogues[0];
  Dialogue d_zeroed = d;
  for (auto& u : d_zeroed.utterances) u.v.setZero();

  Tape t1, t2;
  ParamBind p1(t1, net.params()), p2(t2, net.params());
  ForwardTrace tr1, tr2;
  (void)net.forward_probs(t1, p1, d, false, nullptr, nullptr, &tr1);
  (void)net.forward_probs(t2, p2, d_zeroed, false, nullptr, nullptr, &tr2);

  const int dim = net.node_dim();
  // g is [g_a | g_v | g_t]; the audio block cannot move
  CHECK(tr1.g.leftCols(dim) == tr2.g.leftCols(dim));
  CHECK(tr1.g.middleCols(dim, dim) != tr2.g.middleCols(dim, dim));
}

TEST_CASE("gated attention fusion") {
  Rng rng(94);
  const int d = 5, n = 3;
  ParameterStore store;
  add_gated_fusion_params(store, d, rng);
  Mat ha = rng.normal_mat(n, d), hv = rng.normal_mat(n, d), ht = rng.normal_mat(n, d);

  SUBCASE("matches an independent evaluation") {
    Tape tape;
    ParamBind p(tape, store);
    Mat out = tape.val(gated_attention_fuse(tape, p, tape.leaf(ha), tape.leaf(hv), tape.leaf(ht)));
    REQUIRE(out.rows() == n);
    REQUIRE(out.cols() == 3 * d);

    auto pair_ref = [&](const Mat& hj, const Mat& hk, const std::string& name) {
      Mat rj = (hj * store.get("fuse." + name + ".Wj")).array().tanh().matrix();
      Mat rk = (hk * store.get("fuse." + name + ".Wk")).array().tanh().matrix();
      Mat z = (1.0 / (1.0 + (-(hj * store.get("fuse." + name + ".Wz")).array()).exp())).matrix();
      return Mat(z.cwiseProduct(rj) + (Mat::Ones(n, d) - z).cwiseProduct(rk));
    };
    Mat expect(n, 3 * d);
    expect << pair_ref(ha, hv, "av"), pair_ref(ha, ht, "at"), pair_ref(hv, ht, "vt");
    CHECK((out - expect).cwiseAbs().maxCoeff() <= 1e-12);
  }
  SUBCASE("saturated gate returns the first member of the pair") {
    ParameterStore sat;
    Rng r2(1);
    add_gated_fusion_params(sat, d, r2);
    // huge Wz drives sigmoid to 1 for these inputs
    sat.get("fuse.av.Wz") = Mat::Identity(d, d) * 1e4;
    Mat pos = Mat::Ones(n, d);  // positive rows keep z at exactly 1
    Tape tape;
    ParamBind p(tape, sat);
    Mat out = tape.val(gated_attention_fuse(tape, p, tape.leaf(pos), tape.leaf(hv), tape.leaf(ht)));
    Mat rj = (pos * sat.get("fuse.av.Wj")).array().tanh().matrix();
    CHECK(out.leftCols(d).isApprox(rj, 1e-12));
  }
  SUBCASE("zero gate weight averages the two transforms") {
    ParameterStore mid;
    Rng r2(2);
    add_gated_fusion_params(mid, d, r2);
    mid.get("fuse.vt.Wz").setZero();  // sigmoid(0) = 0.5 everywhere
    Tape tape;
    ParamBind p(tape, mid);
    Mat out = tape.val(gated_attention_fuse(tape, p, tape.leaf(ha), tape.leaf(hv), tape.leaf(ht)));
    Mat rj = (hv * mid.get("fuse.vt.Wj")).array().tanh().matrix();
    Mat rk = (ht * mid.get("fuse.vt.Wk")).array().tanh().matrix();
    CHECK(out.rightCols(d).isApprox(0.5 * (rj + rk), 1e-12));
  }
  SUBCASE("gradients pass finite differences") {
    Mat proj = rng.normal_mat(n, 3 * d);
    // same pair wiring as the library, rebuilt on raw leaves so the
    // generic gradcheck harness can drive it
    auto f = [&](Tape& t, std::vector<Var>& v) {
      auto W = [&](int idx) { return v[static_cast<size_t>(idx)]; };
      auto pair_out = [&](Var hj, Var hk, int base) {
        Var rj = tanh(matmul(hj, W(base + 0)));
        Var rk = tanh(matmul(hk, W(base + 1)));
        Var z = sigmoid(matmul(hj, W(base + 2)));
        return add(hadamard(z, rj), hadamard(affine_const(z, -1.0, 1.0), rk));
      };
      Var a = t.leaf(ha), vv = t.leaf(hv), tt = t.leaf(ht);
      Var e = concat_cols({pair_out(a, vv, 0), pair_out(a, tt, 3), pair_out(vv, tt, 6)});
      return testutil::weighted_sum(t, e, proj);
    };
    std::vector<Mat> params;
    for (const char* pair : {"av", "at", "vt"}) {
      for (const char* w : {"Wj", "Wk", "Wz"}) {
        params.push_back(store.get(std::string("fuse.") + pair + "." + w));
      }
    }
    CHECK(testutil::max_gradcheck_error(f, params) < 1e-4);
  }
}

TEST_CASE("gated fusion requires all three modalities") {
  RunConfig cfg = tiny_config(FusionKind::Gated);
  cfg.modalities = ModalityMask::parse("at");
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("all variants share the encoder parameters and training loop") {
  Corpus corpus = synthesize_corpus(tiny_synth(95));

  std::vector<std::set<std::string>> encoder_names;
  for (FusionKind k :
       {FusionKind::MMGCN, FusionKind::Early, FusionKind::Late, FusionKind::Gated}) {
    Network net(tiny_config(k), corpus.meta);
    net.init_params(4);
    std::set<std::string> names;
    for (const auto& e : net.params().entries()) {
      if (e.name.rfind("enc.", 0) == 0 || e.name.rfind("spk.", 0) == 0) names.insert(e.name);
    }
    encoder_names.push_back(std::move(names));
  }
  for (size_t i = 1; i < encoder_names.size(); ++i) CHECK(encoder_names[i] == encoder_names[0]);
}

TEST_CASE("every variant trains end to end on a small corpus") {
  Corpus corpus = synthesize_corpus(tiny_synth(96));
  for (FusionKind k :
       {FusionKind::MMGCN, FusionKind::Early, FusionKind::Late, FusionKind::Gated}) {
    CAPTURE(fusion_to_string(k));
    RunConfig cfg = tiny_config(k);
    cfg.epochs = 2;
    cfg.dropout = 0.2;
    TrainResult r = train_model(corpus, cfg);
    CHECK(r.report.epochs.size() == 2);
    for (const auto& e : r.report.epochs) {
      CHECK(std::isfinite(e.train_loss));
      CHECK(e.selection_f1 >= 0.0);
      CHECK(e.selection_f1 <= 1.0);
    }
  }
}

TEST_CASE("variant gradients pass finite differences end to end") {
  Corpus corpus = synthesize_corpus(tiny_synth(97));
  for (FusionKind k : {FusionKind::Early, FusionKind::Late, FusionKind::Gated}) {
    CAPTURE(fusion_to_string(k));
    RunConfig cfg = tiny_config(k);
    cfg.layers = 1;
    Network net(cfg, corpus.meta);
    net.init_params(11);

    Dialogue d = corpus.dialogues[0];
    d.utterances.resize(2);
    std::vector<int> labels;
    for (const auto& u : d.utterances) labels.push_back(u.label);
    const auto graphs = net.build_graphs(d);
    std::vector<Scalar> unit(static_cast<size_t>(corpus.meta.num_classes()), 1.0);

    auto loss_value = [&]() {
      Tape t;
      ParamBind p(t, net.params());
      Var probs = net.forward_probs(t, p, d, false, nullptr, &graphs);
      return t.val(net.data_loss(t, probs, labels, unit))(0, 0);
    };

    Tape t;
    ParamBind p(t, net.params());
    Var probs = net.forward_probs(t, p, d, false, nullptr, &graphs);
    Var loss = net.data_loss(t, probs, labels, unit);
    t.backward(loss);
    GradMap grads = p.grads();

    const double h = 1e-5;
    double worst = 0.0;
    for (auto& entry : net.params().entries()) {
      if (!entry.trainable) continue;
      Mat& value = net.params().get(entry.name);
      for (Eigen::Index r = 0; r < value.rows(); ++r) {
        for (Eigen::Index c = 0; c < value.cols(); ++c) {
          const double keep = value(r, c);
          value(r, c) = keep + h;
          const double up = loss_value();
          value(r, c) = keep - h;
          const double down = loss_value();
          value(r, c) = keep;
          worst = std::max(worst,
                           testutil::rel_err(grads.at(entry.name)(r, c), (up - down) / (2.0 * h)));
        }
      }
    }
    CHECK(worst < 1e-4);
  }
}
