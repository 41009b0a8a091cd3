#include <doctest.h>

#include <cstdio>

#include "mmgcn/ablation.hpp"
#include "mmgcn/evaluation.hpp"
#include "mmgcn/model.hpp"
#include "testutil.hpp"

using namespace mmgcn;
using testutil::weighted_sum;

namespace {

SynthSpec tiny_synth(int dialogues = 6, uint64_t seed = 21) {
  SynthSpec s;
  s.num_dialogues = dialogues;
  s.len_min = 2;
  s.len_max = 5;
  s.num_classes = 3;
  s.max_speakers = 2;
  s.dims = FeatureDims{3, 2, 4};
  s.seed = seed;
  return s;
}

RunConfig tiny_config() {
  RunConfig cfg;
  cfg.layers = 2;
  cfg.d_h = 4;
  cfg.d_s = 2;
  cfg.dropout = 0.0;
  cfg.epochs = 2;
  cfg.val_fraction = 0.0;
  return cfg;
}

// plain Eigen re-implementation of the propagation rule, kept independent of
// the tape ops it checks
Mat reference_gcn_layer(const Mat& h, const Mat& h0, const Mat& pt, const Mat& w, double alpha,
                        double beta) {
  Mat prop = (1.0 - alpha) * (pt * h) + alpha * h0;
  Mat blend = (1.0 - beta) * Mat::Identity(w.rows(), w.cols()) + beta * w;
  return (prop * blend).cwiseMax(0.0);
}

}  // namespace

TEST_CASE("beta schedule") {
  CHECK(beta_schedule(1, 0.5) == doctest::Approx(std::log(1.5)).epsilon(1e-12));
  CHECK(beta_schedule(1, 1e-9) == doctest::Approx(0.0).epsilon(1e-6));
  for (int l = 1; l < 40; ++l) CHECK(beta_schedule(l + 1, 0.5) < beta_schedule(l, 0.5));
  CHECK_THROWS_AS((void)beta_schedule(0, 0.5), Error);
  CHECK_THROWS_AS((void)beta_schedule(1, 0.0), Error);
}

TEST_CASE("gcn layer") {
  Rng rng(51);
  const int n = 5, d = 4;
  Mat h_val = rng.normal_mat(n, d);
  Mat h0_val = rng.normal_mat(n, d);
  Mat w_val = rng.normal_mat(d, d);
  Mat pt_val = rng.normal_mat(n, n);
  pt_val = (pt_val + Mat(pt_val.transpose())) / 2.0;

  Tape t;
  Var h = t.leaf(h_val, true);
  Var h0 = t.leaf(h0_val, true);
  Var w = t.leaf(w_val, true);
  Var pt = t.leaf(pt_val);
  Var eye = t.leaf(Mat::Identity(d, d));

  SUBCASE("alpha=1, beta=0 collapses to relu(H0) exactly") {
    Mat out = t.val(gcn_layer(h, h0, pt, w, 1.0, 0.0, eye));
    CHECK(out == h0_val.cwiseMax(0.0));  // bitwise
  }
  SUBCASE("beta=0 ignores W entirely") {
    Mat out1 = t.val(gcn_layer(h, h0, pt, w, 0.3, 0.0, eye));
    Var w2 = t.leaf(rng.normal_mat(d, d), true);
    Mat out2 = t.val(gcn_layer(h, h0, pt, w2, 0.3, 0.0, eye));
    CHECK(out1 == out2);
  }
  SUBCASE("matches an independent dense evaluation") {
    const double alpha = 0.1, beta = std::log(1.5);
    Mat out = t.val(gcn_layer(h, h0, pt, w, alpha, beta, eye));
    Mat ref = reference_gcn_layer(h_val, h0_val, pt_val, w_val, alpha, beta);
    CHECK(out.isApprox(ref, 1e-12));
  }
  SUBCASE("relu-idempotent when alpha=0, beta=0, P=I") {
    Var pt_eye = t.leaf(Mat::Identity(n, n));
    Mat nonneg = h_val.cwiseAbs();
    Var hp = t.leaf(nonneg, true);
    Mat out = t.val(gcn_layer(hp, h0, pt_eye, w, 0.0, 0.0, eye));
    CHECK(out == nonneg);
  }
}

TEST_CASE("loss values") {
  SUBCASE("perfect one-hot probabilities give zero loss") {
    Tape t;
    Mat p = testutil::from_rows({{1, 0, 0}, {0, 0, 1}});
    CHECK(t.val(ce_loss_mean(t.leaf(p), {0, 2}))(0, 0) == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("uniform probabilities give ln K") {
    Tape t;
    Mat p = Mat::Constant(4, 5, 0.2);
    CHECK(t.val(ce_loss_mean(t.leaf(p), {0, 1, 2, 3}))(0, 0) ==
          doctest::Approx(std::log(5.0)).epsilon(1e-12));
  }
  SUBCASE("regularizer vanishes at zero parameters") {
    ParameterStore store;
    store.add("w", Mat::Zero(3, 3));
    Tape t;
    ParamBind p(t, store);
    CHECK(t.val(l2_penalty(t, p, store, 0.5, false))(0, 0) == 0.0);
  }
  SUBCASE("literal-norm switch takes the square root") {
    ParameterStore store;
    store.add("w", Mat::Constant(1, 4, 2.0));  // sum sq = 16
    Tape t;
    ParamBind p(t, store);
    CHECK(t.val(l2_penalty(t, p, store, 0.5, false))(0, 0) == doctest::Approx(8.0));
    Tape t2;
    ParamBind p2(t2, store);
    CHECK(t2.val(l2_penalty(t2, p2, store, 0.5, true))(0, 0) == doctest::Approx(2.0));
  }
  SUBCASE("focal loss reduces to cross entropy at gamma 0") {
    Rng rng(52);
    Tape t;
    Mat probs = t.val(softmax_rows(t.leaf(rng.normal_mat(4, 3))));
    std::vector<int> labels = {0, 2, 1, 1};
    std::vector<double> unit(3, 1.0);
    const double focal = t.val(focal_loss_mean(t.leaf(probs), labels, unit, 0.0))(0, 0);
    const double ce = t.val(ce_loss_mean(t.leaf(probs), labels))(0, 0);
    CHECK(focal == doctest::Approx(ce).epsilon(1e-12));
  }
  SUBCASE("focal loss hand case") {
    Tape t;
    Mat p = testutil::from_rows({{0.5, 0.5}});
    std::vector<double> unit(2, 1.0);
    const double v = t.val(focal_loss_mean(t.leaf(p), {0}, unit, 2.0))(0, 0);
    CHECK(v == doctest::Approx(0.25 * std::log(2.0)).epsilon(1e-12));
  }
  SUBCASE("confident prediction contributes nothing") {
    Tape t;
    Mat p = testutil::from_rows({{1.0, 0.0}});
    std::vector<double> unit(2, 1.0);
    CHECK(t.val(focal_loss_mean(t.leaf(p), {0}, unit, 3.0))(0, 0) == doctest::Approx(0.0));
  }
}

TEST_CASE("forward shapes") {
  Corpus corpus = synthesize_corpus(tiny_synth());
  RunConfig cfg = tiny_config();

  SUBCASE("full mask: g is Nx3d, e is Nx6d, P is NxK") {
    Network net(cfg, corpus.meta);
    net.init_params(1);
    const Dialogue& d = corpus.dialogues[0];
    const int n = d.length();
    const int dim = net.node_dim();
    Tape tape;
    ParamBind p(tape, net.params());
    ForwardTrace trace;
    Var probs = net.forward_probs(tape, p, d, false, nullptr, nullptr, &trace);
    CHECK(trace.g.rows() == n);
    CHECK(trace.g.cols() == 3 * dim);
    CHECK(trace.e.cols() == 6 * dim);
    CHECK(tape.val(probs).rows() == n);
    CHECK(tape.val(probs).cols() == corpus.meta.num_classes());
    CHECK(trace.stacks.size() == 1);
    CHECK(trace.stacks[0].size() == static_cast<size_t>(cfg.layers) + 1);
    CHECK(trace.stacks[0][0].rows() == 3 * n);
  }
  SUBCASE("text-only mask: g is Nxd, e is Nx2d") {
    cfg.modalities = ModalityMask::parse("t");
    Network net(cfg, corpus.meta);
    net.init_params(1);
    const Dialogue& d = corpus.dialogues[1];
    Tape tape;
    ParamBind p(tape, net.params());
    ForwardTrace trace;
    (void)net.forward_probs(tape, p, d, false, nullptr, nullptr, &trace);
    CHECK(trace.g.cols() == net.node_dim());
    CHECK(trace.e.cols() == 2 * net.node_dim());
  }
  SUBCASE("zero weights give uniform probabilities") {
    cfg.layers = 1;
    Network net(cfg, corpus.meta);
    net.init_params(1);
    for (auto& e : net.params().entries()) e.value.setZero();
    Dialogue d;
    d.id = "single";
    d.utterances.push_back(corpus.dialogues[0].utterances[0]);
    Mat probs = net.predict_probs(d);
    REQUIRE(probs.rows() == 1);
    for (int c = 0; c < probs.cols(); ++c) {
      CHECK(probs(0, c) == doctest::Approx(1.0 / corpus.meta.num_classes()).epsilon(1e-12));
    }
  }
  SUBCASE("probability rows sum to one") {
    Network net(cfg, corpus.meta);
    net.init_params(3);
    for (const auto& d : corpus.dialogues) {
      Mat probs = net.predict_probs(d);
      for (Eigen::Index r = 0; r < probs.rows(); ++r) {
        CHECK(std::abs(probs.row(r).sum() - 1.0) <= 1e-12);
      }
    }
  }
}

TEST_CASE("predictions are deterministic and match probability argmax") {
  Corpus corpus = synthesize_corpus(tiny_synth());
  Network net(tiny_config(), corpus.meta);
  net.init_params(5);

  auto labels1 = predict_labels(net, corpus);
  auto labels2 = predict_labels(net, corpus);
  CHECK(labels1 == labels2);

  const Mat probs = net.predict_probs(corpus.dialogues[0]);
  for (int i = 0; i < corpus.dialogues[0].length(); ++i) {
    Eigen::Index arg = 0;
    probs.row(i).maxCoeff(&arg);
    CHECK(labels1[0][static_cast<size_t>(i)] == static_cast<int>(arg));
  }
}

TEST_CASE("end-to-end gradients match finite differences") {
  // tiny instance: N=3, d_h=4, d_s=2, L=2, 3 classes; every trainable
  // parameter, including the bilstm and speaker table
  Corpus corpus = synthesize_corpus(tiny_synth(3, 33));
  RunConfig cfg = tiny_config();
  Network net(cfg, corpus.meta);
  net.init_params(7);

  Dialogue d = corpus.dialogues[0];
  d.utterances.resize(3);
  for (int i = 0; i < 3; ++i) d.utterances[static_cast<size_t>(i)].speaker = i % 2;
  std::vector<int> labels;
  for (const auto& u : d.utterances) labels.push_back(u.label);

  // freeze the adjacency at the current parameters; edge weights are inputs
  // to the propagation, not a differentiated path
  const std::vector<MultimodalGraph> graphs = net.build_graphs(d);
  std::vector<Scalar> unit(static_cast<size_t>(corpus.meta.num_classes()), 1.0);

  auto loss_value = [&]() {
    Tape t;
    ParamBind p(t, net.params());
    Var probs = net.forward_probs(t, p, d, false, nullptr, &graphs);
    Var loss = add(net.data_loss(t, probs, labels, unit),
                   l2_penalty(t, p, net.params(), cfg.l2, false));
    return t.val(loss)(0, 0);
  };

  Tape t;
  ParamBind p(t, net.params());
  Var probs = net.forward_probs(t, p, d, false, nullptr, &graphs);
  Var loss = add(net.data_loss(t, probs, labels, unit),
                 l2_penalty(t, p, net.params(), cfg.l2, false));
  t.backward(loss);
  GradMap grads = p.grads();

  const double h = 1e-5;
  double worst = 0.0;
  long checked = 0;
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
        worst = std::max(worst, testutil::rel_err(grads.at(entry.name)(r, c),
                                                  (up - down) / (2.0 * h)));
        ++checked;
      }
    }
  }
  INFO("checked ", checked, " parameter entries, worst rel err ", worst);
  CHECK(worst < 1e-4);
}

TEST_CASE("disabling the speaker embedding removes speaker sensitivity") {
  Corpus corpus = synthesize_corpus(tiny_synth(4, 44));
  RunConfig cfg = tiny_config();
  cfg.speaker_embedding = false;
  Network net(cfg, corpus.meta);
  net.init_params(9);

  Corpus permuted = corpus;
  for (auto& d : permuted.dialogues)
    for (auto& u : d.utterances) u.speaker = 1 - u.speaker;  // swap both speakers

  for (int di = 0; di < corpus.num_dialogues(); ++di) {
    const Mat p1 = net.predict_probs(corpus.dialogues[static_cast<size_t>(di)]);
    const Mat p2 = net.predict_probs(permuted.dialogues[static_cast<size_t>(di)]);
    CHECK(p1 == p2);  // bitwise identical
  }

  // with the embedding on, the same permutation changes the outputs
  RunConfig cfg_on = tiny_config();
  Network net_on(cfg_on, corpus.meta);
  net_on.init_params(9);
  bool any_diff = false;
  for (int di = 0; di < corpus.num_dialogues(); ++di) {
    if (net_on.predict_probs(corpus.dialogues[static_cast<size_t>(di)]) !=
        net_on.predict_probs(permuted.dialogues[static_cast<size_t>(di)]))
      any_diff = true;
  }
  CHECK(any_diff);
}

TEST_CASE("training basics") {
  Corpus corpus = synthesize_corpus(tiny_synth(6, 55));

  SUBCASE("lr=0 leaves parameters untouched") {
    RunConfig cfg = tiny_config();
    cfg.lr = 1e-300;  // lr must be positive; this is numerically zero
    cfg.epochs = 2;
    Network before(cfg, corpus.meta);
    before.init_params(cfg.seed);
    TrainResult result = train_model(corpus, cfg);
    for (const auto& e : before.params().entries()) {
      CHECK(result.net->params().get(e.name).isApprox(e.value, 1e-12));
    }
  }
  SUBCASE("fixed seed reproduces the report bit for bit") {
    RunConfig cfg = tiny_config();
    cfg.epochs = 3;
    cfg.dropout = 0.3;
    TrainResult r1 = train_model(corpus, cfg);
    TrainResult r2 = train_model(corpus, cfg);
    CHECK(r1.report.to_json().dump() == r2.report.to_json().dump());
  }
  SUBCASE("validation split drives checkpoint selection") {
    RunConfig cfg = tiny_config();
    cfg.val_fraction = 0.34;
    cfg.epochs = 3;
    TrainResult r = train_model(corpus, cfg);
    CHECK(r.report.selection_split == "val");
    CHECK(r.report.epochs.size() == 3);
    CHECK(r.report.best_epoch >= 1);
  }
  SUBCASE("focal loss trains") {
    RunConfig cfg = tiny_config();
    cfg.loss = LossKind::Focal;
    cfg.epochs = 2;
    TrainResult r = train_model(corpus, cfg);
    CHECK(r.report.epochs.size() == 2);
    for (const auto& e : r.report.epochs) CHECK(std::isfinite(e.train_loss));
  }
  SUBCASE("probability rows stay normalized after training") {
    RunConfig cfg = tiny_config();
    cfg.epochs = 4;
    cfg.dropout = 0.3;
    TrainResult r = train_model(corpus, cfg);
    for (const auto& d : corpus.dialogues) {
      const Mat probs = r.net->predict_probs(d);
      for (Eigen::Index row = 0; row < probs.rows(); ++row) {
        CHECK(std::abs(probs.row(row).sum() - 1.0) <= 1e-12);
      }
    }
  }
}

TEST_CASE("small corpus overfits") {
  SynthSpec s = tiny_synth(5, 66);
  s.len_min = 3;
  s.len_max = 6;
  Corpus corpus = synthesize_corpus(s);

  RunConfig cfg = tiny_config();
  cfg.d_h = 8;
  cfg.d_s = 4;
  cfg.lr = 5e-3;
  cfg.epochs = 150;
  cfg.target_acc = 1.0;
  TrainResult r = train_model(corpus, cfg);
  CHECK(r.report.final_acc >= 0.99);

  // predictions at the returned checkpoint recover the training labels
  auto preds = predict_labels(*r.net, corpus);
  long wrong = 0;
  for (int di = 0; di < corpus.num_dialogues(); ++di) {
    const Dialogue& d = corpus.dialogues[static_cast<size_t>(di)];
    for (int i = 0; i < d.length(); ++i) {
      if (preds[static_cast<size_t>(di)][static_cast<size_t>(i)] !=
          d.utterances[static_cast<size_t>(i)].label)
        ++wrong;
    }
  }
  CHECK(wrong <= corpus.num_utterances() / 100);
}

TEST_CASE("checkpoint round trip") {
  Corpus corpus = synthesize_corpus(tiny_synth(4, 77));
  RunConfig cfg = tiny_config();
  cfg.epochs = 1;
  TrainResult r = train_model(corpus, cfg);

  const std::string path = "./ckpt_roundtrip.json";
  save_checkpoint(*r.net, path);
  auto loaded = load_checkpoint(path);

  CHECK(loaded->config().fingerprint() == r.net->config().fingerprint());
  CHECK(loaded->meta().classes == r.net->meta().classes);
  for (const auto& e : r.net->params().entries()) {
    CHECK(loaded->params().get(e.name) == e.value);  // exact float round trip
  }
  auto p1 = predict_labels(*r.net, corpus);
  auto p2 = predict_labels(*loaded, corpus);
  CHECK(p1 == p2);
  std::remove(path.c_str());
}

TEST_CASE("config validation lists every problem") {
  RunConfig cfg;
  cfg.layers = 0;
  cfg.alpha = 1.5;
  cfg.dropout = 1.0;
  cfg.lr = -1.0;
  try {
    cfg.validate();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("layers") != std::string::npos);
    CHECK(msg.find("alpha") != std::string::npos);
    CHECK(msg.find("dropout") != std::string::npos);
    CHECK(msg.find("lr") != std::string::npos);
  }
}

TEST_CASE("config json round trip and fingerprint stability") {
  RunConfig cfg;
  cfg.layers = 8;
  cfg.eta = 0.3;
  cfg.loss = LossKind::Focal;
  cfg.modalities = ModalityMask::parse("at");
  RunConfig back = RunConfig::from_json(cfg.to_json());
  CHECK(back.to_json() == cfg.to_json());
  CHECK(back.fingerprint() == cfg.fingerprint());

  RunConfig other = cfg;
  other.layers = 4;
  CHECK(other.fingerprint() != cfg.fingerprint());

  CHECK_THROWS_AS((void)RunConfig::from_json(nlohmann::json{{"nope", 1}}), ConfigError);
}
