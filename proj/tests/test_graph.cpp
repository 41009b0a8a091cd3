#include <doctest.h>

#include "mmgcn/graph.hpp"
#include "testutil.hpp"

using namespace mmgcn;
using testutil::from_rows;

namespace {

// brute-force edge rule: same modality, or same utterance across modalities
bool expect_edge(const NodeMeta& p, const NodeMeta& q) {
  if (p.modality == q.modality) return true;
  return p.utterance == q.utterance;
}

std::vector<std::pair<Modality, Mat>> random_blocks(Rng& rng, const ModalityMask& mask, int n,
                                                    int d) {
  std::vector<std::pair<Modality, Mat>> blocks;
  for (Modality m : mask.active()) blocks.emplace_back(m, rng.normal_mat(n, d));
  return blocks;
}

// dominant |eigenvalue| by power iteration; the oracle is independent of any
// library eigensolver
double spectral_radius(const Mat& m, int iters = 300) {
  Rng rng(12345);
  Eigen::VectorXd v = rng.normal_mat(m.rows(), 1).col(0);
  v.normalize();
  double lambda = 0.0;
  for (int i = 0; i < iters; ++i) {
    Eigen::VectorXd w = m * v;
    const double n = w.norm();
    if (n == 0.0) return 0.0;
    v = w / n;
    lambda = n;
  }
  return lambda;
}

}  // namespace

TEST_CASE("angular weight endpoint values are exact") {
  Eigen::RowVectorXd x(3);
  x << 0.3, -1.2, 2.0;
  Eigen::RowVectorXd y = -x;
  Eigen::RowVectorXd e1(3), e2(3);
  e1 << 1, 0, 0;
  e2 << 0, 1, 0;

  CHECK(std::abs(angular_weight(x, x) - 1.0) <= 1e-12);
  CHECK(std::abs(angular_weight(e1, e2) - 0.5) <= 1e-12);
  CHECK(std::abs(angular_weight(x, y) - 0.0) <= 1e-12);
}

TEST_CASE("angular weight conventions") {
  Eigen::RowVectorXd z = Eigen::RowVectorXd::Zero(4);
  Eigen::RowVectorXd x(4);
  x << 1, 2, 3, 4;
  // zero vector has cosine 0 by convention
  CHECK(angular_weight(z, x) == doctest::Approx(0.5));
  // scale invariance of the cosine
  CHECK(angular_weight(x, 3.7 * x) == doctest::Approx(1.0));

  Eigen::RowVectorXd short_vec(2);
  short_vec << 1, 2;
  CHECK_THROWS_AS((void)angular_weight(x, short_vec), ShapeError);
}

TEST_CASE("graph structure matches the pair rule for every mask and size") {
  Rng rng(31);
  const std::vector<std::string> masks = {"a", "v", "t", "av", "at", "vt", "avt"};
  for (const auto& mask_str : masks) {
    ModalityMask mask = ModalityMask::parse(mask_str);
    for (int n = 1; n <= 12; ++n) {
      MultimodalGraph g = build_graph(random_blocks(rng, mask, n, 5), 0.7);
      REQUIRE(g.num_nodes() == mask.count() * n);
      for (int p = 0; p < g.num_nodes(); ++p) {
        CHECK(g.adjacency(p, p) == 0.0);
        for (int q = p + 1; q < g.num_nodes(); ++q) {
          const bool has = g.adjacency(p, q) != 0.0;
          const bool want = expect_edge(g.meta[static_cast<size_t>(p)],
                                        g.meta[static_cast<size_t>(q)]);
          CHECK(has == want);
        }
      }
    }
  }
}

TEST_CASE("edge counts for hand cases") {
  Rng rng(32);
  SUBCASE("N=5 full mask has 45 undirected edges") {
    MultimodalGraph g = build_graph(random_blocks(rng, ModalityMask{}, 5, 4), 0.7);
    int nonzero = 0;
    for (int p = 0; p < g.num_nodes(); ++p)
      for (int q = p + 1; q < g.num_nodes(); ++q)
        if (g.adjacency(p, q) != 0.0) ++nonzero;
    CHECK(nonzero == 45);  // 3*C(5,2) intra + 5*3 cross
  }
  SUBCASE("N=1 full mask has only the 3 cross edges") {
    MultimodalGraph g = build_graph(random_blocks(rng, ModalityMask{}, 1, 4), 0.7);
    int nonzero = 0;
    for (int p = 0; p < 3; ++p)
      for (int q = p + 1; q < 3; ++q)
        if (g.adjacency(p, q) != 0.0) ++nonzero;
    CHECK(nonzero == 3);
  }
  SUBCASE("text-only mask is a complete graph with no cross edges") {
    ModalityMask mask = ModalityMask::parse("t");
    MultimodalGraph g = build_graph(random_blocks(rng, mask, 6, 4), 0.7);
    CHECK(g.num_nodes() == 6);
    int nonzero = 0;
    for (int p = 0; p < 6; ++p)
      for (int q = p + 1; q < 6; ++q)
        if (g.adjacency(p, q) != 0.0) ++nonzero;
    CHECK(nonzero == 15);
  }
}

TEST_CASE("cross-modal weights are the gamma-scaled intra formula") {
  Rng rng(33);
  const double gamma = 0.7;
  Mat a = rng.normal_mat(4, 6);
  Mat v = rng.normal_mat(4, 6);
  MultimodalGraph g = build_graph({{Modality::Audio, a}, {Modality::Visual, v}}, gamma);
  for (int i = 0; i < 4; ++i) {
    const double expected = gamma * angular_weight(a.row(i), v.row(i));
    CHECK(g.adjacency(i, 4 + i) == doctest::Approx(expected).epsilon(1e-14));
  }
}

TEST_CASE("empty inputs are rejected") {
  CHECK_THROWS_AS((void)build_graph({}, 0.7), ShapeError);
  Rng rng(1);
  CHECK_THROWS_AS((void)build_graph({{Modality::Text, Mat(0, 3)}}, 0.7), ShapeError);
  CHECK_THROWS_AS((void)ModalityMask::parse(""), ConfigError);
}

TEST_CASE("renormalized laplacian hand cases") {
  SUBCASE("isolated node") {
    Mat a = Mat::Zero(1, 1);
    Mat p = renormalized_laplacian(a);
    CHECK(p(0, 0) == doctest::Approx(1.0));
  }
  SUBCASE("two nodes with unit edge") {
    Mat a = from_rows({{0, 1}, {1, 0}});
    Mat p = renormalized_laplacian(a);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) CHECK(p(i, j) == doctest::Approx(0.5));
  }
  SUBCASE("asymmetric input throws") {
    Mat a = from_rows({{0, 1}, {0.5, 0}});
    CHECK_THROWS_AS((void)renormalized_laplacian(a), ShapeError);
  }
}

TEST_CASE("laplacian spectral radius stays within 1") {
  Rng rng(34);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + rng.uniform_int(9);  // up to 10 utterances
    ModalityMask mask;
    MultimodalGraph g = build_graph(random_blocks(rng, mask, n, 5), 0.7);
    CHECK(spectral_radius(g.laplacian) <= 1.0 + 1e-9);
    CHECK((g.laplacian - g.laplacian.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(g.laplacian.minCoeff() >= 0.0);
  }
}

TEST_CASE("permuting utterances permutes the adjacency exactly") {
  Rng rng(35);
  const int n = 7;
  const int d = 5;
  Mat a = rng.normal_mat(n, d);
  Mat v = rng.normal_mat(n, d);
  Mat t = rng.normal_mat(n, d);
  std::vector<int> perm = {3, 0, 6, 1, 5, 2, 4};

  MultimodalGraph g1 = build_graph(
      {{Modality::Audio, a}, {Modality::Visual, v}, {Modality::Text, t}}, 0.7);

  Mat ap(n, d), vp(n, d), tp(n, d);
  for (int i = 0; i < n; ++i) {
    ap.row(i) = a.row(perm[static_cast<size_t>(i)]);
    vp.row(i) = v.row(perm[static_cast<size_t>(i)]);
    tp.row(i) = t.row(perm[static_cast<size_t>(i)]);
  }
  MultimodalGraph g2 = build_graph(
      {{Modality::Audio, ap}, {Modality::Visual, vp}, {Modality::Text, tp}}, 0.7);

  // node p of g2 corresponds to node with utterance perm[u] in g1
  auto map_node = [&](int node) {
    const int block = node / n;
    const int utt = node % n;
    return block * n + perm[static_cast<size_t>(utt)];
  };
  for (int p = 0; p < g1.num_nodes(); ++p)
    for (int q = 0; q < g1.num_nodes(); ++q)
      CHECK(g2.adjacency(p, q) == g1.adjacency(map_node(p), map_node(q)));  // bitwise
}

TEST_CASE("feature scaling leaves edge weights unchanged") {
  Rng rng(36);
  const int n = 5;
  Mat t = rng.normal_mat(n, 4);
  Mat t_scaled = t;
  t_scaled.row(2) *= 17.5;  // positive scaling of one node
  MultimodalGraph g1 = build_graph({{Modality::Text, t}}, 0.7);
  MultimodalGraph g2 = build_graph({{Modality::Text, t_scaled}}, 0.7);
  for (int j = 0; j < n; ++j) {
    CHECK(g2.adjacency(2, j) == doctest::Approx(g1.adjacency(2, j)).epsilon(1e-12));
  }
}

TEST_CASE("heatmap export") {
  Rng rng(37);
  const int n = 6;
  MultimodalGraph g = build_graph(
      {{Modality::Audio, rng.normal_mat(n, 4)},
       {Modality::Visual, rng.normal_mat(n, 4)},
       {Modality::Text, rng.normal_mat(n, 4)}},
      0.7);

  auto rows = export_adjacency_heatmap(g, 2);
  CHECK(rows.size() == 3 * static_cast<size_t>(n));
  for (const auto& r : rows) {
    CHECK(r.weight >= 0.0);
    CHECK(r.weight <= 1.0);
    if (r.other_utterance == 2) CHECK(r.weight == 0.0);  // no self edges
  }

  CHECK_THROWS_AS((void)export_adjacency_heatmap(g, n), Error);
  CHECK_THROWS_AS((void)export_adjacency_heatmap(g, -1), Error);

  SUBCASE("identical features give constant weight 1 rows") {
    Mat same = Mat::Ones(4, 3);
    MultimodalGraph gc = build_graph({{Modality::Text, same}}, 0.7);
    auto keep = export_adjacency_heatmap(gc, 1);
    for (const auto& r : keep) {
      if (r.other_utterance != 1) CHECK(r.weight == doctest::Approx(1.0));
    }
  }

  SUBCASE("csv format") {
    const std::string csv = heatmap_csv(rows);
    CHECK(csv.rfind("modality,utterance_index,weight\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 3 * n);
  }
}
