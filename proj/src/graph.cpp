#include "mmgcn/graph.hpp"

#include <cmath>
#include <cstdio>

namespace mmgcn {

std::string modality_name(Modality m) {
  switch (m) {
    case Modality::Audio: return "a";
    case Modality::Visual: return "v";
    case Modality::Text: return "t";
    case Modality::Fused: return "fused";
  }
  return "?";
}

ModalityMask ModalityMask::parse(const std::string& s) {
  ModalityMask m{false, false, false};
  for (char c : s) {
    switch (c) {
      case 'a': m.a = true; break;
      case 'v': m.v = true; break;
      case 't': m.t = true; break;
      default:
        throw ConfigError("modalities: unknown character '" + std::string(1, c) +
                          "' (expected a subset of \"avt\")");
    }
  }
  if (m.count() == 0) throw ConfigError("modalities: at least one of a/v/t is required");
  return m;
}

std::string ModalityMask::str() const {
  std::string s;
  if (a) s += 'a';
  if (v) s += 'v';
  if (t) s += 't';
  return s;
}

std::vector<Modality> ModalityMask::active() const {
  std::vector<Modality> out;
  if (a) out.push_back(Modality::Audio);
  if (v) out.push_back(Modality::Visual);
  if (t) out.push_back(Modality::Text);
  return out;
}

int MultimodalGraph::block_count() const {
  return num_utterances > 0 ? num_nodes() / num_utterances : 0;
}

int MultimodalGraph::node_index(Modality m, int utterance) const {
  if (utterance < 0 || utterance >= num_utterances) return -1;
  for (int b = 0; b < block_count(); ++b) {
    const int idx = b * num_utterances + utterance;
    if (meta[static_cast<size_t>(idx)].modality == m) return idx;
  }
  return -1;
}

Scalar angular_weight(const Eigen::Ref<const Eigen::RowVectorXd>& a,
                      const Eigen::Ref<const Eigen::RowVectorXd>& b) {
  if (a.size() != b.size()) {
    throw ShapeError("angular_weight: dimension mismatch " + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()));
  }
  const Scalar na = a.norm();
  const Scalar nb = b.norm();
  Scalar cos = 0.0;  // zero-vector convention
  if (na > 0.0 && nb > 0.0) {
    cos = a.dot(b) / (na * nb);
    if (cos > 1.0 - 1e-12) cos = 1.0;
    if (cos < -1.0 + 1e-12) cos = -1.0;
  }
  return 1.0 - std::acos(cos) / M_PI;
}

MultimodalGraph build_graph(const std::vector<std::pair<Modality, Mat>>& blocks, Scalar gamma) {
  if (blocks.empty()) throw ShapeError("build_graph: no modality blocks");
  if (gamma <= 0.0) throw ConfigError("build_graph: gamma must be positive");
  const Eigen::Index n_utt = blocks[0].second.rows();
  const Eigen::Index d = blocks[0].second.cols();
  if (n_utt < 1) throw ShapeError("build_graph: empty dialogue");
  for (const auto& [m, feats] : blocks) {
    if (feats.rows() != n_utt || feats.cols() != d) {
      throw ShapeError("build_graph: block " + modality_name(m) + " is " + shape_str(feats) +
                       ", expected " + std::to_string(n_utt) + "x" + std::to_string(d));
    }
  }

  MultimodalGraph g;
  g.num_utterances = static_cast<int>(n_utt);
  const int n_blocks = static_cast<int>(blocks.size());
  const int n_nodes = n_blocks * static_cast<int>(n_utt);
  g.node_features = Mat(n_nodes, d);
  for (int b = 0; b < n_blocks; ++b) {
    g.node_features.middleRows(b * n_utt, n_utt) = blocks[static_cast<size_t>(b)].second;
    for (int i = 0; i < n_utt; ++i) {
      g.meta.push_back(NodeMeta{i, blocks[static_cast<size_t>(b)].first});
    }
  }

  g.adjacency = Mat::Zero(n_nodes, n_nodes);
  // intra-modality: complete graph within each block
  for (int b = 0; b < n_blocks; ++b) {
    const int off = b * static_cast<int>(n_utt);
    for (int i = 0; i < n_utt; ++i) {
      for (int j = i + 1; j < n_utt; ++j) {
        const Scalar w =
            angular_weight(g.node_features.row(off + i), g.node_features.row(off + j));
        g.adjacency(off + i, off + j) = w;
        g.adjacency(off + j, off + i) = w;
      }
    }
  }
  // cross-modality: same utterance across different blocks, gamma-scaled
  for (int b1 = 0; b1 < n_blocks; ++b1) {
    for (int b2 = b1 + 1; b2 < n_blocks; ++b2) {
      for (int i = 0; i < n_utt; ++i) {
        const int p = b1 * static_cast<int>(n_utt) + i;
        const int q = b2 * static_cast<int>(n_utt) + i;
        const Scalar w =
            gamma * angular_weight(g.node_features.row(p), g.node_features.row(q));
        g.adjacency(p, q) = w;
        g.adjacency(q, p) = w;
      }
    }
  }

  g.laplacian = renormalized_laplacian(g.adjacency);
  return g;
}

Mat renormalized_laplacian(const Mat& adjacency) {
  const Eigen::Index n = adjacency.rows();
  if (adjacency.cols() != n) throw ShapeError("renormalized_laplacian: matrix must be square");
  if (!adjacency.isApprox(adjacency.transpose(), 1e-12)) {
    throw ShapeError("renormalized_laplacian: adjacency must be symmetric");
  }
  if (adjacency.minCoeff() < 0.0) {
    throw NumericError("renormalized_laplacian: adjacency has negative weights");
  }
  Eigen::VectorXd inv_sqrt(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    inv_sqrt(i) = 1.0 / std::sqrt(adjacency.row(i).sum() + 1.0);
  }
  Mat p(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      const Scalar s = inv_sqrt(i) * inv_sqrt(j);
      const Scalar v = s * (adjacency(i, j) + (i == j ? 1.0 : 0.0));
      p(i, j) = v;
      p(j, i) = v;
    }
  }
  return p;
}

std::vector<HeatmapRow> export_adjacency_heatmap(const MultimodalGraph& graph, int utterance) {
  if (utterance < 0 || utterance >= graph.num_utterances) {
    throw Error("heatmap: utterance index " + std::to_string(utterance) + " outside dialogue of " +
                std::to_string(graph.num_utterances) + " utterances");
  }
  std::vector<HeatmapRow> rows;
  const int n_utt = graph.num_utterances;
  for (int b = 0; b < graph.block_count(); ++b) {
    const int off = b * n_utt;
    const Modality m = graph.meta[static_cast<size_t>(off)].modality;
    for (int j = 0; j < n_utt; ++j) {
      rows.push_back(HeatmapRow{m, j, graph.adjacency(off + utterance, off + j)});
    }
  }
  return rows;
}

std::string heatmap_csv(const std::vector<HeatmapRow>& rows) {
  std::string out = "modality,utterance_index,weight\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.9g", r.weight);
    out += modality_name(r.modality) + "," + std::to_string(r.other_utterance) + "," + buf + "\n";
  }
  return out;
}

}  // namespace mmgcn
