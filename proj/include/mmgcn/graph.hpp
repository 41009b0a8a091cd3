#pragma once

#include <string>
#include <vector>

#include "mmgcn/common.hpp"

namespace mmgcn {

enum class Modality { Audio, Visual, Text, Fused };

std::string modality_name(Modality m);

// Which of the three modalities participate in a run. Parsed from strings
// like "avt", "at", "t".
struct ModalityMask {
  bool a = true;
  bool v = true;
  bool t = true;

  static ModalityMask parse(const std::string& s);
  std::string str() const;
  int count() const { return (a ? 1 : 0) + (v ? 1 : 0) + (t ? 1 : 0); }
  std::vector<Modality> active() const;
  bool operator==(const ModalityMask&) const = default;
};

struct NodeMeta {
  int utterance = 0;
  Modality modality = Modality::Text;
};

// Dialogue graph over per-utterance modality nodes. Node rows are
// modality-major (all nodes of the first active modality, then the next).
// The adjacency keeps a zero diagonal; self-loops enter the Laplacian via
// its +I term.
struct MultimodalGraph {
  Mat node_features;            // (blocks * N) x d
  std::vector<NodeMeta> meta;   // one entry per node row
  Mat adjacency;
  Mat laplacian;
  int num_utterances = 0;

  int num_nodes() const { return static_cast<int>(meta.size()); }
  int block_count() const;
  int node_index(Modality m, int utterance) const;  // -1 when absent
};

// Angular similarity weight in [0, 1]: 1 - arccos(cos_sim) / pi. Cosine is
// clamped to [-1, 1] and snapped to +-1 within 1e-12 so exactly parallel and
// antiparallel inputs hit the endpoints; a zero vector has cosine 0.
Scalar angular_weight(const Eigen::Ref<const Eigen::RowVectorXd>& a,
                      const Eigen::Ref<const Eigen::RowVectorXd>& b);

// Builds the graph from one feature block per active modality (each N x d,
// row i = utterance i). Same-modality nodes form a complete graph weighted by
// angular similarity; nodes of the same utterance in different modalities are
// linked with the gamma-scaled weight.
MultimodalGraph build_graph(const std::vector<std::pair<Modality, Mat>>& blocks, Scalar gamma);

// (D + I)^(-1/2) (A + I) (D + I)^(-1/2) with D = diag of row sums of A.
// Computed coefficient-wise so the result is exactly symmetric.
Mat renormalized_laplacian(const Mat& adjacency);

struct HeatmapRow {
  Modality modality;
  int other_utterance;
  Scalar weight;
};

// Adjacency row of one utterance restricted to same-modality columns, for
// every active modality. Feeds the heatmap CSV export.
std::vector<HeatmapRow> export_adjacency_heatmap(const MultimodalGraph& graph, int utterance);

std::string heatmap_csv(const std::vector<HeatmapRow>& rows);

}  // namespace mmgcn
