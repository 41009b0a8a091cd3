#include "mmgcn/fusion.hpp"

#include <cmath>

namespace mmgcn {

namespace {
const char* kPairNames[3] = {"av", "at", "vt"};
}

void add_gated_fusion_params(ParameterStore& store, int d, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  for (const char* pair : kPairNames) {
    const std::string prefix = std::string("fuse.") + pair + ".";
    store.add(prefix + "Wj", rng.uniform_mat(d, d, -bound, bound));
    store.add(prefix + "Wk", rng.uniform_mat(d, d, -bound, bound));
    store.add(prefix + "Wz", rng.uniform_mat(d, d, -bound, bound));
  }
}

Var gated_attention_fuse(Tape& tape, ParamBind& p, Var h_a, Var h_v, Var h_t) {
  (void)tape;
  const Var h[3] = {h_a, h_v, h_t};
  const int pair_idx[3][2] = {{0, 1}, {0, 2}, {1, 2}};  // (a,v), (a,t), (v,t)
  std::vector<Var> fused;
  for (int pi = 0; pi < 3; ++pi) {
    const std::string prefix = std::string("fuse.") + kPairNames[pi] + ".";
    Var hj = h[pair_idx[pi][0]];
    Var hk = h[pair_idx[pi][1]];
    Var rj = tanh(matmul(hj, p(prefix + "Wj")));
    Var rk = tanh(matmul(hk, p(prefix + "Wk")));
    Var z = sigmoid(matmul(hj, p(prefix + "Wz")));
    Var one_minus_z = affine_const(z, -1.0, 1.0);
    fused.push_back(add(hadamard(z, rj), hadamard(one_minus_z, rk)));
  }
  return concat_cols(fused);
}

}  // namespace mmgcn
