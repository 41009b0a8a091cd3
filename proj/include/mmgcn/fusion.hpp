#pragma once

#include "mmgcn/optim.hpp"

namespace mmgcn {

// Parameters for the pairwise gated-attention fusion: one (W_j, W_k, W_z)
// triple per ordered modality pair av, at, vt, all d x d.
void add_gated_fusion_params(ParameterStore& store, int d, Rng& rng);

// Pairwise gated fusion of the three GCN-encoded modality matrices
// (each N x d). For a pair (m_j, m_k):
//   r_j = tanh(h_j W_j), r_k = tanh(h_k W_k), z = sigmoid(h_j W_z),
//   r_(j,k) = z .* r_j + (1 - z) .* r_k
// and the result concatenates r_(a,v), r_(a,t), r_(v,t) to N x 3d.
Var gated_attention_fuse(Tape& tape, ParamBind& p, Var h_a, Var h_v, Var h_t);

}  // namespace mmgcn
