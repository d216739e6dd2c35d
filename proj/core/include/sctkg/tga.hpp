#pragma once

#include <Eigen/Dense>

#include "sctkg/autodiff.hpp"
#include "sctkg/kg.hpp"
#include "sctkg/params.hpp"

namespace sctkg {

// Topic graph attention. Each retrieved triple is scored against a query
// with position-aware projections:
//
//   beta_n  = (W1 q)^T tanh(W2 r_n + W3 o_n)   neighbor in the head slot
//   beta_n  = (W1 q)^T tanh(W2 r_n + W4 o_n)   neighbor in the tail slot
//   alpha   = softmax(beta)
//   g       = sum_n alpha_n o_n
//
// o_n are columns of the shared word-embedding table, r_n rows of a
// trainable relation table. An empty graph yields a zero graph vector.

// Parameter ids inside a ParamStore, registered by register_tga_params.
struct TGAParamIds {
  int w1 = -1;             // d_a x d_q  (query projection)
  int w2 = -1;             // d_a x d_r  (relation projection)
  int w3 = -1;             // d_a x d_e  (head-position neighbors)
  int w4 = -1;             // d_a x d_e  (tail-position neighbors)
  int relation_table = -1; // d_r x R
};

TGAParamIds register_tga_params(ParamStore& store, const std::string& prefix,
                                int d_q, int d_r, int d_e, int d_a,
                                int relation_count);

struct TGAVars {
  ad::Var graph_vector;  // d_e x 1
  ad::Var alphas;        // N x 1 (0 x 1 when the graph is empty)
  ad::Var betas;         // N x 1
};

// Tape form used inside the decoder; gradients flow into every weight,
// the relation table and the word-embedding table.
TGAVars tga_attend_t(ad::Tape& tape, ad::Var query, const GraphView& view,
                     const TGAParamIds& ids, ParamStore& store, ad::Var word_table,
                     int d_e);

// Plain weight matrices for direct calls (tests, inspection).
struct TGAWeights {
  Mat w1, w2, w3, w4;
  Mat relation_table;  // d_r x R
};

struct TGAResult {
  Vec graph_vector;
  Vec alphas;
  Vec betas;
};

// Raw correlation scores beta. `embeddings` is the d_e x |V| word table.
Vec tga_scores(const Vec& query, const GraphView& view, const TGAWeights& weights,
               const Mat& embeddings);

// Full attention: scores, softmax weights and the weighted neighbor sum.
TGAResult tga_attend(const Vec& query, const GraphView& view, const TGAWeights& weights,
                     const Mat& embeddings);

}  // namespace sctkg
