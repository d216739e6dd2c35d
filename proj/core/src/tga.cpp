#include "sctkg/tga.hpp"

#include "sctkg/error.hpp"

namespace sctkg {

TGAParamIds register_tga_params(ParamStore& store, const std::string& prefix,
                                int d_q, int d_r, int d_e, int d_a,
                                int relation_count) {
  TGAParamIds ids;
  ids.w1 = store.add(prefix + ".w1", d_a, d_q);
  ids.w2 = store.add(prefix + ".w2", d_a, d_r);
  ids.w3 = store.add(prefix + ".w3", d_a, d_e);
  ids.w4 = store.add(prefix + ".w4", d_a, d_e);
  // Relations may be absent entirely (empty store); keep one row so the
  // parameter exists.
  ids.relation_table = store.add(prefix + ".relations", d_r,
                                 std::max(relation_count, 1));
  return ids;
}

TGAVars tga_attend_t(ad::Tape& tape, ad::Var query, const GraphView& view,
                     const TGAParamIds& ids, ParamStore& store, ad::Var word_table,
                     int d_e) {
  const ad::Var w1 = tape.param(store, ids.w1);
  if (tape.value(query).rows() != tape.value(w1).cols()) {
    throw ShapeError("tga: query dimension " +
                     std::to_string(tape.value(query).rows()) +
                     " does not match W1 columns " +
                     std::to_string(tape.value(w1).cols()));
  }
  const int n = view.size();
  if (n == 0) {
    TGAVars out;
    out.graph_vector = tape.zeros(d_e, 1);
    out.alphas = tape.input(Mat(0, 1));
    out.betas = tape.input(Mat(0, 1));
    return out;
  }

  const ad::Var neighbors = tape.gather_cols(word_table, view.neighbor_ids);  // d_e x N
  const ad::Var relations =
      tape.gather_cols(tape.param(store, ids.relation_table), view.relation_ids);

  // Zero out the opposite position's columns so each neighbor is projected
  // by exactly one of W3 / W4.
  Mat head_mask = Mat::Zero(d_e, n);
  Mat tail_mask = Mat::Zero(d_e, n);
  for (int k = 0; k < n; ++k) {
    if (view.flags[static_cast<std::size_t>(k)] == PositionFlag::kHeadNeighbor) {
      head_mask.col(k).setOnes();
    } else {
      tail_mask.col(k).setOnes();
    }
  }
  const ad::Var heads = tape.cmul(neighbors, tape.input(std::move(head_mask)));
  const ad::Var tails = tape.cmul(neighbors, tape.input(std::move(tail_mask)));

  const ad::Var pre = tape.add(
      tape.add(tape.matmul(tape.param(store, ids.w2), relations),
               tape.matmul(tape.param(store, ids.w3), heads)),
      tape.matmul(tape.param(store, ids.w4), tails));
  const ad::Var keys = tape.tanh(pre);                       // d_a x N
  const ad::Var projected_query = tape.matmul(w1, query);    // d_a x 1
  TGAVars out;
  out.betas = tape.matmul(tape.transpose(keys), projected_query);  // N x 1
  out.alphas = tape.softmax(out.betas);
  out.graph_vector = tape.matmul(neighbors, out.alphas);
  return out;
}

namespace {

// Builds a throwaway graph over caller-supplied weights so the plain entry
// points share the tape implementation.
TGAVars attend_on_scratch(ad::Tape& tape, ParamStore& store, const Vec& query,
                          const GraphView& view, const TGAWeights& weights,
                          const Mat& embeddings) {
  TGAParamIds ids;
  ids.w1 = store.add("w1", weights.w1.rows(), weights.w1.cols());
  ids.w2 = store.add("w2", weights.w2.rows(), weights.w2.cols());
  ids.w3 = store.add("w3", weights.w3.rows(), weights.w3.cols());
  ids.w4 = store.add("w4", weights.w4.rows(), weights.w4.cols());
  ids.relation_table =
      store.add("relations", weights.relation_table.rows(), weights.relation_table.cols());
  store.value(ids.w1) = weights.w1;
  store.value(ids.w2) = weights.w2;
  store.value(ids.w3) = weights.w3;
  store.value(ids.w4) = weights.w4;
  store.value(ids.relation_table) = weights.relation_table;
  const ad::Var table = tape.input(embeddings);
  const ad::Var q = tape.input(query);
  return tga_attend_t(tape, q, view, ids, store, table,
                      static_cast<int>(embeddings.rows()));
}

}  // namespace

Vec tga_scores(const Vec& query, const GraphView& view, const TGAWeights& weights,
               const Mat& embeddings) {
  ad::Tape tape;
  ParamStore store;
  const TGAVars vars = attend_on_scratch(tape, store, query, view, weights, embeddings);
  return tape.value(vars.betas);
}

TGAResult tga_attend(const Vec& query, const GraphView& view, const TGAWeights& weights,
                     const Mat& embeddings) {
  ad::Tape tape;
  ParamStore store;
  const TGAVars vars = attend_on_scratch(tape, store, query, view, weights, embeddings);
  TGAResult out;
  out.graph_vector = tape.value(vars.graph_vector);
  out.alphas = tape.value(vars.alphas);
  out.betas = tape.value(vars.betas);
  return out;
}

}  // namespace sctkg
