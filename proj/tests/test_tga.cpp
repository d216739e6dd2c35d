#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "sctkg/rng.hpp"
#include "sctkg/error.hpp"
#include "sctkg/tga.hpp"
#include "test_util.hpp"
#include "tga_reference.hpp"

using namespace sctkg;

namespace {

GraphView make_view(std::vector<int> neighbors, std::vector<int> relations,
                    std::vector<PositionFlag> flags) {
  GraphView v;
  v.neighbor_ids = std::move(neighbors);
  v.relation_ids = std::move(relations);
  v.flags = std::move(flags);
  return v;
}

// Random instance shared by the oracle comparison and the acceptance suite.
struct RandomInstance {
  TGAWeights weights;
  Mat embeddings;
  GraphView view;
  Vec query;
};

RandomInstance random_instance(Rng& rng, int max_n, int max_dim) {
  const int d_q = 1 + rng.uniform_int(max_dim);
  const int d_a = 1 + rng.uniform_int(max_dim);
  const int d_r = 1 + rng.uniform_int(max_dim);
  const int d_e = 1 + rng.uniform_int(max_dim);
  const int n_rel = 1 + rng.uniform_int(3);
  const int n_vocab = 4 + rng.uniform_int(6);
  const int n = rng.uniform_int(max_n + 1);

  const auto fill = [&rng](Eigen::Index r, Eigen::Index c) {
    Mat m(r, c);
    for (Eigen::Index j = 0; j < c; ++j) {
      for (Eigen::Index i = 0; i < r; ++i) m(i, j) = rng.uniform(-1.5, 1.5);
    }
    return m;
  };
  RandomInstance inst;
  inst.weights.w1 = fill(d_a, d_q);
  inst.weights.w2 = fill(d_a, d_r);
  inst.weights.w3 = fill(d_a, d_e);
  inst.weights.w4 = fill(d_a, d_e);
  inst.weights.relation_table = fill(d_r, n_rel);
  inst.embeddings = fill(d_e, n_vocab);
  inst.query = fill(d_q, 1);
  for (int k = 0; k < n; ++k) {
    inst.view.neighbor_ids.push_back(rng.uniform_int(n_vocab));
    inst.view.relation_ids.push_back(rng.uniform_int(n_rel));
    inst.view.flags.push_back(rng.uniform_int(2) == 0 ? PositionFlag::kHeadNeighbor
                                                      : PositionFlag::kTailNeighbor);
  }
  return inst;
}

test::RefTGAInput to_reference(const RandomInstance& inst) {
  test::RefTGAInput ref;
  const auto rows = [](const Mat& m) {
    std::vector<std::vector<double>> out;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      std::vector<double> row;
      for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
      out.push_back(std::move(row));
    }
    return out;
  };
  const auto cols = [](const Mat& m) {
    std::vector<std::vector<double>> out;
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      std::vector<double> col;
      for (Eigen::Index i = 0; i < m.rows(); ++i) col.push_back(m(i, j));
      out.push_back(std::move(col));
    }
    return out;
  };
  for (Eigen::Index i = 0; i < inst.query.size(); ++i) ref.query.push_back(inst.query(i));
  ref.w1 = rows(inst.weights.w1);
  ref.w2 = rows(inst.weights.w2);
  ref.w3 = rows(inst.weights.w3);
  ref.w4 = rows(inst.weights.w4);
  ref.relations = cols(inst.weights.relation_table);
  ref.embeddings = cols(inst.embeddings);
  ref.neighbor_ids = inst.view.neighbor_ids;
  ref.relation_ids = inst.view.relation_ids;
  for (PositionFlag f : inst.view.flags) {
    ref.neighbor_is_head.push_back(f == PositionFlag::kHeadNeighbor);
  }
  return ref;
}

}  // namespace

TEST_CASE("zero projections give zero scores") {
  TGAWeights w;
  w.w1 = Mat::Ones(2, 3);
  w.w2 = Mat::Zero(2, 1);
  w.w3 = Mat::Zero(2, 2);
  w.w4 = Mat::Zero(2, 2);
  w.relation_table = Mat::Ones(1, 1);
  Mat emb = Mat::Ones(2, 5);
  const GraphView view = make_view({0, 3, 4}, {0, 0, 0},
                                   {PositionFlag::kHeadNeighbor,
                                    PositionFlag::kTailNeighbor,
                                    PositionFlag::kHeadNeighbor});
  const Vec betas = tga_scores(Vec::Ones(3), view, w, emb);
  REQUIRE(betas.size() == 3);
  CHECK(betas.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("one-dimensional score matches the hand-evaluated formula") {
  TGAWeights w;
  w.w1 = Mat::Ones(1, 1);
  w.w2 = Mat::Ones(1, 1);
  w.w3 = Mat::Ones(1, 1);
  w.w4 = Mat::Zero(1, 1);
  w.relation_table = Mat::Zero(1, 1);
  Mat emb(1, 5);
  emb << 0.0, 0.0, 0.0, 0.0, 0.5;
  const GraphView view = make_view({4}, {0}, {PositionFlag::kHeadNeighbor});
  const Vec betas = tga_scores(Vec::Ones(1), view, w, emb);
  REQUIRE(betas.size() == 1);
  // (1*1) * tanh(1*0 + 1*0.5)
  CHECK(betas(0) == doctest::Approx(std::tanh(0.5)).epsilon(1e-12));
  CHECK(betas(0) == doctest::Approx(0.4621171572600098).epsilon(1e-9));
}

TEST_CASE("head and tail slots are scored with different projections") {
  Rng rng(5);
  TGAWeights w;
  w.w1 = Mat::Ones(2, 2);
  w.w2 = Mat::Zero(2, 1);
  w.w3 = Mat(2, 2);
  w.w3 << 0.5, -0.2, 0.1, 0.7;
  w.w4 = Mat(2, 2);
  w.w4 << -0.3, 0.4, 0.6, -0.1;
  w.relation_table = Mat::Zero(1, 1);
  Mat emb(2, 5);
  for (int j = 0; j < 5; ++j) {
    emb(0, j) = rng.uniform(-1, 1);
    emb(1, j) = rng.uniform(-1, 1);
  }
  // The same (neighbor, relation) pair in both slots.
  const GraphView view = make_view({2, 2}, {0, 0},
                                   {PositionFlag::kHeadNeighbor,
                                    PositionFlag::kTailNeighbor});
  const Vec betas = tga_scores(Vec::Ones(2), view, w, emb);
  CHECK(betas(0) != betas(1));
}

TEST_CASE("a single neighbor takes all the attention") {
  Rng rng(7);
  const RandomInstance base = random_instance(rng, 0, 3);
  RandomInstance inst = base;
  inst.view = make_view({1}, {0}, {PositionFlag::kTailNeighbor});
  const TGAResult res = tga_attend(inst.query, inst.view, inst.weights, inst.embeddings);
  REQUIRE(res.alphas.size() == 1);
  CHECK(res.alphas(0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK((res.graph_vector - inst.embeddings.col(1)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("equal scores average the neighbors") {
  TGAWeights w;
  w.w1 = Mat::Ones(2, 2);
  w.w2 = Mat::Zero(2, 1);
  w.w3 = Mat::Zero(2, 3);
  w.w4 = Mat::Zero(2, 3);
  w.relation_table = Mat::Zero(1, 1);
  Mat emb(3, 4);
  emb << 1, 2, 3, 4, 0, -1, 1, 2, 5, 5, 5, 5;
  const GraphView view = make_view({0, 1, 3}, {0, 0, 0},
                                   {PositionFlag::kHeadNeighbor,
                                    PositionFlag::kTailNeighbor,
                                    PositionFlag::kHeadNeighbor});
  const TGAResult res = tga_attend(Vec::Ones(2), view, w, emb);
  for (int i = 0; i < 3; ++i) {
    CHECK(res.alphas(i) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }
  const Vec mean = (emb.col(0) + emb.col(1) + emb.col(3)) / 3.0;
  CHECK((res.graph_vector - mean).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("crafted scores of 0, ln2, ln4 weight neighbors 1:2:4") {
  // d_a = 1, W1 q = 2, relation embeddings chosen so tanh gives beta/2.
  TGAWeights w;
  w.w1 = Mat::Ones(1, 1) * 2.0;
  w.w2 = Mat::Ones(1, 1);
  w.w3 = Mat::Zero(1, 2);
  w.w4 = Mat::Zero(1, 2);
  w.relation_table = Mat(1, 3);
  w.relation_table << std::atanh(0.0), std::atanh(std::log(2.0) / 2.0),
      std::atanh(std::log(4.0) / 2.0);
  Mat emb(2, 3);
  emb << 1.0, 0.0, 2.0, 0.0, 1.0, -1.0;
  const GraphView view = make_view({0, 1, 2}, {0, 1, 2},
                                   {PositionFlag::kHeadNeighbor,
                                    PositionFlag::kHeadNeighbor,
                                    PositionFlag::kHeadNeighbor});
  const TGAResult res = tga_attend(Vec::Ones(1), view, w, emb);
  CHECK(res.betas(0) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(res.betas(1) == doctest::Approx(std::log(2.0)).epsilon(1e-9));
  CHECK(res.betas(2) == doctest::Approx(std::log(4.0)).epsilon(1e-9));
  CHECK(res.alphas(0) == doctest::Approx(1.0 / 7.0).epsilon(1e-9));
  CHECK(res.alphas(1) == doctest::Approx(2.0 / 7.0).epsilon(1e-9));
  CHECK(res.alphas(2) == doctest::Approx(4.0 / 7.0).epsilon(1e-9));
  const Vec expect = emb.col(0) / 7.0 + emb.col(1) * 2.0 / 7.0 + emb.col(2) * 4.0 / 7.0;
  CHECK((res.graph_vector - expect).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("an empty graph yields a zero graph vector") {
  Rng rng(9);
  RandomInstance inst = random_instance(rng, 0, 3);
  inst.view = GraphView{};
  const TGAResult res = tga_attend(inst.query, inst.view, inst.weights, inst.embeddings);
  CHECK(res.alphas.size() == 0);
  CHECK(res.betas.size() == 0);
  CHECK(res.graph_vector.size() == inst.embeddings.rows());
  CHECK(res.graph_vector.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("query dimension mismatches raise ShapeError") {
  Rng rng(11);
  RandomInstance inst = random_instance(rng, 2, 3);
  Vec bad_query(inst.weights.w1.cols() + 1);
  bad_query.setZero();
  CHECK_THROWS_AS(tga_scores(bad_query, inst.view, inst.weights, inst.embeddings),
                  ShapeError);
}

TEST_CASE("attention matches the straight-line reference on random instances") {
  Rng rng(13);
  int checked = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const RandomInstance inst = random_instance(rng, 5, 4);
    const TGAResult got = tga_attend(inst.query, inst.view, inst.weights, inst.embeddings);
    const test::RefTGAOutput want = test::ref_tga(to_reference(inst));
    REQUIRE(got.betas.size() == static_cast<int>(want.betas.size()));
    for (int i = 0; i < got.betas.size(); ++i) {
      CHECK(std::abs(got.betas(i) - want.betas[i]) < 1e-10);
      CHECK(std::abs(got.alphas(i) - want.alphas[i]) < 1e-10);
    }
    for (int i = 0; i < got.graph_vector.size(); ++i) {
      CHECK(std::abs(got.graph_vector(i) - want.graph_vector[i]) < 1e-10);
    }
    if (got.alphas.size() > 0) {
      CHECK(std::abs(got.alphas.sum() - 1.0) < 1e-6);
      ++checked;
    }
  }
  CHECK(checked > 10);
}

TEST_CASE("the graph vector stays in the neighbor convex hull") {
  Rng rng(17);
  for (int trial = 0; trial < 30; ++trial) {
    const RandomInstance inst = random_instance(rng, 5, 4);
    if (inst.view.size() == 0) continue;
    const TGAResult res = tga_attend(inst.query, inst.view, inst.weights, inst.embeddings);
    for (int d = 0; d < res.graph_vector.size(); ++d) {
      double lo = 1e300;
      double hi = -1e300;
      for (int k = 0; k < inst.view.size(); ++k) {
        const double v = inst.embeddings(d, inst.view.neighbor_ids[k]);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      CHECK(res.graph_vector(d) >= lo - 1e-9);
      CHECK(res.graph_vector(d) <= hi + 1e-9);
    }
  }
}

TEST_CASE("analytic gradients of |g|^2 match finite differences") {
  Rng rng(19);
  ParamStore store;
  const int d_q = 5, d_r = 3, d_e = 4, d_a = 3, n_rel = 2, n_vocab = 6;
  const TGAParamIds ids = register_tga_params(store, "tga", d_q, d_r, d_e, d_a, n_rel);
  const int emb_id = store.add("emb", d_e, n_vocab);
  const int query_id = store.add("q", d_q, 1);
  store.init_uniform(rng, -0.8, 0.8);

  GraphView view;
  view.neighbor_ids = {0, 2, 2, 5, 1};
  view.relation_ids = {0, 1, 0, 1, 0};
  view.flags = {PositionFlag::kHeadNeighbor, PositionFlag::kTailNeighbor,
                PositionFlag::kHeadNeighbor, PositionFlag::kTailNeighbor,
                PositionFlag::kHeadNeighbor};

  const auto build = [&](ad::Tape& tape) {
    const TGAVars out = tga_attend_t(tape, tape.param(store, query_id), view, ids, store,
                                     tape.param(store, emb_id), d_e);
    return tape.sum(tape.square(out.graph_vector));
  };
  store.zero_grads();
  ad::Tape tape;
  tape.backward(build(tape));
  const auto result = test::finite_diff_check(store, [&]() {
    ad::Tape t;
    return t.value(build(t))(0, 0);
  });
  INFO("worst: ", result.worst);
  CHECK(result.max_rel_err < 1e-3);
  CHECK(result.max_rel_err < 1e-6);  // double precision should do much better
}
