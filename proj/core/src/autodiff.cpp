#include "sctkg/autodiff.hpp"

#include <cmath>
#include <stdexcept>

#include "sctkg/error.hpp"

namespace sctkg::ad {

namespace {

void check_same_shape(const Mat& a, const Mat& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch (" +
                     std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                     " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()) + ")");
  }
}

}  // namespace

int Tape::push(Mat value) {
  const int id = static_cast<int>(nodes_.size());
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return id;
}

Mat& Tape::acc(int id) {
  Node& n = node(id);
  if (!n.has_grad) {
    n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    n.has_grad = true;
  }
  return n.grad;
}

Var Tape::input(Mat value) { return {this, push(std::move(value))}; }

Var Tape::zeros(Eigen::Index rows, Eigen::Index cols) {
  return input(Mat::Zero(rows, cols));
}

Var Tape::param(ParamStore& store, int param_id) {
  const auto key = std::make_pair(&store, param_id);
  auto it = param_cache_.find(key);
  if (it != param_cache_.end()) return {this, it->second};
  const int id = push(store.value(param_id));
  node(id).param_id = param_id;
  node(id).store = &store;
  param_cache_.emplace(key, id);
  return {this, id};
}

Var Tape::add(Var a, Var b) {
  check_same_shape(value(a), value(b), "add");
  const int id = push(value(a) + value(b));
  node(id).back = [pa = a.id, pb = b.id](Tape& t, int self) {
    const Mat& g = t.node(self).grad;
    t.acc(pa) += g;
    t.acc(pb) += g;
  };
  return {this, id};
}

Var Tape::sub(Var a, Var b) {
  check_same_shape(value(a), value(b), "sub");
  const int id = push(value(a) - value(b));
  node(id).back = [pa = a.id, pb = b.id](Tape& t, int self) {
    const Mat& g = t.node(self).grad;
    t.acc(pa) += g;
    t.acc(pb) -= g;
  };
  return {this, id};
}

Var Tape::cmul(Var a, Var b) {
  check_same_shape(value(a), value(b), "cmul");
  const int id = push(value(a).cwiseProduct(value(b)));
  node(id).back = [pa = a.id, pb = b.id](Tape& t, int self) {
    const Mat& g = t.node(self).grad;
    t.acc(pa) += g.cwiseProduct(t.node(pb).value);
    t.acc(pb) += g.cwiseProduct(t.node(pa).value);
  };
  return {this, id};
}

Var Tape::scale(Var a, double k) {
  const int id = push(value(a) * k);
  node(id).back = [pa = a.id, k](Tape& t, int self) {
    t.acc(pa) += k * t.node(self).grad;
  };
  return {this, id};
}

Var Tape::add_scalar(Var a, double k) {
  const int id = push(value(a).array() + k);
  node(id).back = [pa = a.id](Tape& t, int self) {
    t.acc(pa) += t.node(self).grad;
  };
  return {this, id};
}

Var Tape::tanh(Var a) {
  const int id = push(value(a).array().tanh());
  node(id).back = [pa = a.id](Tape& t, int self) {
    const Node& n = t.node(self);
    t.acc(pa).array() +=
        n.grad.array() * (1.0 - n.value.array() * n.value.array());
  };
  return {this, id};
}

Var Tape::sigmoid(Var a) {
  const int id = push((1.0 / (1.0 + (-value(a).array()).exp())).matrix());
  node(id).back = [pa = a.id](Tape& t, int self) {
    const Node& n = t.node(self);
    t.acc(pa).array() += n.grad.array() * n.value.array() * (1.0 - n.value.array());
  };
  return {this, id};
}

Var Tape::exp(Var a) {
  const int id = push(value(a).array().exp().matrix());
  node(id).back = [pa = a.id](Tape& t, int self) {
    const Node& n = t.node(self);
    t.acc(pa).array() += n.grad.array() * n.value.array();
  };
  return {this, id};
}

Var Tape::square(Var a) {
  const int id = push(value(a).cwiseProduct(value(a)));
  node(id).back = [pa = a.id](Tape& t, int self) {
    t.acc(pa) += 2.0 * t.node(self).grad.cwiseProduct(t.node(pa).value);
  };
  return {this, id};
}

Var Tape::matmul(Var a, Var b) {
  const Mat& va = value(a);
  const Mat& vb = value(b);
  if (va.cols() != vb.rows()) {
    throw ShapeError("matmul: inner dimensions " + std::to_string(va.cols()) +
                     " and " + std::to_string(vb.rows()) + " differ");
  }
  const int id = push(va * vb);
  node(id).back = [pa = a.id, pb = b.id](Tape& t, int self) {
    const Mat& g = t.node(self).grad;
    t.acc(pa).noalias() += g * t.node(pb).value.transpose();
    t.acc(pb).noalias() += t.node(pa).value.transpose() * g;
  };
  return {this, id};
}

Var Tape::transpose(Var a) {
  const int id = push(value(a).transpose());
  node(id).back = [pa = a.id](Tape& t, int self) {
    t.acc(pa) += t.node(self).grad.transpose();
  };
  return {this, id};
}

Var Tape::concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no parts");
  Eigen::Index rows = 0;
  const Eigen::Index cols = value(parts[0]).cols();
  for (const Var& p : parts) {
    if (value(p).cols() != cols) throw ShapeError("concat_rows: column mismatch");
    rows += value(p).rows();
  }
  Mat out(rows, cols);
  Eigen::Index at = 0;
  std::vector<int> ids;
  std::vector<Eigen::Index> sizes;
  ids.reserve(parts.size());
  sizes.reserve(parts.size());
  for (const Var& p : parts) {
    const Mat& v = value(p);
    out.middleRows(at, v.rows()) = v;
    ids.push_back(p.id);
    sizes.push_back(v.rows());
    at += v.rows();
  }
  const int id = push(std::move(out));
  node(id).back = [ids, sizes](Tape& t, int self) {
    const Mat& g = t.node(self).grad;
    Eigen::Index at2 = 0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      t.acc(ids[i]) += g.middleRows(at2, sizes[i]);
      at2 += sizes[i];
    }
  };
  return {this, id};
}

Var Tape::rows(Var a, Eigen::Index start, Eigen::Index n) {
  const Mat& v = value(a);
  if (start < 0 || n < 0 || start + n > v.rows()) {
    throw ShapeError("rows: slice out of range");
  }
  const int id = push(v.middleRows(start, n));
  node(id).back = [pa = a.id, start, n](Tape& t, int self) {
    t.acc(pa).middleRows(start, n) += t.node(self).grad;
  };
  return {this, id};
}

Var Tape::col(Var table, int index) {
  const Mat& v = value(table);
  if (index < 0 || index >= v.cols()) throw ShapeError("col: index out of range");
  const int id = push(v.col(index));
  node(id).back = [pt = table.id, index](Tape& t, int self) {
    t.acc(pt).col(index) += t.node(self).grad;
  };
  return {this, id};
}

Var Tape::gather_cols(Var table, std::span<const int> ids) {
  const Mat& v = value(table);
  Mat out(v.rows(), static_cast<Eigen::Index>(ids.size()));
  for (std::size_t k = 0; k < ids.size(); ++k) {
    if (ids[k] < 0 || ids[k] >= v.cols()) {
      throw ShapeError("gather_cols: index out of range");
    }
    out.col(static_cast<Eigen::Index>(k)) = v.col(ids[k]);
  }
  const int id = push(std::move(out));
  node(id).back = [pt = table.id, idx = std::vector<int>(ids.begin(), ids.end())](
                      Tape& t, int self) {
    const Mat& g = t.node(self).grad;
    Mat& tg = t.acc(pt);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      tg.col(idx[k]) += g.col(static_cast<Eigen::Index>(k));
    }
  };
  return {this, id};
}

Var Tape::im2col(Var a, int width) {
  const Mat& v = value(a);
  if (width < 1 || width > v.cols()) throw ShapeError("im2col: bad window width");
  const Eigen::Index d = v.rows();
  const Eigen::Index positions = v.cols() - width + 1;
  Mat out(d * width, positions);
  for (Eigen::Index p = 0; p < positions; ++p) {
    for (int j = 0; j < width; ++j) {
      out.col(p).segment(j * d, d) = v.col(p + j);
    }
  }
  const int id = push(std::move(out));
  node(id).back = [pa = a.id, width, d, positions](Tape& t, int self) {
    const Mat& g = t.node(self).grad;
    Mat& ag = t.acc(pa);
    for (Eigen::Index p = 0; p < positions; ++p) {
      for (int j = 0; j < width; ++j) {
        ag.col(p + j) += g.col(p).segment(j * d, d);
      }
    }
  };
  return {this, id};
}

Var Tape::add_col_broadcast(Var m, Var colvec) {
  const Mat& vm = value(m);
  const Mat& vb = value(colvec);
  if (vb.cols() != 1 || vb.rows() != vm.rows()) {
    throw ShapeError("add_col_broadcast: bias must be rows(m) x 1");
  }
  const int id = push(vm.colwise() + vb.col(0));
  node(id).back = [pm = m.id, pb = colvec.id](Tape& t, int self) {
    const Mat& g = t.node(self).grad;
    t.acc(pm) += g;
    t.acc(pb) += g.rowwise().sum();
  };
  return {this, id};
}

Var Tape::max_cols(Var m) {
  const Mat& v = value(m);
  if (v.cols() < 1) throw ShapeError("max_cols: empty input");
  Mat out(v.rows(), 1);
  std::vector<Eigen::Index> arg(static_cast<std::size_t>(v.rows()));
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < v.cols(); ++c) {
      if (v(r, c) > v(r, best)) best = c;
    }
    arg[static_cast<std::size_t>(r)] = best;
    out(r, 0) = v(r, best);
  }
  const int id = push(std::move(out));
  node(id).back = [pm = m.id, arg](Tape& t, int self) {
    const Mat& g = t.node(self).grad;
    Mat& mg = t.acc(pm);
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      mg(r, arg[static_cast<std::size_t>(r)]) += g(r, 0);
    }
  };
  return {this, id};
}

Var Tape::sum(Var a) {
  Mat out(1, 1);
  out(0, 0) = value(a).sum();
  const int id = push(std::move(out));
  node(id).back = [pa = a.id](Tape& t, int self) {
    t.acc(pa).array() += t.node(self).grad(0, 0);
  };
  return {this, id};
}

Var Tape::add_many(std::span<const Var> terms) {
  if (terms.empty()) throw ShapeError("add_many: no terms");
  Mat out = value(terms[0]);
  for (std::size_t i = 1; i < terms.size(); ++i) {
    check_same_shape(out, value(terms[i]), "add_many");
    out += value(terms[i]);
  }
  std::vector<int> ids;
  ids.reserve(terms.size());
  for (const Var& v : terms) ids.push_back(v.id);
  const int id = push(std::move(out));
  node(id).back = [ids](Tape& t, int self) {
    const Mat& g = t.node(self).grad;
    for (int pid : ids) t.acc(pid) += g;
  };
  return {this, id};
}

Var Tape::softmax(Var v) {
  const Mat& x = value(v);
  if (x.cols() != 1) throw ShapeError("softmax: expected a column vector");
  const double m = x.maxCoeff();
  Mat e = (x.array() - m).exp();
  e /= e.sum();
  const int id = push(std::move(e));
  node(id).back = [pv = v.id](Tape& t, int self) {
    const Node& n = t.node(self);
    const double dot = (n.value.array() * n.grad.array()).sum();
    t.acc(pv).array() += n.value.array() * (n.grad.array() - dot);
  };
  return {this, id};
}

Var Tape::cross_entropy_logits(Var logits, int target) {
  const Mat& x = value(logits);
  if (x.cols() != 1) throw ShapeError("cross_entropy_logits: expected a column vector");
  if (target < 0 || target >= x.rows()) {
    throw ShapeError("cross_entropy_logits: target out of range");
  }
  const double m = x.maxCoeff();
  const double lse = m + std::log((x.array() - m).exp().sum());
  Mat out(1, 1);
  out(0, 0) = lse - x(target, 0);
  const int id = push(std::move(out));
  node(id).back = [pl = logits.id, target](Tape& t, int self) {
    const double g = t.node(self).grad(0, 0);
    const Mat& x2 = t.node(pl).value;
    const double m2 = x2.maxCoeff();
    Eigen::ArrayXd e = (x2.array() - m2).exp();
    e /= e.sum();
    Mat& lg = t.acc(pl);
    lg.array() += g * e;
    lg(target, 0) -= g;
  };
  return {this, id};
}

Var Tape::bag_nll(Var logits, std::span<const int> targets) {
  const Mat& x = value(logits);
  if (x.cols() != 1) throw ShapeError("bag_nll: expected a column vector");
  if (targets.empty()) throw ShapeError("bag_nll: empty target bag");
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(x.rows());
  for (int tgt : targets) {
    if (tgt < 0 || tgt >= x.rows()) throw ShapeError("bag_nll: target out of range");
    counts(tgt) += 1.0;
  }
  const double total = static_cast<double>(targets.size());
  const double m = x.maxCoeff();
  const double lse = m + std::log((x.array() - m).exp().sum());
  Mat out(1, 1);
  out(0, 0) = total * lse - (counts.array() * x.col(0).array()).sum();
  const int id = push(std::move(out));
  node(id).back = [pl = logits.id, counts, total](Tape& t, int self) {
    const double g = t.node(self).grad(0, 0);
    const Mat& x2 = t.node(pl).value;
    const double m2 = x2.maxCoeff();
    Eigen::ArrayXd e = (x2.array() - m2).exp();
    e /= e.sum();
    t.acc(pl).col(0).array() += g * (total * e - counts.array());
  };
  return {this, id};
}

Var Tape::bce_logits(Var logits, const Mat& targets) {
  const Mat& x = value(logits);
  check_same_shape(x, targets, "bce_logits");
  for (Eigen::Index i = 0; i < targets.size(); ++i) {
    const double y = targets(i);
    if (y != 0.0 && y != 1.0) throw ShapeError("bce_logits: targets must be 0 or 1");
  }
  const auto xa = x.array();
  const auto ya = targets.array();
  const double loss =
      (xa.max(0.0) - xa * ya + (1.0 + (-xa.abs()).exp()).log()).sum();
  Mat out(1, 1);
  out(0, 0) = loss;
  const int id = push(std::move(out));
  node(id).back = [pl = logits.id, targets](Tape& t, int self) {
    const double g = t.node(self).grad(0, 0);
    const Mat& x2 = t.node(pl).value;
    const Mat sig = (1.0 / (1.0 + (-x2.array()).exp())).matrix();
    t.acc(pl) += g * (sig - targets);
  };
  return {this, id};
}

const Mat& Tape::value(Var v) const {
  if (v.tape != this) throw std::logic_error("Var does not belong to this tape");
  return node(v.id).value;
}

void Tape::backward(Var root) {
  if (root.tape != this) throw std::logic_error("backward: foreign Var");
  const Mat& rv = value(root);
  if (rv.rows() != 1 || rv.cols() != 1) {
    throw ShapeError("backward: root must be a 1x1 scalar");
  }
  acc(root.id)(0, 0) += 1.0;
  for (int i = root.id; i >= 0; --i) {
    Node& n = node(i);
    if (!n.has_grad) continue;
    if (n.back) n.back(*this, i);
    if (n.param_id >= 0) n.store->grad(n.param_id) += n.grad;
  }
}

Mat Tape::grad(Var v) const {
  const Node& n = node(v.id);
  if (!n.has_grad) return Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::clear() {
  nodes_.clear();
  param_cache_.clear();
}

}  // namespace sctkg::ad
