#include "sctkg/params.hpp"

#include <cmath>

#include "sctkg/checkpoint.hpp"
#include "sctkg/error.hpp"

namespace sctkg {

int ParamStore::add(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
  if (by_name_.count(name) != 0) {
    throw std::logic_error("duplicate parameter name: " + name);
  }
  Entry e;
  e.name = name;
  e.value = Mat::Zero(rows, cols);
  e.grad = Mat::Zero(rows, cols);
  e.m = Mat::Zero(rows, cols);
  e.v = Mat::Zero(rows, cols);
  const int id = static_cast<int>(entries_.size());
  entries_.push_back(std::move(e));
  by_name_.emplace(name, id);
  return id;
}

int ParamStore::find(const std::string& name) const {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? -1 : it->second;
}

void ParamStore::init_uniform(Rng& rng, double lo, double hi) {
  for (Entry& e : entries_) {
    for (Eigen::Index c = 0; c < e.value.cols(); ++c) {
      for (Eigen::Index r = 0; r < e.value.rows(); ++r) {
        e.value(r, c) = rng.uniform(lo, hi);
      }
    }
  }
}

void ParamStore::zero_grads() {
  for (Entry& e : entries_) e.grad.setZero();
}

double ParamStore::grad_norm() const {
  double sq = 0.0;
  for (const Entry& e : entries_) sq += e.grad.squaredNorm();
  return std::sqrt(sq);
}

void ParamStore::clip_grads(double max_norm) {
  const double norm = grad_norm();
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (Entry& e : entries_) e.grad *= s;
  }
}

void ParamStore::adam_step(double lr, long t, double beta1, double beta2, double eps) {
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (Entry& e : entries_) {
    e.m = beta1 * e.m + (1.0 - beta1) * e.grad;
    e.v = beta2 * e.v + (1.0 - beta2) * e.grad.cwiseProduct(e.grad);
    const Mat m_hat = e.m / bc1;
    const Mat v_hat = e.v / bc2;
    e.value.array() -= lr * m_hat.array() / (v_hat.array().sqrt() + eps);
  }
}

void ParamStore::reset_moments() {
  for (Entry& e : entries_) {
    e.m.setZero();
    e.v.setZero();
  }
}

std::string ParamStore::first_nonfinite() const {
  for (const Entry& e : entries_) {
    if (!e.value.allFinite() || !e.grad.allFinite()) return e.name;
  }
  return {};
}

std::vector<Mat> ParamStore::snapshot_values() const {
  std::vector<Mat> out;
  out.reserve(entries_.size());
  for (const Entry& e : entries_) out.push_back(e.value);
  return out;
}

void ParamStore::restore_values(const std::vector<Mat>& values) {
  if (values.size() != entries_.size()) {
    throw ShapeError("restore_values: entry count mismatch");
  }
  for (std::size_t i = 0; i < values.size(); ++i) entries_[i].value = values[i];
}

void ParamStore::save(const std::string& path, std::uint32_t config_hash) const {
  std::vector<NamedArray> arrays;
  arrays.reserve(entries_.size());
  for (const Entry& e : entries_) {
    NamedArray a;
    a.name = e.name;
    a.dims = {static_cast<std::uint32_t>(e.value.rows()),
              static_cast<std::uint32_t>(e.value.cols())};
    a.values.reserve(static_cast<std::size_t>(e.value.size()));
    for (Eigen::Index c = 0; c < e.value.cols(); ++c) {
      for (Eigen::Index r = 0; r < e.value.rows(); ++r) {
        a.values.push_back(static_cast<float>(e.value(r, c)));
      }
    }
    arrays.push_back(std::move(a));
  }
  write_checkpoint(path, arrays, config_hash);
}

void ParamStore::load(const std::string& path, std::uint32_t expected_hash) {
  CheckpointHeader hdr;
  const std::vector<NamedArray> arrays = read_checkpoint(path, &hdr);
  if (expected_hash != 0 && hdr.config_hash != expected_hash) {
    throw std::runtime_error("checkpoint config hash mismatch for " + path);
  }
  for (const NamedArray& a : arrays) {
    const int id = find(a.name);
    if (id < 0) {
      throw std::runtime_error("checkpoint entry '" + a.name +
                               "' has no matching parameter");
    }
    Mat& dst = value(id);
    if (a.dims.size() != 2 ||
        static_cast<Eigen::Index>(a.dims[0]) != dst.rows() ||
        static_cast<Eigen::Index>(a.dims[1]) != dst.cols()) {
      throw ShapeError("checkpoint entry '" + a.name + "' shape mismatch");
    }
    std::size_t k = 0;
    for (Eigen::Index c = 0; c < dst.cols(); ++c) {
      for (Eigen::Index r = 0; r < dst.rows(); ++r) {
        dst(r, c) = static_cast<double>(a.values[k++]);
      }
    }
  }
}

}  // namespace sctkg
