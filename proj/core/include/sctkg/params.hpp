#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "sctkg/rng.hpp"

namespace sctkg {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Named collection of trainable matrices with their gradient and Adam
// moment buffers. Vectors are stored as n-by-1 matrices. Entry order is
// the registration order and fixes every iteration order downstream, so
// training is bitwise reproducible.
class ParamStore {
 public:
  int add(const std::string& name, Eigen::Index rows, Eigen::Index cols);

  int find(const std::string& name) const;  // -1 when absent
  int count() const { return static_cast<int>(entries_.size()); }

  Mat& value(int id) { return entries_[static_cast<std::size_t>(id)].value; }
  const Mat& value(int id) const { return entries_[static_cast<std::size_t>(id)].value; }
  Mat& grad(int id) { return entries_[static_cast<std::size_t>(id)].grad; }
  const Mat& grad(int id) const { return entries_[static_cast<std::size_t>(id)].grad; }
  const std::string& name(int id) const { return entries_[static_cast<std::size_t>(id)].name; }

  // Fills every entry uniformly in [lo, hi], column-major within a matrix,
  // in registration order.
  void init_uniform(Rng& rng, double lo = -0.08, double hi = 0.08);

  void zero_grads();
  double grad_norm() const;  // global L2 norm over all entries

  // Scales all gradients so the global norm is at most max_norm.
  void clip_grads(double max_norm);

  // One Adam update over every entry. `t` is the 1-based step count used
  // for bias correction.
  void adam_step(double lr, long t, double beta1 = 0.9, double beta2 = 0.999,
                 double eps = 1e-8);

  // Clears the Adam moment buffers (fresh optimizer for a new stage).
  void reset_moments();

  // Name of the first entry containing a non-finite value or gradient;
  // empty when everything is finite.
  std::string first_nonfinite() const;

  // Deep copies of the values only (checkpoint selection).
  std::vector<Mat> snapshot_values() const;
  void restore_values(const std::vector<Mat>& values);

  // Checkpoint container round-trip; see checkpoint.hpp for the format.
  void save(const std::string& path, std::uint32_t config_hash) const;

  // Loads a checkpoint into existing entries, matched by name, with shape
  // validation. When expected_hash is nonzero the header hash must match.
  void load(const std::string& path, std::uint32_t expected_hash = 0);

 private:
  struct Entry {
    std::string name;
    Mat value, grad, m, v;
  };
  std::vector<Entry> entries_;
  std::map<std::string, int> by_name_;
};

}  // namespace sctkg
