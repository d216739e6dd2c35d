#pragma once

#include <span>
#include <string>
#include <vector>

#include "sctkg/autodiff.hpp"
#include "sctkg/corpus.hpp"
#include "sctkg/params.hpp"
#include "sctkg/rng.hpp"

namespace sctkg {

struct DiscriminatorConfig {
  int vocab = 0;
  int d_w = 64;
  int n_filters = 32;
  std::vector<int> widths = {2, 3, 4};
  int window = 128;         // inputs are padded / truncated to this length
  int topic_count = 0;      // m
  bool fake_class = true;   // adds the (m+1)-th generated-text output
};

// Independent sigmoid scores, one per topic label and (optionally) one
// trailing generated-text score. They do not sum to 1.
struct DiscriminatorOutput {
  Vec scores;
};

// Kim-style convolutional text classifier: embeddings (its own table,
// independent of the generator's), max-pooled convolutions over the
// configured widths, affine map, elementwise sigmoid.
class Discriminator {
 public:
  Discriminator(const DiscriminatorConfig& config, std::uint64_t init_seed);

  const DiscriminatorConfig& config() const { return config_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  int output_count() const {
    return config_.topic_count + (config_.fake_class ? 1 : 0);
  }
  int fake_index() const { return config_.topic_count; }
  std::string signature() const;

  // Logits over outputs for one padded/truncated token sequence.
  ad::Var logits_t(ad::Tape& tape, std::span<const int> token_ids);

  DiscriminatorOutput classify(std::span<const int> token_ids);

  // Mean binary cross-entropy over all outputs and batch items. Targets
  // must be {0,1} vectors of length output_count().
  struct LabeledText {
    std::vector<int> token_ids;
    Vec target;
  };
  double disc_loss(std::span<const LabeledText> batch);
  // Same, but also backpropagates into the parameter gradients.
  double disc_loss_backward(std::span<const LabeledText> batch);

 private:
  DiscriminatorConfig config_;
  ParamStore store_;
  int emb_;
  std::vector<int> filters_, filter_biases_;  // one per width
  int out_w_, out_b_;

  std::vector<int> pad_window(std::span<const int> token_ids) const;
  ad::Var batch_loss_t(ad::Tape& tape, std::span<const LabeledText> batch);
};

// Mean of the given topic scores; the fake-class score is not part of the
// reward unless penalize_fake subtracts it.
double topic_reward(const DiscriminatorOutput& out, std::span<const int> given_topics,
                    int topic_count, bool penalize_fake = false);

}  // namespace sctkg
