#include "sctkg/discriminator.hpp"

#include <sstream>

#include "sctkg/error.hpp"

namespace sctkg {

Discriminator::Discriminator(const DiscriminatorConfig& config, std::uint64_t init_seed)
    : config_(config) {
  if (config_.vocab < 4) throw ShapeError("Discriminator: vocabulary too small");
  if (config_.topic_count < 1) throw ShapeError("Discriminator: need at least one topic");
  if (config_.widths.empty()) throw ShapeError("Discriminator: no filter widths");
  for (int w : config_.widths) {
    if (w < 1 || w > config_.window) throw ShapeError("Discriminator: bad filter width");
  }
  emb_ = store_.add("word_emb", config_.d_w, config_.vocab);
  for (int w : config_.widths) {
    filters_.push_back(store_.add("conv" + std::to_string(w) + ".w", config_.n_filters,
                                  w * config_.d_w));
    filter_biases_.push_back(
        store_.add("conv" + std::to_string(w) + ".b", config_.n_filters, 1));
  }
  const int feat = config_.n_filters * static_cast<int>(config_.widths.size());
  out_w_ = store_.add("out.w", output_count(), feat);
  out_b_ = store_.add("out.b", output_count(), 1);

  Rng rng(init_seed);
  store_.init_uniform(rng, -0.08, 0.08);
}

std::string Discriminator::signature() const {
  std::ostringstream os;
  os << "discriminator;vocab=" << config_.vocab << ";d_w=" << config_.d_w
     << ";n_filters=" << config_.n_filters << ";window=" << config_.window
     << ";topics=" << config_.topic_count << ";fake=" << (config_.fake_class ? 1 : 0)
     << ";widths=";
  for (int w : config_.widths) os << w << ",";
  return os.str();
}

std::vector<int> Discriminator::pad_window(std::span<const int> token_ids) const {
  if (token_ids.empty()) {
    throw std::invalid_argument("Discriminator: empty token sequence");
  }
  std::vector<int> ids(token_ids.begin(), token_ids.end());
  if (static_cast<int>(ids.size()) > config_.window) {
    ids.resize(static_cast<std::size_t>(config_.window));
  }
  while (static_cast<int>(ids.size()) < config_.window) {
    ids.push_back(Vocabulary::kPad);
  }
  return ids;
}

ad::Var Discriminator::logits_t(ad::Tape& tape, std::span<const int> token_ids) {
  const std::vector<int> ids = pad_window(token_ids);
  const ad::Var table = tape.param(store_, emb_);
  const ad::Var embedded = tape.gather_cols(table, ids);  // d_w x window
  std::vector<ad::Var> pooled;
  pooled.reserve(config_.widths.size());
  for (std::size_t i = 0; i < config_.widths.size(); ++i) {
    const ad::Var windows = tape.im2col(embedded, config_.widths[i]);
    const ad::Var conv = tape.add_col_broadcast(
        tape.matmul(tape.param(store_, filters_[i]), windows),
        tape.param(store_, filter_biases_[i]));
    pooled.push_back(tape.max_cols(conv));
  }
  const ad::Var feat = tape.concat_rows(pooled);
  return tape.add(tape.matmul(tape.param(store_, out_w_), feat),
                  tape.param(store_, out_b_));
}

DiscriminatorOutput Discriminator::classify(std::span<const int> token_ids) {
  ad::Tape tape;
  const ad::Var scores = tape.sigmoid(logits_t(tape, token_ids));
  return {tape.value(scores)};
}

ad::Var Discriminator::batch_loss_t(ad::Tape& tape, std::span<const LabeledText> batch) {
  if (batch.empty()) throw std::invalid_argument("disc_loss: empty batch");
  std::vector<ad::Var> items;
  items.reserve(batch.size());
  for (const LabeledText& item : batch) {
    if (item.target.size() != output_count()) {
      throw ShapeError("disc_loss: target length must be " +
                       std::to_string(output_count()));
    }
    items.push_back(tape.bce_logits(logits_t(tape, item.token_ids), item.target));
  }
  const double scale =
      1.0 / (static_cast<double>(batch.size()) * static_cast<double>(output_count()));
  return tape.scale(tape.add_many(items), scale);
}

double Discriminator::disc_loss(std::span<const LabeledText> batch) {
  ad::Tape tape;
  return tape.value(batch_loss_t(tape, batch))(0, 0);
}

double Discriminator::disc_loss_backward(std::span<const LabeledText> batch) {
  ad::Tape tape;
  const ad::Var loss = batch_loss_t(tape, batch);
  tape.backward(loss);
  return tape.value(loss)(0, 0);
}

double topic_reward(const DiscriminatorOutput& out, std::span<const int> given_topics,
                    int topic_count, bool penalize_fake) {
  if (given_topics.empty()) {
    throw std::invalid_argument("topic_reward: empty topic list");
  }
  double total = 0.0;
  for (int idx : given_topics) {
    if (idx < 0 || idx >= topic_count) {
      throw std::out_of_range("topic_reward: topic index " + std::to_string(idx) +
                              " outside [0, " + std::to_string(topic_count) + ")");
    }
    total += out.scores(idx);
  }
  double reward = total / static_cast<double>(given_topics.size());
  if (penalize_fake) {
    reward -= out.scores(topic_count);
    if (reward < 0.0) reward = 0.0;
  }
  return reward;
}

}  // namespace sctkg
