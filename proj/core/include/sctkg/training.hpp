#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "sctkg/corpus.hpp"
#include "sctkg/discriminator.hpp"
#include "sctkg/generator.hpp"
#include "sctkg/kg.hpp"
#include "sctkg/rng.hpp"

namespace sctkg {

struct Stage1Config {
  double learning_rate = 1e-3;
  int batch_size = 64;
  int epochs = 10;
  // 0 resolves to two epochs' worth of steps when a run starts.
  long kl_anneal_steps = 0;
  double bow_weight = 1.0;
  double grad_clip_norm = 10.0;
  double dropout_rate = 0.2;
  std::uint64_t seed = 1;
};

enum class RolloutMode { kSequenceReward, kMcRollout };

struct Stage2Config {
  double learning_rate = 1e-5;    // generator policy-gradient rate
  double d_learning_rate = 1e-3;  // discriminator rate
  int g_steps = 1;
  int d_steps = 1;
  int rounds = 200;
  RolloutMode rollout_mode = RolloutMode::kSequenceReward;
  double baseline_decay = 0.95;
  int g_batch = 8;
  int d_batch = 16;
  double grad_clip_norm = 10.0;
  // Weight of the CVAE loss mixed into generator updates (0 = pure policy
  // gradient).
  double mix_lambda = 0.0;
  int mc_rollouts = 4;
  int max_len = 20;
  std::uint64_t seed = 2;
};

struct TrainState {
  long step = 0;    // stage-1 optimizer steps
  long g_step = 0;  // stage-2 generator updates
  long d_step = 0;  // discriminator updates
  double baseline = 0.0;
  bool baseline_ready = false;
  std::size_t data_cursor = 0;
  Rng rng{0};
};

struct LossBreakdown {
  double total = 0.0;
  double kl = 0.0;
  double reconstruction = 0.0;
  double bow = 0.0;
};

// min(1, step / anneal_steps); steps count optimizer updates so far.
double kl_anneal_weight(long step, long anneal_steps);

// Sum over target tokens of -log p_bow(token | z, c) under the auxiliary
// bag-of-words softmax. Target is the sentence's content tokens, EOS
// excluded, and must be non-empty.
double bow_loss(const Vec& z, const Vec& c, std::span<const int> target_ids,
                GeneratorModel& model);

// TrainingExample with everything resolved to ids and the topic graph
// pre-retrieved, so epochs do not repeat the lookups.
struct PreparedExample {
  std::vector<int> topic_ids;                 // framed with BOS/EOS
  std::vector<std::vector<int>> context_ids;  // each framed
  std::vector<int> target_enc_ids;            // framed, for the recognition input
  std::vector<int> decode_targets;            // content ids then EOS
  std::vector<int> bow_ids;                   // content ids only
  Sentiment sentiment = Sentiment::kNeutral;
  GraphView view;
};

PreparedExample prepare_example(const TrainingExample& example, const TripleStore& store,
                                const Vocabulary& vocab, int max_per_topic);
std::vector<PreparedExample> prepare_examples(std::span<const TrainingExample> examples,
                                              const TripleStore& store,
                                              const Vocabulary& vocab, int max_per_topic);

// One optimizer step of the stage-1 objective
//   anneal * KL + reconstruction + bow_weight * BOW
// over a teacher-forced batch; gradients are clipped to grad_clip_norm
// before the Adam update. Throws NonFiniteError when the loss leaves the
// reals. Requires kl_anneal_steps >= 1 (run_stage1 resolves the default).
LossBreakdown stage1_step(std::span<const PreparedExample> batch, TrainState& state,
                          const Stage1Config& config, GeneratorModel& model);

// Teacher-forced evaluation without updates (no dropout, z at the
// recognition mean).
struct EvalStats {
  double rec_sum = 0.0;
  double kl_sum = 0.0;
  long tokens = 0;
  long examples = 0;

  double perplexity() const;
  double mean_elbo_loss() const;  // (rec + kl) / examples
};
EvalStats evaluate_teacher_forced(GeneratorModel& model,
                                  std::span<const PreparedExample> data);

// Full stage-1 run: seeded shuffle, 10% validation split, epoch loop with
// JSONL logging, best-validation parameter selection. Returns the number
// of optimizer steps taken.
struct Stage1RunOptions {
  int max_per_topic = 8;
  double val_fraction = 0.1;
  std::ostream* log = nullptr;
};
long run_stage1(GeneratorModel& model, std::span<const TrainingExample> examples,
                const TripleStore& store, const Vocabulary& vocab, Stage1Config config,
                const Stage1RunOptions& options, TrainState& state);

// Maps topic tokens to dense discriminator label indices: the `cap` most
// frequent topics, ties broken lexicographically.
struct TopicLabels {
  std::vector<std::string> labels;
  std::unordered_map<std::string, int> index;

  static TopicLabels from_corpus(std::span<const EssayRecord> records, int cap);
  int count() const { return static_cast<int>(labels.size()); }
  // Label indices of a topic list (topics outside the label set dropped).
  std::vector<int> indices_of(std::span<const std::string> topics) const;

  void save(const std::string& path) const;
  static TopicLabels load(const std::string& path);
};

std::vector<int> flatten_essay_ids(std::span<const std::vector<std::string>> sentences,
                                   const Vocabulary& vocab);

struct Stage2Result {
  double g_loss = 0.0;
  double d_loss = 0.0;
  double mean_reward = 0.0;
};

// One adversarial round: g_steps REINFORCE updates of the generator using
// the discriminator's topic coverage as reward (advantage against an
// exponential-moving-average baseline), then d_steps discriminator updates
// on mixed real/generated batches.
Stage2Result stage2_round(std::span<const EssayRecord> real_records,
                          std::span<const PreparedExample> prepared_real,
                          TrainState& state, const Stage2Config& config,
                          const Stage1Config& stage1_config, GeneratorModel& model,
                          Discriminator& disc, const TripleStore& store,
                          const Vocabulary& vocab, const TopicLabels& labels,
                          int max_per_topic);

// Driver: discriminator pre-training (d_steps * 5 steps on the frozen
// generator), then `rounds` adversarial rounds with JSONL logging.
struct Stage2RunOptions {
  int max_per_topic = 8;
  std::ostream* log = nullptr;
};
void run_stage2(GeneratorModel& model, Discriminator& disc,
                std::span<const EssayRecord> records, const TripleStore& store,
                const Vocabulary& vocab, const TopicLabels& labels, Stage2Config config,
                const Stage1Config& stage1_config, const Stage2RunOptions& options,
                TrainState& state);

}  // namespace sctkg
