#include "sctkg/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>

#include <nlohmann/json.hpp>

#include "sctkg/error.hpp"

namespace sctkg {

using nlohmann::json;

double kl_anneal_weight(long step, long anneal_steps) {
  if (anneal_steps < 1) {
    throw std::invalid_argument("kl_anneal_weight: anneal_steps must be >= 1");
  }
  if (step < 0) throw std::invalid_argument("kl_anneal_weight: negative step");
  const double w = static_cast<double>(step) / static_cast<double>(anneal_steps);
  return w >= 1.0 ? 1.0 : w;
}

double bow_loss(const Vec& z, const Vec& c, std::span<const int> target_ids,
                GeneratorModel& model) {
  if (target_ids.empty()) throw std::invalid_argument("bow_loss: empty target");
  ad::Tape tape;
  const ad::Var logits = model.bow_logits_t(tape, tape.input(z), tape.input(c));
  return tape.value(tape.bag_nll(logits, target_ids))(0, 0);
}

PreparedExample prepare_example(const TrainingExample& example, const TripleStore& store,
                                const Vocabulary& vocab, int max_per_topic) {
  PreparedExample prep;
  prep.topic_ids = frame_with_bos_eos(vocab, example.topics);
  prep.context_ids.reserve(example.context.size());
  for (const auto& sentence : example.context) {
    prep.context_ids.push_back(frame_with_bos_eos(vocab, sentence));
  }
  prep.target_enc_ids = frame_with_bos_eos(vocab, example.target);
  for (const std::string& tok : example.target) {
    const int id = vocab.id(tok);
    prep.decode_targets.push_back(id);
    prep.bow_ids.push_back(id);
  }
  prep.decode_targets.push_back(Vocabulary::kEos);
  prep.sentiment = example.sentiment;
  prep.view = graph_view(build_topic_graph(store, example.topics, max_per_topic), vocab);
  return prep;
}

std::vector<PreparedExample> prepare_examples(std::span<const TrainingExample> examples,
                                              const TripleStore& store,
                                              const Vocabulary& vocab, int max_per_topic) {
  std::vector<PreparedExample> out;
  out.reserve(examples.size());
  for (const TrainingExample& ex : examples) {
    out.push_back(prepare_example(ex, store, vocab, max_per_topic));
  }
  return out;
}

namespace {

struct Stage1LossVars {
  ad::Var total, kl, rec, bow;
};

// Builds the batch loss graph; the caller decides whether to backprop.
// `rng` supplies the reparameterization noise and dropout masks, in a
// fixed per-example order.
Stage1LossVars build_stage1_loss(ad::Tape& tape, std::span<const PreparedExample> batch,
                                 const Stage1Config& config, GeneratorModel& model,
                                 double anneal, Rng& rng) {
  if (batch.empty()) throw std::invalid_argument("stage1 loss: empty batch");
  const ModelDims& dims = model.dims();
  std::vector<ad::Var> kls, recs, bows;
  kls.reserve(batch.size());
  recs.reserve(batch.size());
  bows.reserve(batch.size());
  for (const PreparedExample& ex : batch) {
    const ad::Var h_x = model.encode_utterance_t(tape, ex.topic_ids);
    std::vector<ad::Var> ctx;
    ctx.reserve(ex.context_ids.size());
    for (const auto& ids : ex.context_ids) {
      ctx.push_back(model.encode_utterance_t(tape, ids));
    }
    const ad::Var h_c = model.encode_context_t(tape, ctx);
    const ad::Var c = model.condition_t(tape, h_x, h_c, ex.sentiment);
    const ad::Var h_i = model.encode_utterance_t(tape, ex.target_enc_ids);
    const auto q = model.recognition_t(tape, h_i, c);
    const auto p = model.prior_t(tape, c);

    Vec noise(dims.d_z);
    for (int i = 0; i < dims.d_z; ++i) noise(i) = rng.normal();
    const ad::Var z = model.reparameterize_t(tape, q, noise);
    kls.push_back(model.kl_t(tape, q, p));

    ad::Var state = model.decoder_init_t(tape, z, c, ex.sentiment);
    int prev = Vocabulary::kBos;
    std::vector<ad::Var> ces;
    ces.reserve(ex.decode_targets.size());
    for (int target : ex.decode_targets) {
      Mat mask;
      const Mat* mask_ptr = nullptr;
      if (config.dropout_rate > 0.0) {
        mask = Mat(dims.d_model(), 1);
        const double keep = 1.0 - config.dropout_rate;
        for (Eigen::Index i = 0; i < mask.rows(); ++i) {
          mask(i, 0) = rng.uniform() < keep ? 1.0 / keep : 0.0;
        }
        mask_ptr = &mask;
      }
      const auto step = model.decode_step_t(tape, state, prev, z, c, ex.sentiment,
                                            ex.view, mask_ptr);
      state = step.state;
      ces.push_back(tape.cross_entropy_logits(step.logits, target));
      prev = target;  // teacher forcing
    }
    recs.push_back(tape.add_many(ces));
    if (!ex.bow_ids.empty()) {
      bows.push_back(tape.bag_nll(model.bow_logits_t(tape, z, c), ex.bow_ids));
    } else {
      bows.push_back(tape.zeros(1, 1));
    }
  }
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  Stage1LossVars out;
  out.kl = tape.scale(tape.add_many(kls), inv_b);
  out.rec = tape.scale(tape.add_many(recs), inv_b);
  out.bow = tape.scale(tape.add_many(bows), inv_b);
  out.total = tape.add(tape.add(tape.scale(out.kl, anneal), out.rec),
                       tape.scale(out.bow, config.bow_weight));
  return out;
}

void throw_if_nonfinite(const LossBreakdown& loss, const ParamStore& store) {
  if (std::isfinite(loss.total) && std::isfinite(loss.kl) &&
      std::isfinite(loss.reconstruction) && std::isfinite(loss.bow)) {
    return;
  }
  const std::string group = store.first_nonfinite();
  throw NonFiniteError(group.empty() ? "loss" : group);
}

}  // namespace

LossBreakdown stage1_step(std::span<const PreparedExample> batch, TrainState& state,
                          const Stage1Config& config, GeneratorModel& model) {
  const double anneal = kl_anneal_weight(state.step, config.kl_anneal_steps);
  ParamStore& store = model.params();
  store.zero_grads();
  ad::Tape tape;
  const Stage1LossVars vars =
      build_stage1_loss(tape, batch, config, model, anneal, state.rng);
  tape.backward(vars.total);

  LossBreakdown loss;
  loss.total = tape.value(vars.total)(0, 0);
  loss.kl = tape.value(vars.kl)(0, 0);
  loss.reconstruction = tape.value(vars.rec)(0, 0);
  loss.bow = tape.value(vars.bow)(0, 0);
  throw_if_nonfinite(loss, store);

  store.clip_grads(config.grad_clip_norm);
  ++state.step;
  store.adam_step(config.learning_rate, state.step);
  return loss;
}

double EvalStats::perplexity() const {
  return tokens == 0 ? 1.0 : std::exp(rec_sum / static_cast<double>(tokens));
}

double EvalStats::mean_elbo_loss() const {
  return examples == 0 ? 0.0 : (rec_sum + kl_sum) / static_cast<double>(examples);
}

EvalStats evaluate_teacher_forced(GeneratorModel& model,
                                  std::span<const PreparedExample> data) {
  EvalStats stats;
  for (const PreparedExample& ex : data) {
    ad::Tape tape;
    const ad::Var h_x = model.encode_utterance_t(tape, ex.topic_ids);
    std::vector<ad::Var> ctx;
    ctx.reserve(ex.context_ids.size());
    for (const auto& ids : ex.context_ids) {
      ctx.push_back(model.encode_utterance_t(tape, ids));
    }
    const ad::Var h_c = model.encode_context_t(tape, ctx);
    const ad::Var c = model.condition_t(tape, h_x, h_c, ex.sentiment);
    const ad::Var h_i = model.encode_utterance_t(tape, ex.target_enc_ids);
    const auto q = model.recognition_t(tape, h_i, c);
    const auto p = model.prior_t(tape, c);
    const ad::Var z = q.mu;  // noise-free reconstruction
    stats.kl_sum += tape.value(model.kl_t(tape, q, p))(0, 0);

    ad::Var state = model.decoder_init_t(tape, z, c, ex.sentiment);
    int prev = Vocabulary::kBos;
    for (int target : ex.decode_targets) {
      const auto step = model.decode_step_t(tape, state, prev, z, c, ex.sentiment, ex.view);
      state = step.state;
      stats.rec_sum += tape.value(tape.cross_entropy_logits(step.logits, target))(0, 0);
      prev = target;
    }
    stats.tokens += static_cast<long>(ex.decode_targets.size());
    ++stats.examples;
  }
  return stats;
}

long run_stage1(GeneratorModel& model, std::span<const TrainingExample> examples,
                const TripleStore& store, const Vocabulary& vocab, Stage1Config config,
                const Stage1RunOptions& options, TrainState& state) {
  if (examples.empty()) throw std::invalid_argument("run_stage1: no training examples");
  std::vector<PreparedExample> prepared =
      prepare_examples(examples, store, vocab, options.max_per_topic);

  state.rng = Rng(config.seed);
  std::vector<std::size_t> order(prepared.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  state.rng.shuffle(order);

  const std::size_t val_count = static_cast<std::size_t>(
      static_cast<double>(prepared.size()) * options.val_fraction);
  std::vector<PreparedExample> val;
  std::vector<PreparedExample> train;
  val.reserve(val_count);
  train.reserve(prepared.size() - val_count);
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i < val_count) {
      val.push_back(prepared[order[i]]);
    } else {
      train.push_back(prepared[order[i]]);
    }
  }
  if (train.empty()) {
    train = std::move(val);
    val.clear();
  }

  const long steps_per_epoch =
      (static_cast<long>(train.size()) + config.batch_size - 1) / config.batch_size;
  if (config.kl_anneal_steps <= 0) {
    config.kl_anneal_steps = std::max<long>(1, 2 * steps_per_epoch);
  }

  double best_val = std::numeric_limits<double>::infinity();
  std::vector<Mat> best_params;
  std::vector<std::size_t> idx(train.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    state.rng.shuffle(idx);
    for (std::size_t at = 0; at < idx.size(); at += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end =
          std::min(idx.size(), at + static_cast<std::size_t>(config.batch_size));
      std::vector<PreparedExample> batch;
      batch.reserve(end - at);
      for (std::size_t i = at; i < end; ++i) batch.push_back(train[idx[i]]);
      const double anneal = kl_anneal_weight(state.step, config.kl_anneal_steps);
      const LossBreakdown loss = stage1_step(batch, state, config, model);
      if (options.log != nullptr) {
        json line;
        line["step"] = state.step;
        line["total"] = loss.total;
        line["kl"] = loss.kl;
        line["rec"] = loss.reconstruction;
        line["bow"] = loss.bow;
        line["anneal"] = anneal;
        (*options.log) << line.dump() << "\n";
      }
    }
    if (!val.empty()) {
      const EvalStats stats = evaluate_teacher_forced(model, val);
      const double val_loss = stats.mean_elbo_loss();
      if (options.log != nullptr) {
        json line;
        line["epoch"] = epoch;
        line["val_loss"] = val_loss;
        line["val_ppl"] = stats.perplexity();
        (*options.log) << line.dump() << "\n";
      }
      if (val_loss < best_val) {
        best_val = val_loss;
        best_params = model.params().snapshot_values();
      }
    }
  }
  if (!best_params.empty()) {
    model.params().restore_values(best_params);
  }
  return state.step;
}

TopicLabels TopicLabels::from_corpus(std::span<const EssayRecord> records, int cap) {
  std::map<std::string, long> counts;
  for (const EssayRecord& rec : records) {
    for (const std::string& t : rec.topics) ++counts[t];
  }
  std::vector<std::pair<std::string, long>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  TopicLabels labels;
  for (const auto& [topic, n] : ranked) {
    if (static_cast<int>(labels.labels.size()) >= cap) break;
    labels.index.emplace(topic, static_cast<int>(labels.labels.size()));
    labels.labels.push_back(topic);
  }
  return labels;
}

std::vector<int> TopicLabels::indices_of(std::span<const std::string> topics) const {
  std::vector<int> out;
  for (const std::string& t : topics) {
    auto it = index.find(t);
    if (it != index.end()) out.push_back(it->second);
  }
  return out;
}

void TopicLabels::save(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write labels: " + path);
  for (const std::string& t : labels) out << t << "\n";
}

TopicLabels TopicLabels::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open labels: " + path);
  TopicLabels labels;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    labels.index.emplace(line, static_cast<int>(labels.labels.size()));
    labels.labels.push_back(line);
  }
  return labels;
}

std::vector<int> flatten_essay_ids(std::span<const std::vector<std::string>> sentences,
                                   const Vocabulary& vocab) {
  std::vector<int> ids;
  for (const auto& sentence : sentences) {
    for (const std::string& tok : sentence) ids.push_back(vocab.id(tok));
  }
  return ids;
}

namespace {

std::vector<Sentiment> random_sentiments(std::size_t n, Rng& rng) {
  std::vector<Sentiment> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(static_cast<Sentiment>(rng.uniform_int(kSentimentCount)));
  }
  return out;
}

// Sampled essay built on a shared tape so its token log-likelihoods can
// carry REINFORCE gradients.
struct SampledEssay {
  std::vector<std::vector<int>> sentence_ids;  // content tokens
  std::vector<ad::Var> ce_nodes;               // -log pi of each emission
  // Prefix snapshots for rollout rewards: state value after the emission,
  // the emitted token, the sentence index and the token count so far.
  struct Emission {
    Vec state_after;
    int token;
    std::size_t sentence;
  };
  std::vector<Emission> emissions;
  std::vector<Vec> z_values;  // one per sentence
  std::vector<Vec> c_values;
};

Vec softmax_value(const Vec& logits) {
  const double m = logits.maxCoeff();
  Vec e = (logits.array() - m).exp();
  return e / e.sum();
}

SampledEssay sample_essay_on_tape(ad::Tape& tape, GeneratorModel& model,
                                  const std::vector<int>& framed_topic_ids,
                                  const GraphView& view,
                                  std::span<const Sentiment> sentiments, int max_len,
                                  Rng& rng, bool record_emissions) {
  SampledEssay essay;
  const ad::Var h_x = model.encode_utterance_t(tape, framed_topic_ids);
  std::vector<ad::Var> context_vecs;
  for (Sentiment s : sentiments) {
    const ad::Var h_c = model.encode_context_t(tape, context_vecs);
    const ad::Var c = model.condition_t(tape, h_x, h_c, s);
    const auto prior = model.prior_t(tape, c);
    Vec noise(model.dims().d_z);
    for (int i = 0; i < noise.size(); ++i) noise(i) = rng.normal();
    const ad::Var z = model.reparameterize_t(tape, prior, noise);
    essay.z_values.push_back(tape.value(z));
    essay.c_values.push_back(tape.value(c));

    ad::Var state = model.decoder_init_t(tape, z, c, s);
    int prev = Vocabulary::kBos;
    std::vector<int> tokens;
    for (int t = 0; t < max_len; ++t) {
      const auto step = model.decode_step_t(tape, state, prev, z, c, s, view);
      state = step.state;
      const Vec probs = softmax_value(tape.value(step.logits));
      const int next = sample_index(probs, rng);
      essay.ce_nodes.push_back(tape.cross_entropy_logits(step.logits, next));
      if (record_emissions) {
        essay.emissions.push_back(
            {tape.value(state), next, essay.sentence_ids.size()});
      }
      if (next == Vocabulary::kEos) break;
      tokens.push_back(next);
      prev = next;
    }
    std::vector<int> framed;
    framed.push_back(Vocabulary::kBos);
    framed.insert(framed.end(), tokens.begin(), tokens.end());
    framed.push_back(Vocabulary::kEos);
    context_vecs.push_back(model.encode_utterance_t(tape, framed));
    essay.sentence_ids.push_back(std::move(tokens));
  }
  return essay;
}

std::vector<int> flatten_ids(const std::vector<std::vector<int>>& sentences) {
  std::vector<int> flat;
  for (const auto& s : sentences) flat.insert(flat.end(), s.begin(), s.end());
  return flat;
}

double reward_for_ids(Discriminator& disc, const std::vector<int>& flat_ids,
                      const std::vector<int>& topic_indices) {
  if (flat_ids.empty() || topic_indices.empty()) return 0.0;
  const DiscriminatorOutput out = disc.classify(flat_ids);
  return topic_reward(out, topic_indices, disc.config().topic_count);
}

// Value-level essay completion from a mid-generation snapshot; used for
// Monte Carlo rollout rewards.
std::vector<std::vector<int>> complete_rollout(
    GeneratorModel& model, const Vocabulary& vocab, const GraphView& view,
    const std::vector<int>& framed_topic_ids,
    const std::vector<std::vector<int>>& finished_sentences,
    const std::vector<int>& current_tokens, const Vec& state_after, int last_token,
    const Vec& z, const Vec& c, std::span<const Sentiment> sentiments,
    std::size_t sentence_index, int max_len, Rng& rng) {
  std::vector<std::vector<int>> sentences = finished_sentences;
  // Finish the in-flight sentence.
  std::vector<int> tokens = current_tokens;
  if (last_token != Vocabulary::kEos) {
    Vec state = state_after;
    int prev = last_token;
    while (static_cast<int>(tokens.size()) < max_len) {
      auto [next_state, probs] =
          model.decode_step(state, prev, z, c, sentiments[sentence_index], view);
      state = next_state;
      const int next = sample_index(probs, rng);
      if (next == Vocabulary::kEos) break;
      tokens.push_back(next);
      prev = next;
    }
  }
  sentences.push_back(tokens);

  // Remaining sentences from scratch, conditioned on everything so far.
  ad::Tape tape;
  const ad::Var h_x = model.encode_utterance_t(tape, framed_topic_ids);
  std::vector<ad::Var> context_vecs;
  for (const auto& sent : sentences) {
    std::vector<int> framed;
    framed.push_back(Vocabulary::kBos);
    framed.insert(framed.end(), sent.begin(), sent.end());
    framed.push_back(Vocabulary::kEos);
    context_vecs.push_back(model.encode_utterance_t(tape, framed));
  }
  for (std::size_t i = sentence_index + 1; i < sentiments.size(); ++i) {
    const ad::Var h_c = model.encode_context_t(tape, context_vecs);
    const ad::Var cv = model.condition_t(tape, h_x, h_c, sentiments[i]);
    const auto prior = model.prior_t(tape, cv);
    Vec noise(model.dims().d_z);
    for (int k = 0; k < noise.size(); ++k) noise(k) = rng.normal();
    const ad::Var zv = model.reparameterize_t(tape, prior, noise);
    ad::Var state = model.decoder_init_t(tape, zv, cv, sentiments[i]);
    int prev = Vocabulary::kBos;
    std::vector<int> tokens2;
    for (int t = 0; t < max_len; ++t) {
      const auto step = model.decode_step_t(tape, state, prev, zv, cv, sentiments[i], view);
      state = step.state;
      const Vec probs = softmax_value(tape.value(step.logits));
      const int next = sample_index(probs, rng);
      if (next == Vocabulary::kEos) break;
      tokens2.push_back(next);
      prev = next;
    }
    std::vector<int> framed;
    framed.push_back(Vocabulary::kBos);
    framed.insert(framed.end(), tokens2.begin(), tokens2.end());
    framed.push_back(Vocabulary::kEos);
    context_vecs.push_back(model.encode_utterance_t(tape, framed));
    sentences.push_back(std::move(tokens2));
  }
  (void)vocab;
  return sentences;
}

Vec real_target_vector(const std::vector<int>& topic_indices, int output_count) {
  Vec target = Vec::Zero(output_count);
  for (int idx : topic_indices) target(idx) = 1.0;
  return target;
}

Vec fake_target_vector(int output_count) {
  Vec target = Vec::Zero(output_count);
  target(output_count - 1) = 1.0;
  return target;
}

}  // namespace

Stage2Result stage2_round(std::span<const EssayRecord> real_records,
                          std::span<const PreparedExample> prepared_real,
                          TrainState& state, const Stage2Config& config,
                          const Stage1Config& stage1_config, GeneratorModel& model,
                          Discriminator& disc, const TripleStore& store,
                          const Vocabulary& vocab, const TopicLabels& labels,
                          int max_per_topic) {
  if (real_records.empty()) throw std::invalid_argument("stage2_round: no real data");
  Stage2Result result;
  std::vector<std::vector<int>> generated_pool;  // flattened essays for d-steps
  std::vector<double> round_rewards;

  for (int g = 0; g < config.g_steps; ++g) {
    ParamStore& params = model.params();
    params.zero_grads();
    ad::Tape tape;
    struct PendingEssay {
      std::vector<ad::Var> ce_nodes;
      std::vector<double> per_emission_rewards;  // empty in sequence mode
      double reward = 0.0;
      bool usable = false;
    };
    std::vector<PendingEssay> pending;
    pending.reserve(static_cast<std::size_t>(config.g_batch));

    for (int b = 0; b < config.g_batch; ++b) {
      const EssayRecord& rec =
          real_records[state.data_cursor % real_records.size()];
      ++state.data_cursor;
      const std::vector<int> topic_indices = labels.indices_of(rec.topics);
      const std::vector<Sentiment> sentiments =
          random_sentiments(rec.sentences.size(), state.rng);
      const GraphView view =
          graph_view(build_topic_graph(store, rec.topics, max_per_topic), vocab);
      const std::vector<int> framed_topics = frame_with_bos_eos(vocab, rec.topics);

      const bool mc = config.rollout_mode == RolloutMode::kMcRollout;
      SampledEssay essay = sample_essay_on_tape(tape, model, framed_topics, view,
                                                sentiments, config.max_len, state.rng, mc);
      const std::vector<int> flat = flatten_ids(essay.sentence_ids);
      PendingEssay item;
      item.ce_nodes = essay.ce_nodes;
      if (topic_indices.empty() || flat.empty()) {
        pending.push_back(std::move(item));
        continue;
      }
      item.usable = true;
      item.reward = reward_for_ids(disc, flat, topic_indices);
      round_rewards.push_back(item.reward);

      if (mc) {
        item.per_emission_rewards.reserve(essay.emissions.size());
        std::vector<std::vector<int>> finished;
        std::vector<int> current;
        std::size_t emission_index = 0;
        for (const auto& em : essay.emissions) {
          double sum = 0.0;
          for (int k = 0; k < config.mc_rollouts; ++k) {
            const auto completed = complete_rollout(
                model, vocab, view, framed_topics, finished, current, em.state_after,
                em.token, essay.z_values[em.sentence], essay.c_values[em.sentence],
                sentiments, em.sentence, config.max_len, state.rng);
            sum += reward_for_ids(disc, flatten_ids(completed), topic_indices);
          }
          item.per_emission_rewards.push_back(sum /
                                              static_cast<double>(config.mc_rollouts));
          // Advance the prefix bookkeeping.
          if (em.token == Vocabulary::kEos) {
            finished.push_back(current);
            current.clear();
          } else {
            current.push_back(em.token);
          }
          ++emission_index;
        }
      }
      generated_pool.push_back(flat);
      pending.push_back(std::move(item));
    }

    double batch_mean = 0.0;
    int usable = 0;
    for (const auto& p : pending) {
      if (p.usable) {
        batch_mean += p.reward;
        ++usable;
      }
    }
    if (usable > 0) batch_mean /= usable;
    if (!state.baseline_ready && usable > 0) {
      state.baseline = batch_mean;
      state.baseline_ready = true;
    }

    std::vector<ad::Var> essay_losses;
    for (const auto& p : pending) {
      if (!p.usable || p.ce_nodes.empty()) continue;
      if (!p.per_emission_rewards.empty()) {
        std::vector<ad::Var> weighted;
        weighted.reserve(p.ce_nodes.size());
        for (std::size_t i = 0; i < p.ce_nodes.size(); ++i) {
          weighted.push_back(
              tape.scale(p.ce_nodes[i], p.per_emission_rewards[i] - state.baseline));
        }
        essay_losses.push_back(tape.add_many(weighted));
      } else {
        essay_losses.push_back(
            tape.scale(tape.add_many(p.ce_nodes), p.reward - state.baseline));
      }
    }

    double g_loss_value = 0.0;
    if (!essay_losses.empty()) {
      ad::Var g_loss = tape.scale(tape.add_many(essay_losses),
                                  1.0 / static_cast<double>(essay_losses.size()));
      if (config.mix_lambda > 0.0 && !prepared_real.empty()) {
        std::vector<PreparedExample> mix_batch;
        for (int i = 0; i < std::min<int>(config.g_batch,
                                          static_cast<int>(prepared_real.size()));
             ++i) {
          mix_batch.push_back(
              prepared_real[static_cast<std::size_t>(state.rng.uniform_int(
                  static_cast<int>(prepared_real.size())))]);
        }
        const auto cvae = build_stage1_loss(tape, mix_batch, stage1_config, model, 1.0,
                                            state.rng);
        g_loss = tape.add(g_loss, tape.scale(cvae.total, config.mix_lambda));
      }
      tape.backward(g_loss);
      g_loss_value = tape.value(g_loss)(0, 0);
      if (!std::isfinite(g_loss_value)) {
        const std::string group = params.first_nonfinite();
        throw NonFiniteError(group.empty() ? "loss" : group);
      }
      params.clip_grads(config.grad_clip_norm);
      ++state.g_step;
      params.adam_step(config.learning_rate, state.g_step);
    }
    result.g_loss = g_loss_value;

    if (usable > 0) {
      state.baseline = config.baseline_decay * state.baseline +
                       (1.0 - config.baseline_decay) * batch_mean;
    }
  }

  // Discriminator turns on mixed real/generated batches.
  std::size_t pool_cursor = 0;
  for (int d = 0; d < config.d_steps; ++d) {
    std::vector<Discriminator::LabeledText> batch;
    const int half = std::max(1, config.d_batch / 2);
    for (int i = 0; i < half; ++i) {
      const EssayRecord& rec = real_records[state.data_cursor % real_records.size()];
      ++state.data_cursor;
      Discriminator::LabeledText item;
      item.token_ids = flatten_essay_ids(rec.sentences, vocab);
      if (item.token_ids.empty()) continue;
      item.target =
          real_target_vector(labels.indices_of(rec.topics), disc.output_count());
      batch.push_back(std::move(item));
    }
    for (int i = 0; i < half; ++i) {
      if (generated_pool.empty()) {
        // Top up with fresh no-grad samples from the current generator.
        const EssayRecord& rec = real_records[state.data_cursor % real_records.size()];
        ++state.data_cursor;
        GeneratorModel::GenerateOptions opt;
        opt.max_len = config.max_len;
        opt.max_per_topic = max_per_topic;
        opt.sample_tokens = true;
        const auto sentences = model.generate_essay(
            rec.topics, random_sentiments(rec.sentences.size(), state.rng), store, vocab,
            opt, state.rng);
        generated_pool.push_back(flatten_essay_ids(sentences, vocab));
      }
      const std::vector<int>& flat = generated_pool[pool_cursor % generated_pool.size()];
      ++pool_cursor;
      if (flat.empty()) continue;
      Discriminator::LabeledText item;
      item.token_ids = flat;
      item.target = fake_target_vector(disc.output_count());
      batch.push_back(std::move(item));
    }
    if (batch.empty()) continue;
    disc.params().zero_grads();
    result.d_loss = disc.disc_loss_backward(batch);
    disc.params().clip_grads(config.grad_clip_norm);
    ++state.d_step;
    disc.params().adam_step(config.d_learning_rate, state.d_step);
  }

  if (!round_rewards.empty()) {
    double sum = 0.0;
    for (double r : round_rewards) sum += r;
    result.mean_reward = sum / static_cast<double>(round_rewards.size());
  }
  return result;
}

void run_stage2(GeneratorModel& model, Discriminator& disc,
                std::span<const EssayRecord> records, const TripleStore& store,
                const Vocabulary& vocab, const TopicLabels& labels, Stage2Config config,
                const Stage1Config& stage1_config, const Stage2RunOptions& options,
                TrainState& state) {
  if (records.empty()) throw std::invalid_argument("run_stage2: no real data");
  state.rng = Rng(config.seed);
  state.g_step = 0;
  state.d_step = 0;
  state.baseline_ready = false;
  model.params().reset_moments();

  std::vector<PreparedExample> prepared_real;
  if (config.mix_lambda > 0.0) {
    const std::vector<TrainingExample> examples = make_examples(records);
    prepared_real = prepare_examples(examples, store, vocab, options.max_per_topic);
  }

  // Discriminator warm-up against the frozen generator.
  const int pretrain_steps = config.d_steps * 5;
  for (int i = 0; i < pretrain_steps; ++i) {
    std::vector<Discriminator::LabeledText> batch;
    const int half = std::max(1, config.d_batch / 2);
    for (int k = 0; k < half; ++k) {
      const EssayRecord& rec = records[state.data_cursor % records.size()];
      ++state.data_cursor;
      Discriminator::LabeledText item;
      item.token_ids = flatten_essay_ids(rec.sentences, vocab);
      if (item.token_ids.empty()) continue;
      item.target = real_target_vector(labels.indices_of(rec.topics), disc.output_count());
      batch.push_back(std::move(item));
    }
    for (int k = 0; k < half; ++k) {
      const EssayRecord& rec = records[state.data_cursor % records.size()];
      ++state.data_cursor;
      GeneratorModel::GenerateOptions opt;
      opt.max_len = config.max_len;
      opt.max_per_topic = options.max_per_topic;
      opt.sample_tokens = true;
      const auto sentences = model.generate_essay(
          rec.topics, random_sentiments(rec.sentences.size(), state.rng), store, vocab,
          opt, state.rng);
      const std::vector<int> flat = flatten_essay_ids(sentences, vocab);
      if (flat.empty()) continue;
      Discriminator::LabeledText item;
      item.token_ids = flat;
      item.target = fake_target_vector(disc.output_count());
      batch.push_back(std::move(item));
    }
    if (batch.empty()) continue;
    disc.params().zero_grads();
    const double loss = disc.disc_loss_backward(batch);
    disc.params().clip_grads(config.grad_clip_norm);
    ++state.d_step;
    disc.params().adam_step(config.d_learning_rate, state.d_step);
    if (options.log != nullptr) {
      json line;
      line["d_pretrain_step"] = i;
      line["d_loss"] = loss;
      (*options.log) << line.dump() << "\n";
    }
  }

  for (int round = 0; round < config.rounds; ++round) {
    const Stage2Result r =
        stage2_round(records, prepared_real, state, config, stage1_config, model, disc,
                     store, vocab, labels, options.max_per_topic);
    if (options.log != nullptr) {
      json line;
      line["round"] = round;
      line["g_loss"] = r.g_loss;
      line["d_loss"] = r.d_loss;
      line["reward"] = r.mean_reward;
      line["baseline"] = state.baseline;
      (*options.log) << line.dump() << "\n";
    }
  }
}

}  // namespace sctkg
