#include "sctkg/generator.hpp"

#include <cmath>
#include <sstream>

#include "sctkg/error.hpp"

namespace sctkg {

std::vector<int> frame_with_bos_eos(const Vocabulary& vocab,
                                    std::span<const std::string> tokens) {
  std::vector<int> ids;
  ids.reserve(tokens.size() + 2);
  ids.push_back(Vocabulary::kBos);
  for (const std::string& t : tokens) ids.push_back(vocab.id(t));
  ids.push_back(Vocabulary::kEos);
  return ids;
}

GruParamIds register_gru(ParamStore& store, const std::string& prefix, int input_dim,
                         int hidden_dim) {
  GruParamIds ids;
  ids.w_r = store.add(prefix + ".w_r", hidden_dim, input_dim);
  ids.u_r = store.add(prefix + ".u_r", hidden_dim, hidden_dim);
  ids.b_r = store.add(prefix + ".b_r", hidden_dim, 1);
  ids.w_u = store.add(prefix + ".w_u", hidden_dim, input_dim);
  ids.u_u = store.add(prefix + ".u_u", hidden_dim, hidden_dim);
  ids.b_u = store.add(prefix + ".b_u", hidden_dim, 1);
  ids.w_n = store.add(prefix + ".w_n", hidden_dim, input_dim);
  ids.u_n = store.add(prefix + ".u_n", hidden_dim, hidden_dim);
  ids.b_n = store.add(prefix + ".b_n", hidden_dim, 1);
  return ids;
}

ad::Var gru_step_t(ad::Tape& tape, const GruParamIds& ids, ParamStore& store, ad::Var x,
                   ad::Var h_prev) {
  const auto affine = [&](int w, int u, int b, ad::Var hx, ad::Var hh) {
    return tape.add(tape.add(tape.matmul(tape.param(store, w), hx),
                             tape.matmul(tape.param(store, u), hh)),
                    tape.param(store, b));
  };
  const ad::Var r = tape.sigmoid(affine(ids.w_r, ids.u_r, ids.b_r, x, h_prev));
  const ad::Var u = tape.sigmoid(affine(ids.w_u, ids.u_u, ids.b_u, x, h_prev));
  const ad::Var gated = tape.cmul(r, h_prev);
  const ad::Var n = tape.tanh(affine(ids.w_n, ids.u_n, ids.b_n, x, gated));
  // h' = (1 - u) .* n + u .* h
  const ad::Var one_minus_u = tape.add_scalar(tape.scale(u, -1.0), 1.0);
  return tape.add(tape.cmul(one_minus_u, n), tape.cmul(u, h_prev));
}

GeneratorModel::GeneratorModel(const ModelDims& dims, int relation_count,
                               const AblationFlags& flags, std::uint64_t init_seed)
    : dims_(dims), flags_(flags), relation_count_(relation_count) {
  if (dims.vocab < 4) throw ShapeError("GeneratorModel: vocabulary too small");
  word_emb_ = store_.add("word_emb", dims.d_w, dims.vocab);
  senti_emb_ = store_.add("senti_emb", dims.d_s, kSentimentCount);
  utt_fwd_ = register_gru(store_, "utt_fwd", dims.d_w, dims.enc_hidden);
  utt_bwd_ = register_gru(store_, "utt_bwd", dims.d_w, dims.enc_hidden);
  ctx_ = register_gru(store_, "ctx", dims.d(), dims.d());
  dec_ = register_gru(store_, "dec", dims.d_w, dims.dec_hidden);

  const int rec_in = dims.d() + dims.cond_dim();
  const int mlp_hidden = 2 * dims.d_z;
  rec_w1_ = store_.add("rec.w1", mlp_hidden, rec_in);
  rec_b1_ = store_.add("rec.b1", mlp_hidden, 1);
  rec_w2_ = store_.add("rec.w2", 2 * dims.d_z, mlp_hidden);
  rec_b2_ = store_.add("rec.b2", 2 * dims.d_z, 1);
  prior_w1_ = store_.add("prior.w1", mlp_hidden, dims.cond_dim());
  prior_b1_ = store_.add("prior.b1", mlp_hidden, 1);
  prior_w2_ = store_.add("prior.w2", 2 * dims.d_z, mlp_hidden);
  prior_b2_ = store_.add("prior.b2", 2 * dims.d_z, 1);

  dec_init_w_ = store_.add("dec_init.w", dims.dec_hidden,
                           dims.d_z + dims.cond_dim() + dims.d_s);
  dec_init_b_ = store_.add("dec_init.b", dims.dec_hidden, 1);
  out_w_ = store_.add("out.w", dims.vocab, dims.d_model());
  out_b_ = store_.add("out.b", dims.vocab, 1);
  bow_w1_ = store_.add("bow.w1", dims.d_z, dims.d_z + dims.cond_dim());
  bow_b1_ = store_.add("bow.b1", dims.d_z, 1);
  bow_w2_ = store_.add("bow.w2", dims.vocab, dims.d_z);
  bow_b2_ = store_.add("bow.b2", dims.vocab, 1);
  tga_ = register_tga_params(store_, "tga", dims.query_dim(), dims.d_r, dims.d_w,
                             dims.d_a, relation_count);

  Rng rng(init_seed);
  store_.init_uniform(rng, -0.08, 0.08);
}

std::string GeneratorModel::signature() const {
  std::ostringstream os;
  os << "generator;vocab=" << dims_.vocab << ";d_w=" << dims_.d_w
     << ";d_s=" << dims_.d_s << ";enc_hidden=" << dims_.enc_hidden
     << ";d_z=" << dims_.d_z << ";dec_hidden=" << dims_.dec_hidden
     << ";d_a=" << dims_.d_a << ";d_r=" << dims_.d_r
     << ";relations=" << relation_count_
     << ";enc_senti=" << (flags_.enc_sentiment ? 1 : 0)
     << ";dec_senti=" << (flags_.dec_sentiment ? 1 : 0);
  return os.str();
}

ad::Var GeneratorModel::word_table(ad::Tape& tape) {
  return tape.param(store_, word_emb_);
}

ad::Var GeneratorModel::sentiment_vec_t(ad::Tape& tape, Sentiment s, bool enabled) {
  if (!enabled) return tape.zeros(dims_.d_s, 1);
  return tape.col(tape.param(store_, senti_emb_), static_cast<int>(s));
}

ad::Var GeneratorModel::encode_utterance_t(ad::Tape& tape,
                                           std::span<const int> token_ids) {
  if (token_ids.empty()) {
    throw ShapeError("encode_utterance: empty token sequence");
  }
  const ad::Var table = word_table(tape);
  ad::Var fwd = tape.zeros(dims_.enc_hidden, 1);
  for (int id : token_ids) {
    fwd = gru_step_t(tape, utt_fwd_, store_, tape.col(table, id), fwd);
  }
  ad::Var bwd = tape.zeros(dims_.enc_hidden, 1);
  for (auto it = token_ids.rbegin(); it != token_ids.rend(); ++it) {
    bwd = gru_step_t(tape, utt_bwd_, store_, tape.col(table, *it), bwd);
  }
  const ad::Var parts[] = {fwd, bwd};
  return tape.concat_rows(parts);
}

ad::Var GeneratorModel::encode_context_t(ad::Tape& tape,
                                         std::span<const ad::Var> sentence_vecs) {
  ad::Var h = tape.zeros(dims_.d(), 1);
  for (const ad::Var& v : sentence_vecs) {
    h = gru_step_t(tape, ctx_, store_, v, h);
  }
  return h;
}

ad::Var GeneratorModel::condition_t(ad::Tape& tape, ad::Var h_topics, ad::Var h_context,
                                    Sentiment s) {
  const ad::Var e_s = sentiment_vec_t(tape, s, flags_.enc_sentiment);
  const ad::Var parts[] = {e_s, h_context, h_topics};
  return tape.concat_rows(parts);
}

GeneratorModel::GaussVars GeneratorModel::gaussian_mlp_t(ad::Tape& tape, ad::Var in,
                                                         int w1, int b1, int w2, int b2) {
  const ad::Var hidden = tape.tanh(
      tape.add(tape.matmul(tape.param(store_, w1), in), tape.param(store_, b1)));
  const ad::Var out = tape.add(tape.matmul(tape.param(store_, w2), hidden),
                               tape.param(store_, b2));
  GaussVars g;
  g.mu = tape.rows(out, 0, dims_.d_z);
  g.log_var = tape.rows(out, dims_.d_z, dims_.d_z);
  return g;
}

GeneratorModel::GaussVars GeneratorModel::recognition_t(ad::Tape& tape, ad::Var h_target,
                                                        ad::Var c) {
  const ad::Var parts[] = {h_target, c};
  return gaussian_mlp_t(tape, tape.concat_rows(parts), rec_w1_, rec_b1_, rec_w2_, rec_b2_);
}

GeneratorModel::GaussVars GeneratorModel::prior_t(ad::Tape& tape, ad::Var c) {
  return gaussian_mlp_t(tape, c, prior_w1_, prior_b1_, prior_w2_, prior_b2_);
}

ad::Var GeneratorModel::reparameterize_t(ad::Tape& tape, const GaussVars& g,
                                         const Vec& noise) {
  const ad::Var sigma = tape.exp(tape.scale(g.log_var, 0.5));
  return tape.add(g.mu, tape.cmul(sigma, tape.input(noise)));
}

ad::Var GeneratorModel::kl_t(ad::Tape& tape, const GaussVars& q, const GaussVars& p) {
  // 0.5 * sum( exp(lq - lp) + (mq - mp)^2 exp(-lp) - 1 + lp - lq )
  const ad::Var log_ratio = tape.sub(q.log_var, p.log_var);
  const ad::Var var_ratio = tape.exp(log_ratio);
  const ad::Var mean_term =
      tape.cmul(tape.square(tape.sub(q.mu, p.mu)), tape.exp(tape.scale(p.log_var, -1.0)));
  const ad::Var per_dim =
      tape.add_scalar(tape.sub(tape.add(var_ratio, mean_term), log_ratio), -1.0);
  return tape.scale(tape.sum(per_dim), 0.5);
}

ad::Var GeneratorModel::decoder_init_t(ad::Tape& tape, ad::Var z, ad::Var c, Sentiment s) {
  const ad::Var e_s = sentiment_vec_t(tape, s, flags_.dec_sentiment);
  const ad::Var parts[] = {z, c, e_s};
  return tape.add(tape.matmul(tape.param(store_, dec_init_w_), tape.concat_rows(parts)),
                  tape.param(store_, dec_init_b_));
}

GeneratorModel::StepVars GeneratorModel::decode_step_t(ad::Tape& tape, ad::Var d_prev,
                                                       int prev_token, ad::Var z, ad::Var c,
                                                       Sentiment s, const GraphView& view,
                                                       const Mat* dropout_mask) {
  const ad::Var table = word_table(tape);
  const ad::Var x = tape.col(table, prev_token);
  StepVars out;
  out.state = gru_step_t(tape, dec_, store_, x, d_prev);

  const ad::Var query_parts[] = {d_prev, c, z};
  const ad::Var query = tape.concat_rows(query_parts);
  const TGAVars graph = tga_attend_t(tape, query, view, tga_, store_, table, dims_.d_w);

  const ad::Var e_s = sentiment_vec_t(tape, s, flags_.dec_sentiment);
  const ad::Var feat_parts[] = {out.state, e_s, graph.graph_vector};
  ad::Var feat = tape.concat_rows(feat_parts);
  if (dropout_mask != nullptr) {
    feat = tape.cmul(feat, tape.input(*dropout_mask));
  }
  out.logits = tape.add(tape.matmul(tape.param(store_, out_w_), feat),
                        tape.param(store_, out_b_));
  return out;
}

ad::Var GeneratorModel::bow_logits_t(ad::Tape& tape, ad::Var z, ad::Var c) {
  const ad::Var parts[] = {z, c};
  const ad::Var in = tape.concat_rows(parts);
  const ad::Var hidden = tape.tanh(
      tape.add(tape.matmul(tape.param(store_, bow_w1_), in), tape.param(store_, bow_b1_)));
  return tape.add(tape.matmul(tape.param(store_, bow_w2_), hidden),
                  tape.param(store_, bow_b2_));
}

Vec GeneratorModel::encode_utterance(std::span<const int> token_ids) {
  ad::Tape tape;
  return tape.value(encode_utterance_t(tape, token_ids));
}

Vec GeneratorModel::encode_context(std::span<const Vec> sentence_vectors) {
  ad::Tape tape;
  std::vector<ad::Var> vars;
  vars.reserve(sentence_vectors.size());
  for (const Vec& v : sentence_vectors) vars.push_back(tape.input(v));
  return tape.value(encode_context_t(tape, vars));
}

Vec GeneratorModel::build_condition(const Vec& h_topics, const Vec& h_context,
                                    Sentiment s) {
  ad::Tape tape;
  return tape.value(condition_t(tape, tape.input(h_topics), tape.input(h_context), s));
}

GaussianParams GeneratorModel::recognition(const Vec& h_target, const Vec& c) {
  ad::Tape tape;
  const GaussVars g = recognition_t(tape, tape.input(h_target), tape.input(c));
  return {tape.value(g.mu), tape.value(g.log_var)};
}

GaussianParams GeneratorModel::prior(const Vec& c) {
  ad::Tape tape;
  const GaussVars g = prior_t(tape, tape.input(c));
  return {tape.value(g.mu), tape.value(g.log_var)};
}

Vec GeneratorModel::reparameterize(const GaussianParams& g, const Vec& noise) {
  if (noise.size() != g.mu.size()) throw ShapeError("reparameterize: noise size mismatch");
  return g.mu.array() + (g.log_var.array() * 0.5).exp() * noise.array();
}

double GeneratorModel::kl_divergence(const GaussianParams& q, const GaussianParams& p) {
  if (q.mu.size() != p.mu.size()) throw ShapeError("kl_divergence: dimension mismatch");
  const auto lq = q.log_var.array();
  const auto lp = p.log_var.array();
  const auto diff = (q.mu - p.mu).array();
  return 0.5 * ((lq - lp).exp() + diff * diff * (-lp).exp() - 1.0 + lp - lq).sum();
}

Vec GeneratorModel::decoder_init(const Vec& z, const Vec& c, Sentiment s) {
  ad::Tape tape;
  return tape.value(decoder_init_t(tape, tape.input(z), tape.input(c), s));
}

std::pair<Vec, Vec> GeneratorModel::decode_step(const Vec& d_prev, int prev_token,
                                                const Vec& z, const Vec& c, Sentiment s,
                                                const GraphView& view) {
  ad::Tape tape;
  const StepVars step = decode_step_t(tape, tape.input(d_prev), prev_token, tape.input(z),
                                      tape.input(c), s, view);
  const ad::Var probs = tape.softmax(step.logits);
  return {tape.value(step.state), tape.value(probs)};
}

int argmax_index(const Vec& v) {
  int best = 0;
  for (int i = 1; i < v.size(); ++i) {
    if (v(i) > v(best)) best = i;
  }
  return best;
}

int sample_index(const Vec& probs, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (int i = 0; i < probs.size(); ++i) {
    acc += probs(i);
    if (u < acc) return i;
  }
  return static_cast<int>(probs.size()) - 1;
}

std::vector<std::vector<std::string>> GeneratorModel::generate_essay(
    const std::vector<std::string>& topics, const std::vector<Sentiment>& sentiments,
    const TripleStore& store, const Vocabulary& vocab, const GenerateOptions& options,
    Rng& rng) {
  if (sentiments.empty()) {
    throw std::invalid_argument("generate_essay: need at least one sentiment label");
  }
  if (options.max_len < 1) {
    throw std::invalid_argument("generate_essay: max_len must be >= 1");
  }
  const TopicKnowledgeGraph graph =
      build_topic_graph(store, topics, options.max_per_topic);
  const GraphView view = graph_view(graph, vocab);
  const std::vector<int> topic_ids = frame_with_bos_eos(vocab, topics);

  std::vector<std::vector<int>> generated_ids;
  std::vector<std::vector<std::string>> essay;
  for (Sentiment s : sentiments) {
    ad::Tape tape;
    const ad::Var h_x = encode_utterance_t(tape, topic_ids);
    std::vector<ad::Var> context_vecs;
    context_vecs.reserve(generated_ids.size());
    for (const std::vector<int>& prev : generated_ids) {
      std::vector<int> framed;
      framed.reserve(prev.size() + 2);
      framed.push_back(Vocabulary::kBos);
      framed.insert(framed.end(), prev.begin(), prev.end());
      framed.push_back(Vocabulary::kEos);
      context_vecs.push_back(encode_utterance_t(tape, framed));
    }
    const ad::Var h_c = encode_context_t(tape, context_vecs);
    const ad::Var c = condition_t(tape, h_x, h_c, s);
    const GaussVars prior_g = prior_t(tape, c);

    ad::Var z;
    if (options.deterministic_z) {
      z = prior_g.mu;
    } else {
      Vec noise(dims_.d_z);
      for (int i = 0; i < dims_.d_z; ++i) noise(i) = rng.normal();
      z = reparameterize_t(tape, prior_g, noise);
    }

    ad::Var state = decoder_init_t(tape, z, c, s);
    int prev = Vocabulary::kBos;
    std::vector<int> tokens;
    for (int t = 0; t < options.max_len; ++t) {
      const StepVars step = decode_step_t(tape, state, prev, z, c, s, view);
      state = step.state;
      const Vec probs = tape.value(tape.softmax(step.logits));
      const int next = options.sample_tokens ? sample_index(probs, rng)
                                             : argmax_index(probs);
      if (next == Vocabulary::kEos) break;
      tokens.push_back(next);
      prev = next;
    }
    std::vector<std::string> words;
    words.reserve(tokens.size());
    for (int id : tokens) words.push_back(vocab.token(id));
    generated_ids.push_back(std::move(tokens));
    essay.push_back(std::move(words));
  }
  return essay;
}

}  // namespace sctkg
