#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sctkg/autodiff.hpp"
#include "sctkg/corpus.hpp"
#include "sctkg/kg.hpp"
#include "sctkg/params.hpp"
#include "sctkg/rng.hpp"
#include "sctkg/tga.hpp"

namespace sctkg {

// Model widths. `d()` is the bidirectional utterance encoding size, which
// is also the context encoder's hidden size.
struct ModelDims {
  int vocab = 0;
  int d_w = 64;        // word embedding
  int d_s = 16;        // sentiment embedding
  int enc_hidden = 64; // utterance encoder hidden size per direction
  int d_z = 32;        // latent
  int dec_hidden = 128;
  int d_a = 64;        // attention space
  int d_r = 64;        // relation embedding

  int d() const { return 2 * enc_hidden; }
  int cond_dim() const { return d_s + 2 * d(); }              // [e(s); h_c; h_x]
  int query_dim() const { return dec_hidden + cond_dim() + d_z; }
  int d_model() const { return dec_hidden + d_s + d_w; }       // [d_t; e(s); g_t]
};

// Diagonal Gaussian as (mean, log variance).
struct GaussianParams {
  Vec mu;
  Vec log_var;
};

// Sentiment conditioning can be removed from the condition vector (the
// encoder side) or from the decoder's init and output projection, for
// control-ablation experiments. Disabled paths are fed zeros, keeping
// every shape and parameter count unchanged.
struct AblationFlags {
  bool enc_sentiment = true;
  bool dec_sentiment = true;
};

// [BOS] tokens... [EOS] as vocabulary ids.
std::vector<int> frame_with_bos_eos(const Vocabulary& vocab,
                                    std::span<const std::string> tokens);

// Gated recurrent cell parameter ids; the update rule is
//   r = sigmoid(W_r x + U_r h + b_r)
//   u = sigmoid(W_u x + U_u h + b_u)
//   n = tanh(W_n x + U_n (r .* h) + b_n)
//   h' = (1 - u) .* n + u .* h
struct GruParamIds {
  int w_r, u_r, b_r;
  int w_u, u_u, b_u;
  int w_n, u_n, b_n;
};

GruParamIds register_gru(ParamStore& store, const std::string& prefix, int input_dim,
                         int hidden_dim);
ad::Var gru_step_t(ad::Tape& tape, const GruParamIds& ids, ParamStore& store, ad::Var x,
                   ad::Var h_prev);

// The conditional variational generator: bidirectional utterance encoder,
// forward context encoder, recognition/prior networks, and the
// graph-attentive sentiment-conditioned decoder. Owns its parameters.
//
// Parameter-group names (for checkpoints and hand-set tests): word_emb,
// senti_emb, utt_fwd.*, utt_bwd.*, ctx.*, rec.{w1,b1,w2,b2},
// prior.{w1,b1,w2,b2}, dec.*, dec_init.{w,b}, out.{w,b}, bow.{w1,b1,w2,b2},
// tga.{w1,w2,w3,w4,relations}.
class GeneratorModel {
 public:
  GeneratorModel(const ModelDims& dims, int relation_count, const AblationFlags& flags,
                 std::uint64_t init_seed);

  const ModelDims& dims() const { return dims_; }
  const AblationFlags& ablation() const { return flags_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  const TGAParamIds& tga_ids() const { return tga_; }
  int relation_count() const { return relation_count_; }

  // Canonical description of shapes and switches, hashed into checkpoints.
  std::string signature() const;

  // --- tape builders (training and inference share these) ---
  ad::Var word_table(ad::Tape& tape);
  ad::Var sentiment_vec_t(ad::Tape& tape, Sentiment s, bool enabled);
  ad::Var encode_utterance_t(ad::Tape& tape, std::span<const int> token_ids);
  ad::Var encode_context_t(ad::Tape& tape, std::span<const ad::Var> sentence_vecs);
  ad::Var condition_t(ad::Tape& tape, ad::Var h_topics, ad::Var h_context, Sentiment s);
  struct GaussVars {
    ad::Var mu, log_var;
  };
  GaussVars recognition_t(ad::Tape& tape, ad::Var h_target, ad::Var c);
  GaussVars prior_t(ad::Tape& tape, ad::Var c);
  ad::Var reparameterize_t(ad::Tape& tape, const GaussVars& g, const Vec& noise);
  ad::Var kl_t(ad::Tape& tape, const GaussVars& q, const GaussVars& p);
  ad::Var decoder_init_t(ad::Tape& tape, ad::Var z, ad::Var c, Sentiment s);
  struct StepVars {
    ad::Var state;
    ad::Var logits;
  };
  StepVars decode_step_t(ad::Tape& tape, ad::Var d_prev, int prev_token, ad::Var z,
                         ad::Var c, Sentiment s, const GraphView& view,
                         const Mat* dropout_mask = nullptr);
  ad::Var bow_logits_t(ad::Tape& tape, ad::Var z, ad::Var c);

  // --- plain call surfaces ---
  Vec encode_utterance(std::span<const int> token_ids);
  Vec encode_context(std::span<const Vec> sentence_vectors);
  Vec build_condition(const Vec& h_topics, const Vec& h_context, Sentiment s);
  GaussianParams recognition(const Vec& h_target, const Vec& c);
  GaussianParams prior(const Vec& c);
  static Vec reparameterize(const GaussianParams& g, const Vec& noise);
  static double kl_divergence(const GaussianParams& q, const GaussianParams& p);
  Vec decoder_init(const Vec& z, const Vec& c, Sentiment s);
  // Returns the new state and the full output distribution P_t.
  std::pair<Vec, Vec> decode_step(const Vec& d_prev, int prev_token, const Vec& z,
                                  const Vec& c, Sentiment s, const GraphView& view);

  struct GenerateOptions {
    int max_len = 20;
    int max_per_topic = 8;
    bool deterministic_z = false;  // use the prior mean instead of sampling
    bool sample_tokens = false;    // multinomial decoding instead of greedy
  };

  // Sentence-by-sentence generation: sentence i conditions on the
  // already-generated sentences, draws z from the prior network, and
  // decodes until EOS or max_len. Deterministic given the Rng state.
  std::vector<std::vector<std::string>> generate_essay(
      const std::vector<std::string>& topics, const std::vector<Sentiment>& sentiments,
      const TripleStore& store, const Vocabulary& vocab, const GenerateOptions& options,
      Rng& rng);

 private:
  ModelDims dims_;
  AblationFlags flags_;
  int relation_count_;
  ParamStore store_;

  int word_emb_, senti_emb_;
  GruParamIds utt_fwd_, utt_bwd_, ctx_, dec_;
  int rec_w1_, rec_b1_, rec_w2_, rec_b2_;
  int prior_w1_, prior_b1_, prior_w2_, prior_b2_;
  int dec_init_w_, dec_init_b_;
  int out_w_, out_b_;
  int bow_w1_, bow_b1_, bow_w2_, bow_b2_;
  TGAParamIds tga_;

  GaussVars gaussian_mlp_t(ad::Tape& tape, ad::Var in, int w1, int b1, int w2, int b2);
};

// First index of the maximum entry (deterministic tie-break).
int argmax_index(const Vec& v);
// Multinomial draw from a probability vector using one uniform sample.
int sample_index(const Vec& probs, Rng& rng);

}  // namespace sctkg
