#include "sctkg/config.hpp"

#include <fstream>
#include <sstream>

#include "sctkg/error.hpp"

namespace sctkg {

std::uint32_t fnv1a32(std::string_view text) {
  std::uint32_t hash = 2166136261u;
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 16777619u;
  }
  return hash;
}

void RunConfig::apply_profile(const std::string& name) {
  profile = name;
  if (name == "desk") {
    dims.d_w = 64;
    dims.d_s = 16;
    dims.enc_hidden = 64;
    dims.d_z = 32;
    dims.dec_hidden = 128;
    dims.d_a = 64;
    dims.d_r = 64;
  } else if (name == "paper") {
    // Full-scale sizes: 200-dim word vectors, 32-dim sentiment, 512 hidden
    // (encoder bidirectional concat), 300-dim latent.
    dims.d_w = 200;
    dims.d_s = 32;
    dims.enc_hidden = 256;
    dims.d_z = 300;
    dims.dec_hidden = 512;
    dims.d_a = 200;
    dims.d_r = 200;
  } else {
    throw std::invalid_argument("unknown profile '" + name + "' (desk|paper)");
  }
}

namespace {

long to_long(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const long v = std::stol(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key + "': bad integer '" + value + "'");
  }
}

double to_double(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key + "': bad number '" + value + "'");
  }
}

}  // namespace

bool RunConfig::set_key(const std::string& key, const std::string& value) {
  if (key == "profile") {
    apply_profile(value);
  } else if (key == "seed") {
    seed = static_cast<std::uint64_t>(to_long(key, value));
  } else if (key == "vocab_cap") {
    vocab_cap = static_cast<int>(to_long(key, value));
  } else if (key == "topic_label_cap") {
    topic_label_cap = static_cast<int>(to_long(key, value));
  } else if (key == "max_per_topic") {
    max_per_topic = static_cast<int>(to_long(key, value));
  } else if (key == "kg_min_weight") {
    kg_min_weight = to_double(key, value);
  } else if (key == "max_len") {
    max_len = static_cast<int>(to_long(key, value));
  } else if (key == "synth_essays") {
    synth_essays = static_cast<int>(to_long(key, value));
  } else if (key == "d_w") {
    dims.d_w = static_cast<int>(to_long(key, value));
  } else if (key == "d_s") {
    dims.d_s = static_cast<int>(to_long(key, value));
  } else if (key == "enc_hidden") {
    dims.enc_hidden = static_cast<int>(to_long(key, value));
  } else if (key == "d_z") {
    dims.d_z = static_cast<int>(to_long(key, value));
  } else if (key == "dec_hidden") {
    dims.dec_hidden = static_cast<int>(to_long(key, value));
  } else if (key == "d_a") {
    dims.d_a = static_cast<int>(to_long(key, value));
  } else if (key == "d_r") {
    dims.d_r = static_cast<int>(to_long(key, value));
  } else if (key == "disc_filters") {
    disc_filters = static_cast<int>(to_long(key, value));
  } else if (key == "disc_window") {
    disc_window = static_cast<int>(to_long(key, value));
  } else if (key == "s1_lr") {
    stage1.learning_rate = to_double(key, value);
  } else if (key == "s1_batch") {
    stage1.batch_size = static_cast<int>(to_long(key, value));
  } else if (key == "s1_epochs") {
    stage1.epochs = static_cast<int>(to_long(key, value));
  } else if (key == "s1_anneal_steps") {
    stage1.kl_anneal_steps = to_long(key, value);
  } else if (key == "s1_bow_weight") {
    stage1.bow_weight = to_double(key, value);
  } else if (key == "s1_grad_clip") {
    stage1.grad_clip_norm = to_double(key, value);
  } else if (key == "s1_dropout") {
    stage1.dropout_rate = to_double(key, value);
  } else if (key == "s1_seed") {
    stage1.seed = static_cast<std::uint64_t>(to_long(key, value));
  } else if (key == "s2_lr") {
    stage2.learning_rate = to_double(key, value);
  } else if (key == "s2_d_lr") {
    stage2.d_learning_rate = to_double(key, value);
  } else if (key == "s2_g_steps") {
    stage2.g_steps = static_cast<int>(to_long(key, value));
  } else if (key == "s2_d_steps") {
    stage2.d_steps = static_cast<int>(to_long(key, value));
  } else if (key == "s2_rounds") {
    stage2.rounds = static_cast<int>(to_long(key, value));
  } else if (key == "s2_rollout") {
    if (value == "sequence_reward") {
      stage2.rollout_mode = RolloutMode::kSequenceReward;
    } else if (value == "mc_rollout") {
      stage2.rollout_mode = RolloutMode::kMcRollout;
    } else {
      throw std::invalid_argument("s2_rollout must be sequence_reward or mc_rollout");
    }
  } else if (key == "s2_baseline_decay") {
    stage2.baseline_decay = to_double(key, value);
  } else if (key == "s2_g_batch") {
    stage2.g_batch = static_cast<int>(to_long(key, value));
  } else if (key == "s2_d_batch") {
    stage2.d_batch = static_cast<int>(to_long(key, value));
  } else if (key == "s2_grad_clip") {
    stage2.grad_clip_norm = to_double(key, value);
  } else if (key == "s2_mix_lambda") {
    stage2.mix_lambda = to_double(key, value);
  } else if (key == "s2_mc_rollouts") {
    stage2.mc_rollouts = static_cast<int>(to_long(key, value));
  } else if (key == "s2_seed") {
    stage2.seed = static_cast<std::uint64_t>(to_long(key, value));
  } else {
    return false;
  }
  return true;
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::size_t hash_at = line.find('#');
    if (hash_at != std::string::npos) line.resize(hash_at);
    const std::size_t first = line.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    const std::size_t last = line.find_last_not_of(" \t");
    line = line.substr(first, last - first + 1);
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError(path, line_no, "expected key=value");
    }
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (!set_key(key, value)) {
      throw ParseError(path, line_no, "unknown config key '" + key + "'");
    }
  }
}

std::string RunConfig::canonical() const {
  std::ostringstream os;
  os << "profile=" << profile << "\n";
  os << "seed=" << seed << "\n";
  os << "vocab_cap=" << vocab_cap << "\n";
  os << "topic_label_cap=" << topic_label_cap << "\n";
  os << "max_per_topic=" << max_per_topic << "\n";
  os << "kg_min_weight=" << kg_min_weight << "\n";
  os << "max_len=" << max_len << "\n";
  os << "synth_essays=" << synth_essays << "\n";
  os << "d_w=" << dims.d_w << "\n";
  os << "d_s=" << dims.d_s << "\n";
  os << "enc_hidden=" << dims.enc_hidden << "\n";
  os << "d_z=" << dims.d_z << "\n";
  os << "dec_hidden=" << dims.dec_hidden << "\n";
  os << "d_a=" << dims.d_a << "\n";
  os << "d_r=" << dims.d_r << "\n";
  os << "disc_filters=" << disc_filters << "\n";
  os << "disc_window=" << disc_window << "\n";
  os << "s1_lr=" << stage1.learning_rate << "\n";
  os << "s1_batch=" << stage1.batch_size << "\n";
  os << "s1_epochs=" << stage1.epochs << "\n";
  os << "s1_anneal_steps=" << stage1.kl_anneal_steps << "\n";
  os << "s1_bow_weight=" << stage1.bow_weight << "\n";
  os << "s1_grad_clip=" << stage1.grad_clip_norm << "\n";
  os << "s1_dropout=" << stage1.dropout_rate << "\n";
  os << "s1_seed=" << stage1.seed << "\n";
  os << "s2_lr=" << stage2.learning_rate << "\n";
  os << "s2_d_lr=" << stage2.d_learning_rate << "\n";
  os << "s2_g_steps=" << stage2.g_steps << "\n";
  os << "s2_d_steps=" << stage2.d_steps << "\n";
  os << "s2_rounds=" << stage2.rounds << "\n";
  os << "s2_rollout="
     << (stage2.rollout_mode == RolloutMode::kSequenceReward ? "sequence_reward"
                                                             : "mc_rollout")
     << "\n";
  os << "s2_baseline_decay=" << stage2.baseline_decay << "\n";
  os << "s2_g_batch=" << stage2.g_batch << "\n";
  os << "s2_d_batch=" << stage2.d_batch << "\n";
  os << "s2_grad_clip=" << stage2.grad_clip_norm << "\n";
  os << "s2_mix_lambda=" << stage2.mix_lambda << "\n";
  os << "s2_mc_rollouts=" << stage2.mc_rollouts << "\n";
  os << "s2_seed=" << stage2.seed << "\n";
  return os.str();
}

}  // namespace sctkg
