#include "pipeline/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "core/rng.hpp"

namespace mmp::pipeline {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  size_t b = s.find_last_not_of(" \t\r");
  if (a == std::string::npos) return "";
  return s.substr(a, b - a + 1);
}

std::string dir_of(const std::string& path) {
  const size_t slash = path.find_last_of('/');
  return slash == std::string::npos ? "." : path.substr(0, slash);
}

std::string slurp(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("config: cannot open " + path);
  return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

}  // namespace

KeyValueFile KeyValueFile::load(const std::string& path) {
  KeyValueFile kv;
  kv.parse_text(slurp(path), dir_of(path), 0);
  return kv;
}

KeyValueFile KeyValueFile::from_text(const std::string& text) {
  KeyValueFile kv;
  kv.parse_text(text, ".", 0);
  return kv;
}

void KeyValueFile::parse_text(const std::string& text, const std::string& dir, int depth) {
  if (depth > 8) throw std::runtime_error("config: include depth exceeded");
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.rfind("include ", 0) == 0) {
      std::string inc = trim(line.substr(8));
      if (!inc.empty() && inc[0] != '/') inc = dir + "/" + inc;
      parse_text(slurp(inc), dir_of(inc), depth + 1);
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos) throw std::runtime_error("config: malformed line '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw std::runtime_error("config: empty key in '" + line + "'");
    values_[key] = value;
  }
}

void KeyValueFile::set(const std::string& key, const std::string& value) { values_[key] = value; }

std::string KeyValueFile::get(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

int64_t KeyValueFile::get_int(const std::string& key, int64_t fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    return std::stoll(it->second);
  } catch (...) {
    throw std::runtime_error("config: key '" + key + "' expects an integer, got '" + it->second + "'");
  }
}

double KeyValueFile::get_real(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    return std::stod(it->second);
  } catch (...) {
    throw std::runtime_error("config: key '" + key + "' expects a number, got '" + it->second + "'");
  }
}

bool KeyValueFile::get_flag(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (it->second == "1" || it->second == "true") return true;
  if (it->second == "0" || it->second == "false") return false;
  throw std::runtime_error("config: key '" + key + "' expects 0/1, got '" + it->second + "'");
}

const char* to_string(PretrainMode m) {
  switch (m) {
    case PretrainMode::NONE: return "none";
    case PretrainMode::MOTION_FOLLOWING: return "motion_following";
    case PretrainMode::MASKED: return "masked";
  }
  return "?";
}

PretrainMode pretrain_mode_from_string(const std::string& s) {
  if (s == "none") return PretrainMode::NONE;
  if (s == "motion_following") return PretrainMode::MOTION_FOLLOWING;
  if (s == "masked") return PretrainMode::MASKED;
  throw std::invalid_argument("unknown pretrain mode '" + s + "'");
}

tasks::SplitConfig TrainConfig::split() const {
  if (split_name == "default") return tasks::SplitConfig::default_split();
  if (split_name == "incontext") return tasks::SplitConfig::incontext_split();
  throw std::invalid_argument("unknown split '" + split_name + "'");
}

tasks::SuiteConfig TrainConfig::suite() const {
  tasks::SuiteConfig s;
  s.sim = sim;
  s.split = split();
  s.gen.randomize_restore_order = randomize_restore_order;
  return s;
}

namespace {

const std::map<std::string, std::string>& known_keys();

template <typename F>
void each_key(const TrainConfig& cfg, F&& f) {
  f("sim.board_w", std::to_string(cfg.sim.board_w));
  f("sim.board_h", std::to_string(cfg.sim.board_h));
  f("sim.patch_k", std::to_string(cfg.sim.patch_k));
  f("sim.rotations", std::to_string(cfg.sim.rotations));
  f("sim.shapes", std::to_string(cfg.sim.shapes));
  f("sim.textures", std::to_string(cfg.sim.textures));
  f("data.split", cfg.split_name);
  f("data.demos_per_task", std::to_string(cfg.demos_per_task));
  f("data.seed", std::to_string(cfg.data_seed));
  f("data.randomize_restore_order", cfg.randomize_restore_order ? "1" : "0");
  f("model.d", std::to_string(cfg.policy.d));
  f("model.layers", std::to_string(cfg.policy.layers));
  f("model.heads", std::to_string(cfg.policy.heads));
  f("model.lm_layers", std::to_string(cfg.policy.lm_layers));
  f("model.lm_heads", std::to_string(cfg.policy.lm_heads));
  f("model.max_seq_len", std::to_string(cfg.policy.max_seq_len));
  f("model.max_prompt_len", std::to_string(cfg.policy.max_prompt_len));
  {
    std::ostringstream os;
    os << cfg.policy.dropout;
    f("model.dropout", os.str());
  }
  f("model.decode_mode", to_string(cfg.policy.decode_mode));
  f("model.prompt_mode", cfg.policy.prompt_mode == model::PromptMode::LM_PLUS_RC ? "lm_plus_rc" : "lm_only");
  f("model.freeze_lm", cfg.policy.freeze_lm ? "1" : "0");
  f("model.init_seed", std::to_string(cfg.init_seed));
  f("train.batch_size", std::to_string(cfg.batch_size));
  auto real = [&](const char* key, double v) {
    std::ostringstream os;
    os << v;
    f(key, os.str());
  };
  real("train.lr", cfg.lr);
  real("train.min_lr", cfg.min_lr);
  real("train.weight_decay", cfg.weight_decay);
  real("train.beta1", cfg.beta1);
  real("train.beta2", cfg.beta2);
  real("train.eps", cfg.eps);
  real("train.clip", cfg.clip);
  real("train.warmup_frac", cfg.warmup_frac);
  f("train.seed", std::to_string(cfg.train_seed));
  f("pretrain.mode", to_string(cfg.pretrain_mode));
  f("pretrain.epochs", std::to_string(cfg.pretrain_epochs));
  f("pretrain.two_step", cfg.two_step_pretrain ? "1" : "0");
  f("pretrain.second_step_epochs", std::to_string(cfg.second_step_epochs));
  real("pretrain.aug_color_jitter", cfg.augment.color_jitter);
  real("pretrain.aug_gray_prob", cfg.augment.gray_prob);
  f("pretrain.aug_bbox_shift", std::to_string(cfg.augment.bbox_shift_max));
  f("pretrain.lm_span_steps", std::to_string(cfg.lm_span_steps));
  f("finetune.epochs", std::to_string(cfg.finetune_epochs));
  real("finetune.modified_ft_prob", cfg.modified_ft_prob);
  {
    std::ostringstream os;
    for (size_t i = 0; i < cfg.eval_levels.size(); ++i) os << (i ? "," : "") << tasks::to_string(cfg.eval_levels[i]);
    f("eval.levels", os.str());
  }
  f("eval.episodes", std::to_string(cfg.eval_episodes));
  f("eval.edit_prompts", cfg.eval_edit_prompts ? "1" : "0");
  f("eval.seed", std::to_string(cfg.eval_seed));
}

}  // namespace

TrainConfig TrainConfig::from_file(const KeyValueFile& kv) {
  TrainConfig cfg;

  // Reject unknown keys up front.
  std::map<std::string, bool> known;
  each_key(cfg, [&](const std::string& k, const std::string&) { known[k] = true; });
  for (const auto& [k, v] : kv.entries())
    if (!known.count(k)) throw std::runtime_error("config: unknown key '" + k + "'");

  cfg.sim.board_w = static_cast<int>(kv.get_int("sim.board_w", cfg.sim.board_w));
  cfg.sim.board_h = static_cast<int>(kv.get_int("sim.board_h", cfg.sim.board_h));
  cfg.sim.patch_k = static_cast<int>(kv.get_int("sim.patch_k", cfg.sim.patch_k));
  cfg.sim.rotations = static_cast<int>(kv.get_int("sim.rotations", cfg.sim.rotations));
  cfg.sim.shapes = static_cast<int>(kv.get_int("sim.shapes", cfg.sim.shapes));
  cfg.sim.textures = static_cast<int>(kv.get_int("sim.textures", cfg.sim.textures));
  sim::validate(cfg.sim);

  cfg.split_name = kv.get("data.split", cfg.split_name);
  cfg.demos_per_task = static_cast<int>(kv.get_int("data.demos_per_task", cfg.demos_per_task));
  cfg.data_seed = static_cast<uint64_t>(kv.get_int("data.seed", static_cast<int64_t>(cfg.data_seed)));
  cfg.randomize_restore_order = kv.get_flag("data.randomize_restore_order", cfg.randomize_restore_order);

  cfg.policy = model::PolicyConfig::for_sim(cfg.sim);
  cfg.policy.d = static_cast<int>(kv.get_int("model.d", 64));
  cfg.policy.layers = static_cast<int>(kv.get_int("model.layers", 4));
  cfg.policy.heads = static_cast<int>(kv.get_int("model.heads", 4));
  cfg.policy.lm_layers = static_cast<int>(kv.get_int("model.lm_layers", 2));
  cfg.policy.lm_heads = static_cast<int>(kv.get_int("model.lm_heads", 4));
  cfg.policy.max_seq_len = static_cast<int>(kv.get_int("model.max_seq_len", 256));
  cfg.policy.max_prompt_len = static_cast<int>(kv.get_int("model.max_prompt_len", 128));
  cfg.policy.dropout = static_cast<float>(kv.get_real("model.dropout", 0.1));
  cfg.policy.decode_mode = model::decode_mode_from_string(kv.get("model.decode_mode", "autoregressive"));
  cfg.policy.prompt_mode =
      kv.get("model.prompt_mode", "lm_plus_rc") == "lm_only" ? model::PromptMode::LM_ONLY : model::PromptMode::LM_PLUS_RC;
  cfg.policy.freeze_lm = kv.get_flag("model.freeze_lm", false);
  cfg.init_seed = static_cast<uint64_t>(kv.get_int("model.init_seed", static_cast<int64_t>(cfg.init_seed)));
  model::validate(cfg.policy);

  cfg.batch_size = static_cast<int>(kv.get_int("train.batch_size", cfg.batch_size));
  cfg.lr = kv.get_real("train.lr", cfg.lr);
  cfg.min_lr = kv.get_real("train.min_lr", cfg.min_lr);
  cfg.weight_decay = kv.get_real("train.weight_decay", cfg.weight_decay);
  cfg.beta1 = kv.get_real("train.beta1", cfg.beta1);
  cfg.beta2 = kv.get_real("train.beta2", cfg.beta2);
  cfg.eps = kv.get_real("train.eps", cfg.eps);
  cfg.clip = kv.get_real("train.clip", cfg.clip);
  cfg.warmup_frac = kv.get_real("train.warmup_frac", cfg.warmup_frac);
  cfg.train_seed = static_cast<uint64_t>(kv.get_int("train.seed", static_cast<int64_t>(cfg.train_seed)));
  if (cfg.batch_size <= 0) throw std::runtime_error("config: train.batch_size must be positive");
  if (cfg.modified_ft_prob < 0.0 || cfg.modified_ft_prob > 1.0)
    throw std::runtime_error("config: finetune.modified_ft_prob outside [0, 1]");

  cfg.pretrain_mode = pretrain_mode_from_string(kv.get("pretrain.mode", "motion_following"));
  cfg.pretrain_epochs = static_cast<int>(kv.get_int("pretrain.epochs", cfg.pretrain_epochs));
  cfg.two_step_pretrain = kv.get_flag("pretrain.two_step", cfg.two_step_pretrain);
  cfg.second_step_epochs = static_cast<int>(kv.get_int("pretrain.second_step_epochs", cfg.second_step_epochs));
  cfg.augment.color_jitter = kv.get_real("pretrain.aug_color_jitter", cfg.augment.color_jitter);
  cfg.augment.gray_prob = kv.get_real("pretrain.aug_gray_prob", cfg.augment.gray_prob);
  cfg.augment.bbox_shift_max = static_cast<int>(kv.get_int("pretrain.aug_bbox_shift", cfg.augment.bbox_shift_max));
  cfg.lm_span_steps = static_cast<int>(kv.get_int("pretrain.lm_span_steps", cfg.lm_span_steps));
  if (cfg.pretrain_epochs < 0 || cfg.finetune_epochs < 0)
    throw std::runtime_error("config: epoch counts must be non-negative");

  cfg.finetune_epochs = static_cast<int>(kv.get_int("finetune.epochs", cfg.finetune_epochs));
  cfg.modified_ft_prob = kv.get_real("finetune.modified_ft_prob", cfg.modified_ft_prob);

  if (kv.has("eval.levels")) {
    cfg.eval_levels.clear();
    std::istringstream ls(kv.get("eval.levels", ""));
    std::string tok;
    while (std::getline(ls, tok, ','))
      if (!tok.empty()) cfg.eval_levels.push_back(tasks::level_from_string(tok));
  }
  cfg.eval_episodes = static_cast<int>(kv.get_int("eval.episodes", cfg.eval_episodes));
  cfg.eval_edit_prompts = kv.get_flag("eval.edit_prompts", cfg.eval_edit_prompts);
  cfg.eval_seed = static_cast<uint64_t>(kv.get_int("eval.seed", static_cast<int64_t>(cfg.eval_seed)));
  if (cfg.eval_episodes <= 0) throw std::runtime_error("config: eval.episodes must be positive");

  cfg.policy.attention_mode =
      cfg.pretrain_mode == PretrainMode::MASKED ? model::AttentionMode::MASKED_PRETRAIN : model::AttentionMode::CAUSAL;
  return cfg;
}

std::string print_config(const TrainConfig& cfg) {
  std::ostringstream os;
  each_key(cfg, [&](const std::string& k, const std::string& v) { os << k << " = " << v << "\n"; });
  return os.str();
}

uint64_t config_hash(const TrainConfig& cfg) { return core::fnv1a64(print_config(cfg)); }

}  // namespace mmp::pipeline
