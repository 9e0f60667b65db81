#include "model/policy.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

#include "model/transformer.hpp"

namespace mmp::model {

using core::Graph;
using core::ParamStore;
using core::Rng;
using core::Tensor;

const char* to_string(DecodeMode m) { return m == DecodeMode::AUTOREGRESSIVE ? "autoregressive" : "independent"; }
const char* to_string(AttentionMode m) { return m == AttentionMode::CAUSAL ? "causal" : "masked_pretrain"; }

DecodeMode decode_mode_from_string(const std::string& s) {
  if (s == "autoregressive") return DecodeMode::AUTOREGRESSIVE;
  if (s == "independent") return DecodeMode::INDEPENDENT;
  throw std::invalid_argument("unknown decode mode '" + s + "'");
}

AttentionMode attention_mode_from_string(const std::string& s) {
  if (s == "causal") return AttentionMode::CAUSAL;
  if (s == "masked_pretrain") return AttentionMode::MASKED_PRETRAIN;
  throw std::invalid_argument("unknown attention mode '" + s + "'");
}

EncoderConfig PolicyConfig::encoder_config(int vocab_size) const {
  EncoderConfig e;
  e.d = d;
  e.lm_layers = lm_layers;
  e.lm_heads = lm_heads;
  e.patch_k = patch_k;
  e.board_w = board_w;
  e.board_h = board_h;
  e.max_prompt_len = max_prompt_len;
  e.vocab_size = vocab_size;
  e.dropout = dropout;
  e.prompt_mode = prompt_mode;
  return e;
}

PolicyConfig PolicyConfig::for_sim(const sim::SimConfig& sim) {
  PolicyConfig cfg;
  cfg.head_sizes = tasks::action_head_sizes(sim);
  cfg.patch_k = sim.patch_k;
  cfg.board_w = sim.board_w;
  cfg.board_h = sim.board_h;
  cfg.rotations = sim.rotations;
  return cfg;
}

void validate(const PolicyConfig& cfg) {
  if (cfg.d <= 0 || cfg.d % cfg.heads != 0) throw std::invalid_argument("policy config: d must divide by heads");
  if (cfg.d % 4 != 0) throw std::invalid_argument("policy config: d must divide by 4");
  if (cfg.layers <= 0 || cfg.lm_layers <= 0) throw std::invalid_argument("policy config: layer counts must be positive");
  if (cfg.head_sizes.empty()) throw std::invalid_argument("policy config: head_sizes empty");
  for (const int h : cfg.head_sizes)
    if (h <= 0) throw std::invalid_argument("policy config: head size must be positive");
  if (cfg.dropout < 0.0f || cfg.dropout >= 1.0f) throw std::invalid_argument("policy config: dropout outside [0, 1)");
}

std::string policy_config_to_text(const PolicyConfig& cfg) {
  std::ostringstream os;
  os << "d = " << cfg.d << "\n";
  os << "layers = " << cfg.layers << "\n";
  os << "heads = " << cfg.heads << "\n";
  os << "lm_layers = " << cfg.lm_layers << "\n";
  os << "lm_heads = " << cfg.lm_heads << "\n";
  os << "head_sizes = ";
  for (size_t i = 0; i < cfg.head_sizes.size(); ++i) os << (i ? "," : "") << cfg.head_sizes[i];
  os << "\n";
  os << "max_seq_len = " << cfg.max_seq_len << "\n";
  os << "max_prompt_len = " << cfg.max_prompt_len << "\n";
  os << "dropout = " << cfg.dropout << "\n";
  os << "decode_mode = " << to_string(cfg.decode_mode) << "\n";
  os << "attention_mode = " << to_string(cfg.attention_mode) << "\n";
  os << "prompt_mode = " << (cfg.prompt_mode == PromptMode::LM_PLUS_RC ? "lm_plus_rc" : "lm_only") << "\n";
  os << "freeze_lm = " << (cfg.freeze_lm ? 1 : 0) << "\n";
  os << "patch_k = " << cfg.patch_k << "\n";
  os << "board_w = " << cfg.board_w << "\n";
  os << "board_h = " << cfg.board_h << "\n";
  os << "rotations = " << cfg.rotations << "\n";
  return os.str();
}

PolicyConfig policy_config_from_text(const std::string& text) {
  PolicyConfig cfg;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const size_t eq = line.find(" = ");
    if (eq == std::string::npos) throw std::runtime_error("policy config: malformed line '" + line + "'");
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 3);
    if (key == "d") cfg.d = std::stoi(val);
    else if (key == "layers") cfg.layers = std::stoi(val);
    else if (key == "heads") cfg.heads = std::stoi(val);
    else if (key == "lm_layers") cfg.lm_layers = std::stoi(val);
    else if (key == "lm_heads") cfg.lm_heads = std::stoi(val);
    else if (key == "head_sizes") {
      cfg.head_sizes.clear();
      std::istringstream hs(val);
      std::string tok;
      while (std::getline(hs, tok, ','))
        if (!tok.empty()) cfg.head_sizes.push_back(std::stoi(tok));
    } else if (key == "max_seq_len") cfg.max_seq_len = std::stoi(val);
    else if (key == "max_prompt_len") cfg.max_prompt_len = std::stoi(val);
    else if (key == "dropout") cfg.dropout = std::stof(val);
    else if (key == "decode_mode") cfg.decode_mode = decode_mode_from_string(val);
    else if (key == "attention_mode") cfg.attention_mode = attention_mode_from_string(val);
    else if (key == "prompt_mode")
      cfg.prompt_mode = val == "lm_plus_rc" ? PromptMode::LM_PLUS_RC : PromptMode::LM_ONLY;
    else if (key == "freeze_lm") cfg.freeze_lm = val == "1";
    else if (key == "patch_k") cfg.patch_k = std::stoi(val);
    else if (key == "board_w") cfg.board_w = std::stoi(val);
    else if (key == "board_h") cfg.board_h = std::stoi(val);
    else if (key == "rotations") cfg.rotations = std::stoi(val);
    else throw std::runtime_error("policy config: unknown key '" + key + "'");
  }
  validate(cfg);
  return cfg;
}

StreamLayout assemble_stream(int prompt_len, const std::vector<int>& obs_counts, const std::vector<int>& act_counts,
                             int n_action_dims, int max_seq_len) {
  if (prompt_len <= 0) throw std::invalid_argument("assemble_stream: empty prompt");
  if (obs_counts.size() != act_counts.size()) throw std::invalid_argument("assemble_stream: step count mismatch");
  StreamLayout layout;
  layout.prompt_len = prompt_len;
  for (int i = 0; i < prompt_len; ++i) layout.entries.push_back({StreamEntry::Kind::Prompt, 0, 0});
  for (size_t t = 0; t < obs_counts.size(); ++t) {
    if (obs_counts[t] <= 0) throw std::invalid_argument("assemble_stream: step with no observation tokens");
    if (act_counts[t] < 0 || act_counts[t] > n_action_dims)
      throw std::invalid_argument("assemble_stream: bad action token count");
    for (int i = 0; i < obs_counts[t]; ++i)
      layout.entries.push_back({StreamEntry::Kind::Obs, static_cast<int>(t), 0});
    layout.last_obs_pos.push_back(layout.length() - 1);
    layout.act_pos.emplace_back();
    for (int n = 0; n < act_counts[t]; ++n) {
      layout.act_pos.back().push_back(layout.length());
      layout.entries.push_back({StreamEntry::Kind::Act, static_cast<int>(t), n});
    }
  }
  if (layout.length() > max_seq_len)
    throw std::invalid_argument("assemble_stream: stream length " + std::to_string(layout.length()) +
                                " exceeds max sequence length " + std::to_string(max_seq_len));
  return layout;
}

Tensor build_attention_mask(const StreamLayout& layout, AttentionMode mode) {
  const int n = layout.length();
  Tensor mask = Tensor::zeros({n, n});
  constexpr float kHidden = -1e9f;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      bool visible;
      if (mode == AttentionMode::CAUSAL) {
        visible = j <= i;
      } else {
        const auto& ej = layout.entries[j];
        const auto& ei = layout.entries[i];
        if (ej.kind == StreamEntry::Kind::Obs) {
          visible = true;  // observations open to everyone, including the future
        } else if (ej.kind == StreamEntry::Kind::Act) {
          visible = j <= i;  // future actions stay hidden
        } else {
          visible = ei.kind == StreamEntry::Kind::Prompt && j <= i;  // prompt hidden from the rest
        }
      }
      if (!visible) mask.at(i, j) = kHidden;
    }
  }
  return mask;
}

Policy::Policy(PolicyConfig cfg, Vocabulary vocab, uint64_t init_seed)
    : cfg_(std::move(cfg)), vocab_(std::move(vocab)), init_seed_(init_seed) {
  validate(cfg_);
  using Init = ParamStore::Init;
  const EncoderConfig ec = cfg_.encoder_config(vocab_.size());
  obj_enc_ = std::make_unique<ObjectEncoder>(params_, ec, init_seed);
  prompt_enc_ = std::make_unique<PromptEncoder>(params_, ec, init_seed);
  for (int l = 0; l < cfg_.layers; ++l)
    blocks_.push_back(register_block(params_, "decoder.layer" + std::to_string(l), cfg_.d, init_seed));
  pos_emb_ = params_.add("decoder.pos_emb", cfg_.max_seq_len, cfg_.d, Init::Normal, 0.02, init_seed);
  final_g_ = params_.add("decoder.final.g", 1, cfg_.d, Init::Ones, 0, init_seed);
  final_b_ = params_.add("decoder.final.b", 1, cfg_.d, Init::Zeros, 0, init_seed);
  for (int n = 0; n < cfg_.n_action_dims(); ++n) {
    head_w_.push_back(params_.add("head.dim" + std::to_string(n) + ".w", cfg_.d, cfg_.head_sizes[n], Init::Normal,
                                  0.02, init_seed));
    head_b_.push_back(params_.add("head.dim" + std::to_string(n) + ".b", 1, cfg_.head_sizes[n], Init::Zeros, 0,
                                  init_seed));
    act_emb_.push_back(params_.add("act_emb.dim" + std::to_string(n), cfg_.head_sizes[n], cfg_.d, Init::Normal, 0.02,
                                   init_seed));
  }
  apply_freezes();
}

void Policy::apply_freezes() { params_.freeze_prefix(PromptEncoder::param_prefix(), cfg_.freeze_lm); }

Policy::StreamNodes Policy::build_stream(Graph& g, int prompt_node, const std::vector<int>& obs_nodes,
                                         const std::vector<std::vector<int>>& act_tokens, AttentionMode attn,
                                         bool training, Rng* dropout_rng) const {
  std::vector<int> obs_counts, act_counts;
  std::vector<int> parts = {prompt_node};
  for (size_t t = 0; t < obs_nodes.size(); ++t) {
    obs_counts.push_back(g.rows(obs_nodes[t]));
    act_counts.push_back(static_cast<int>(act_tokens[t].size()));
    parts.push_back(obs_nodes[t]);
    for (size_t n = 0; n < act_tokens[t].size(); ++n) {
      const int table = act_emb_[n];
      parts.push_back(g.embed(g.param(table, params_.at(table)), {act_tokens[t][n]}));
    }
  }
  StreamNodes out;
  out.layout = assemble_stream(g.rows(prompt_node), obs_counts, act_counts, cfg_.n_action_dims(), cfg_.max_seq_len);

  int x = parts.size() == 1 ? parts[0] : g.concat_rows(parts);
  x = g.add(x, g.slice_rows(g.param(pos_emb_, params_.at(pos_emb_)), 0, out.layout.length()));

  g.set_training(training);
  g.set_dropout_rng(dropout_rng);
  const int mask = g.input(build_attention_mask(out.layout, attn));
  for (const auto& bp : blocks_) x = transformer_block(g, params_, bp, x, mask, cfg_.heads, cfg_.dropout);
  out.x = g.layer_norm(x, g.param(final_g_, params_.at(final_g_)), g.param(final_b_, params_.at(final_b_)));
  return out;
}

Policy::Forward Policy::build_forward(Graph& g, const tasks::TrainingSample& sample, AttentionMode attn, bool training,
                                      Rng* dropout_rng) const {
  g.set_training(training);
  g.set_dropout_rng(dropout_rng);
  const TokenizedPrompt tok = tokenize_prompt(sample.prompt, vocab_);
  const int prompt_node = prompt_enc_->encode(g, params_, tok, *obj_enc_, cfg_.prompt_mode, cfg_.dropout);

  std::vector<int> obs_nodes;
  for (const auto& obs : sample.trajectory.observations) {
    std::vector<const sim::ObjectView*> views;
    for (const auto& v : obs.views) views.push_back(&v);
    obs_nodes.push_back(obj_enc_->encode_views(g, params_, views));
  }
  std::vector<std::vector<int>> act_tokens(sample.trajectory.observations.size());
  for (size_t t = 0; t < sample.trajectory.actions.size(); ++t) {
    const auto toks = tasks::action_to_tokens(sample.trajectory.actions[t]);
    act_tokens[t].assign(toks.begin(), toks.begin() + cfg_.n_action_dims());
  }

  const StreamNodes sn = build_stream(g, prompt_node, obs_nodes, act_tokens, attn, training, dropout_rng);
  Forward f;
  f.hidden = sn.x;
  f.layout = sn.layout;
  return f;
}

int Policy::head_logits(Graph& g, int hidden, int position, int dim) const {
  const int row = g.slice_rows(hidden, position, position + 1);
  return g.add_row(g.matmul(row, g.param(head_w_[dim], params_.at(head_w_[dim]))),
                   g.param(head_b_[dim], params_.at(head_b_[dim])));
}

int Policy::read_position(const StreamLayout& layout, int step, int dim, DecodeMode mode) const {
  if (mode == DecodeMode::AUTOREGRESSIVE && dim > 0) return layout.act_pos[step][dim - 1];
  return layout.last_obs_pos[step];
}

int Policy::build_sample_loss(Graph& g, const tasks::TrainingSample& sample, DecodeMode mode, AttentionMode attn,
                              bool training, Rng* dropout_rng) const {
  if (sample.trajectory.actions.empty()) throw std::invalid_argument("build_sample_loss: trajectory has no actions");
  const Forward f = build_forward(g, sample, attn, training, dropout_rng);
  std::vector<int> terms;
  for (size_t t = 0; t < sample.trajectory.actions.size(); ++t) {
    const auto toks = tasks::action_to_tokens(sample.trajectory.actions[t]);
    for (int n = 0; n < cfg_.n_action_dims(); ++n) {
      const int logits = head_logits(g, f.hidden, read_position(f.layout, static_cast<int>(t), n, mode), n);
      terms.push_back(g.ce_loss(logits, toks[n]));
    }
  }
  return terms.size() == 1 ? terms[0] : g.add_n(terms);
}

float Policy::action_loss(const std::vector<tasks::TrainingSample>& batch, DecodeMode mode, AttentionMode attn) const {
  if (batch.empty()) throw std::invalid_argument("action_loss: empty batch");
  double total = 0.0;
  Graph g;
  for (const auto& sample : batch) {
    g.reset();
    total += static_cast<double>(g.scalar(build_sample_loss(g, sample, mode, attn, false, nullptr)));
  }
  return static_cast<float>(total / static_cast<double>(batch.size()));
}

float Policy::pretrain_loss(const std::vector<tasks::TrainingSample>& batch) const {
  return action_loss(batch, cfg_.decode_mode, cfg_.attention_mode);
}

std::vector<double> Policy::token_accuracy(const std::vector<tasks::TrainingSample>& batch, DecodeMode mode) const {
  std::vector<double> correct(cfg_.n_action_dims(), 0.0);
  std::vector<double> total(cfg_.n_action_dims(), 0.0);
  Graph g;
  for (const auto& sample : batch) {
    g.reset();
    const Forward f = build_forward(g, sample, cfg_.attention_mode, false, nullptr);
    for (size_t t = 0; t < sample.trajectory.actions.size(); ++t) {
      const auto toks = tasks::action_to_tokens(sample.trajectory.actions[t]);
      for (int n = 0; n < cfg_.n_action_dims(); ++n) {
        const int logits = head_logits(g, f.hidden, read_position(f.layout, static_cast<int>(t), n, mode), n);
        const float* v = g.values(logits);
        int best = 0;
        for (int j = 1; j < cfg_.head_sizes[n]; ++j)
          if (v[j] > v[best]) best = j;
        if (best == toks[n]) correct[n] += 1.0;
        total[n] += 1.0;
      }
    }
  }
  for (int n = 0; n < cfg_.n_action_dims(); ++n)
    if (total[n] > 0) correct[n] /= total[n];
  return correct;
}

Policy::EpisodeContext Policy::begin_episode(const tasks::MultimodalPrompt& prompt) const {
  EpisodeContext ctx;
  ctx.prompt = prompt;
  ctx.tok = tokenize_prompt(ctx.prompt, vocab_);
  Graph g;
  g.set_training(false);
  const int node = prompt_enc_->encode(g, params_, ctx.tok, *obj_enc_, cfg_.prompt_mode, cfg_.dropout);
  ctx.prompt_encoding = g.value_tensor(node);
  return ctx;
}

void Policy::push_observation(EpisodeContext& ctx, const sim::Observation& obs) const {
  if (obs.views.empty()) throw std::invalid_argument("push_observation: empty observation");
  Graph g;
  g.set_training(false);
  std::vector<const sim::ObjectView*> views;
  for (const auto& v : obs.views) views.push_back(&v);
  const int node = obj_enc_->encode_views(g, params_, views);
  ctx.obs_tokens.push_back(g.value_tensor(node));
  ctx.obs_counts.push_back(static_cast<int>(obs.views.size()));
}

void Policy::push_action(EpisodeContext& ctx, const sim::ActionPrim& action) const {
  if (ctx.actions.size() + 1 != ctx.obs_tokens.size())
    throw std::logic_error("push_action: action does not follow a fresh observation");
  ctx.actions.push_back(action);
}

std::vector<float> Policy::decode_logits(const EpisodeContext& ctx, const std::vector<int>& partial, int dim,
                                         DecodeMode mode) const {
  Graph g;
  g.set_training(false);
  const int prompt_node = g.input(ctx.prompt_encoding);
  std::vector<int> obs_nodes;
  for (const auto& t : ctx.obs_tokens) obs_nodes.push_back(g.input(t));

  std::vector<std::vector<int>> act_tokens(ctx.obs_tokens.size());
  for (size_t t = 0; t < ctx.actions.size(); ++t) {
    const auto toks = tasks::action_to_tokens(ctx.actions[t]);
    act_tokens[t].assign(toks.begin(), toks.begin() + cfg_.n_action_dims());
  }
  act_tokens.back() = partial;

  const StreamNodes sn = build_stream(g, prompt_node, obs_nodes, act_tokens, AttentionMode::CAUSAL, false, nullptr);
  const int step = static_cast<int>(ctx.obs_tokens.size()) - 1;
  const int logits = head_logits(g, sn.x, read_position(sn.layout, step, dim, mode), dim);
  return std::vector<float>(g.values(logits), g.values(logits) + cfg_.head_sizes[dim]);
}

sim::ActionPrim Policy::decode_action(const EpisodeContext& ctx, DecodeMode mode, DecodeStrategy strategy,
                                      Rng* sample_rng) const {
  if (ctx.obs_tokens.size() != ctx.actions.size() + 1)
    throw std::logic_error("decode_action: expected one more observation than actions");
  if (strategy == DecodeStrategy::SAMPLE && sample_rng == nullptr)
    throw std::invalid_argument("decode_action: SAMPLE needs an rng");

  auto pick = [&](const std::vector<float>& logits) {
    if (strategy == DecodeStrategy::GREEDY) {
      int best = 0;
      for (size_t j = 1; j < logits.size(); ++j)
        if (logits[j] > logits[best]) best = static_cast<int>(j);
      return best;
    }
    const auto probs = core::softmax(logits);
    double u = sample_rng->next_real();
    double c = 0.0;
    for (size_t j = 0; j < probs.size(); ++j) {
      c += probs[j];
      if (u < c) return static_cast<int>(j);
    }
    return static_cast<int>(probs.size()) - 1;
  };

  std::array<int, tasks::kActionDims> tokens{};
  if (mode == DecodeMode::AUTOREGRESSIVE) {
    std::vector<int> partial;
    for (int n = 0; n < cfg_.n_action_dims(); ++n) {
      tokens[n] = pick(decode_logits(ctx, partial, n, mode));
      partial.push_back(tokens[n]);
    }
  } else {
    // One forward pass; every head reads the pre-action position.
    Graph g;
    g.set_training(false);
    const int prompt_node = g.input(ctx.prompt_encoding);
    std::vector<int> obs_nodes;
    for (const auto& t : ctx.obs_tokens) obs_nodes.push_back(g.input(t));
    std::vector<std::vector<int>> act_tokens(ctx.obs_tokens.size());
    for (size_t t = 0; t < ctx.actions.size(); ++t) {
      const auto toks = tasks::action_to_tokens(ctx.actions[t]);
      act_tokens[t].assign(toks.begin(), toks.begin() + cfg_.n_action_dims());
    }
    const StreamNodes sn = build_stream(g, prompt_node, obs_nodes, act_tokens, AttentionMode::CAUSAL, false, nullptr);
    const int step = static_cast<int>(ctx.obs_tokens.size()) - 1;
    for (int n = 0; n < cfg_.n_action_dims(); ++n) {
      const int logits = head_logits(g, sn.x, read_position(sn.layout, step, n, mode), n);
      tokens[n] = pick(std::vector<float>(g.values(logits), g.values(logits) + cfg_.head_sizes[n]));
    }
  }
  return tasks::action_from_tokens(tokens);
}

}  // namespace mmp::model
