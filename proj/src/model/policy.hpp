#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "core/graph.hpp"
#include "core/params.hpp"
#include "core/rng.hpp"
#include "model/encoders.hpp"
#include "model/vocab.hpp"
#include "tasks/tasks.hpp"

namespace mmp::model {

enum class DecodeMode : uint8_t { AUTOREGRESSIVE, INDEPENDENT };
enum class AttentionMode : uint8_t { CAUSAL, MASKED_PRETRAIN };
enum class DecodeStrategy : uint8_t { GREEDY, SAMPLE };

const char* to_string(DecodeMode m);
const char* to_string(AttentionMode m);
DecodeMode decode_mode_from_string(const std::string& s);
AttentionMode attention_mode_from_string(const std::string& s);

struct PolicyConfig {
  int d = 64;
  int layers = 4;
  int heads = 4;
  int lm_layers = 2;
  int lm_heads = 4;
  std::vector<int> head_sizes = {8, 8, 4, 8, 8, 4};  // bins per action dimension
  int max_seq_len = 256;
  int max_prompt_len = 128;
  float dropout = 0.1f;
  DecodeMode decode_mode = DecodeMode::AUTOREGRESSIVE;
  AttentionMode attention_mode = AttentionMode::CAUSAL;
  PromptMode prompt_mode = PromptMode::LM_PLUS_RC;
  bool freeze_lm = false;
  int patch_k = 16;
  int board_w = 8;
  int board_h = 8;
  int rotations = 4;

  int n_action_dims() const { return static_cast<int>(head_sizes.size()); }
  EncoderConfig encoder_config(int vocab_size) const;
  static PolicyConfig for_sim(const sim::SimConfig& sim);
};

void validate(const PolicyConfig& cfg);

std::string policy_config_to_text(const PolicyConfig& cfg);
PolicyConfig policy_config_from_text(const std::string& text);

// Token stream layout: prompt prefix, then per timestep the observation's
// object tokens followed by action-dimension tokens. Action position n of a
// completed step carries the embedding of ground-truth dimension n; the
// prediction read points are the last observation token (dimension 0) and
// action position n-1 (dimension n) in autoregressive mode.
struct StreamEntry {
  enum class Kind : uint8_t { Prompt, Obs, Act } kind = Kind::Prompt;
  int step = 0;
  int dim = 0;
};

struct StreamLayout {
  std::vector<StreamEntry> entries;
  int prompt_len = 0;
  std::vector<int> last_obs_pos;          // per step
  std::vector<std::vector<int>> act_pos;  // per step, per present action token
  int length() const { return static_cast<int>(entries.size()); }
};

// obs_counts[t] is the number of object tokens of o_t (>= 1); act_counts[t]
// the number of action tokens present after o_t (N_a for completed steps,
// fewer at the decode point). Throws if the stream exceeds max_seq_len.
StreamLayout assemble_stream(int prompt_len, const std::vector<int>& obs_counts, const std::vector<int>& act_counts,
                             int n_action_dims, int max_seq_len);

// CAUSAL: strict lower-triangular visibility (position i sees j <= i).
// MASKED_PRETRAIN: observation tokens are visible bidirectionally, action
// tokens causally, prompt tokens only within the prompt prefix.
core::Tensor build_attention_mask(const StreamLayout& layout, AttentionMode mode);

class Policy {
public:
  Policy(PolicyConfig cfg, Vocabulary vocab, uint64_t init_seed);

  const PolicyConfig& config() const { return cfg_; }
  const Vocabulary& vocab() const { return vocab_; }
  core::ParamStore& params() { return params_; }
  const core::ParamStore& params() const { return params_; }
  const ObjectEncoder& object_encoder() const { return *obj_enc_; }
  const PromptEncoder& prompt_encoder() const { return *prompt_enc_; }
  uint64_t init_seed() const { return init_seed_; }

  // Applies cfg.freeze_lm to the parameter store.
  void apply_freezes();

  struct Forward {
    int hidden = -1;  // L x d node
    StreamLayout layout;
  };

  // Full teacher-forced forward over a sample (prompt + all observations +
  // ground-truth action tokens).
  Forward build_forward(core::Graph& g, const tasks::TrainingSample& sample, AttentionMode attn, bool training,
                        core::Rng* dropout_rng) const;

  // 1 x head_sizes[dim] logits node for a stream position.
  int head_logits(core::Graph& g, int hidden, int position, int dim) const;

  int read_position(const StreamLayout& layout, int step, int dim, DecodeMode mode) const;

  // Sum of per-step, per-dimension cross-entropies for one sample.
  int build_sample_loss(core::Graph& g, const tasks::TrainingSample& sample, DecodeMode mode, AttentionMode attn,
                        bool training, core::Rng* dropout_rng) const;

  int loss_token_count(const tasks::TrainingSample& sample) const {
    return static_cast<int>(sample.trajectory.actions.size()) * cfg_.n_action_dims();
  }

  // Evaluation-mode batch losses (mean over samples of summed CE terms).
  float action_loss(const std::vector<tasks::TrainingSample>& batch, DecodeMode mode, AttentionMode attn) const;

  // The motion-following objective: same heads, prompt built by
  // make_pretrain_sample, attention mode from the config.
  float pretrain_loss(const std::vector<tasks::TrainingSample>& batch) const;

  // Teacher-forced per-dimension token accuracy.
  std::vector<double> token_accuracy(const std::vector<tasks::TrainingSample>& batch, DecodeMode mode) const;

  // ---- episode decoding ----
  struct EpisodeContext {
    tasks::MultimodalPrompt prompt;
    TokenizedPrompt tok;
    core::Tensor prompt_encoding;
    std::vector<core::Tensor> obs_tokens;
    std::vector<int> obs_counts;
    std::vector<sim::ActionPrim> actions;

    EpisodeContext() = default;
    EpisodeContext(const EpisodeContext&) = delete;
    EpisodeContext& operator=(const EpisodeContext&) = delete;
    EpisodeContext(EpisodeContext&&) = default;
    EpisodeContext& operator=(EpisodeContext&&) = default;
  };

  EpisodeContext begin_episode(const tasks::MultimodalPrompt& prompt) const;
  void push_observation(EpisodeContext& ctx, const sim::Observation& obs) const;
  void push_action(EpisodeContext& ctx, const sim::ActionPrim& action) const;

  // Decodes the next action given the observations pushed so far. GREEDY is
  // deterministic; SAMPLE draws from the head distributions with sample_rng.
  sim::ActionPrim decode_action(const EpisodeContext& ctx, DecodeMode mode, DecodeStrategy strategy,
                                core::Rng* sample_rng) const;

private:
  PolicyConfig cfg_;
  Vocabulary vocab_;
  uint64_t init_seed_;
  core::ParamStore params_;
  std::unique_ptr<ObjectEncoder> obj_enc_;
  std::unique_ptr<PromptEncoder> prompt_enc_;
  std::vector<BlockParams> blocks_;
  int pos_emb_ = -1;
  int final_g_ = -1, final_b_ = -1;
  std::vector<int> head_w_, head_b_;
  std::vector<int> act_emb_;

  struct StreamNodes {
    int x = -1;
    StreamLayout layout;
  };
  StreamNodes build_stream(core::Graph& g, int prompt_node, const std::vector<int>& obs_nodes,
                           const std::vector<std::vector<int>>& act_tokens, AttentionMode attn, bool training,
                           core::Rng* dropout_rng) const;

  std::vector<float> decode_logits(const EpisodeContext& ctx, const std::vector<int>& partial, int dim,
                                   DecodeMode mode) const;
};

}  // namespace mmp::model
