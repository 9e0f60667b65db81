#pragma once

#include <cstdint>
#include <vector>

#include "core/graph.hpp"
#include "core/params.hpp"
#include "model/transformer.hpp"
#include "model/vocab.hpp"
#include "tasks/tasks.hpp"

namespace mmp::model {

enum class PromptMode : uint8_t { LM_ONLY, LM_PLUS_RC };

struct EncoderConfig {
  int d = 64;
  int lm_layers = 2;
  int lm_heads = 4;
  int patch_k = 16;
  int board_w = 8;
  int board_h = 8;
  int max_prompt_len = 128;
  int vocab_size = 0;
  float dropout = 0.1f;
  PromptMode prompt_mode = PromptMode::LM_PLUS_RC;
};

// A prompt flattened to one item per position: each word is one item, each
// image element expands to one visual item per depicted object.
struct TokenizedPrompt {
  struct Item {
    bool is_word = true;
    int word_id = 0;
    const tasks::PromptView* view = nullptr;  // borrowed from the prompt
  };
  std::vector<Item> items;
  std::vector<bool> visual;  // per item
  int length() const { return static_cast<int>(items.size()); }
};

TokenizedPrompt tokenize_prompt(const tasks::MultimodalPrompt& prompt, const Vocabulary& vocab);

// Patch encoder (2-layer perceptron over the flattened patch) + bbox encoder
// + fusion MLP, producing one d-dim token per object view. Bboxes are
// normalized by the board pixel extent and expanded with sinusoidal
// features before their MLP.
class ObjectEncoder {
public:
  static constexpr int kBboxFeatures = 4 + 4 * 2 * 4;  // raw + sin/cos at 4 frequencies
  ObjectEncoder(core::ParamStore& ps, const EncoderConfig& cfg, uint64_t seed);

  // Encodes n views into an n x d node.
  int encode_views(core::Graph& g, const core::ParamStore& ps, const std::vector<const sim::ObjectView*>& views) const;

  int encode_view(core::Graph& g, const core::ParamStore& ps, const sim::ObjectView& view) const {
    return encode_views(g, ps, {&view});
  }

  static const char* param_prefix() { return "obj_enc."; }

private:
  EncoderConfig cfg_;
  int patch_w1_, patch_b1_, patch_w2_, patch_b2_;
  int bbox_w1_, bbox_b1_, bbox_w2_, bbox_b2_;
  int fuse_w1_, fuse_b1_, fuse_w2_, fuse_b2_;
};

// Small trainable bidirectional LM over the mixed word/visual sequence, with
// an optional residual connection from the input visual tokens to the
// encoded embeddings (added after the final layer norm, at visual positions
// only).
class PromptEncoder {
public:
  PromptEncoder(core::ParamStore& ps, const EncoderConfig& cfg, uint64_t seed);

  // Returns a P x d node. Visual slots are filled with object tokens from
  // obj_enc; mode selects whether the residual connection is added.
  int encode(core::Graph& g, const core::ParamStore& ps, const TokenizedPrompt& tok, const ObjectEncoder& obj_enc,
             PromptMode mode, float dropout) const;

  static const char* param_prefix() { return "lm."; }

private:
  EncoderConfig cfg_;
  int word_emb_, pos_emb_;
  std::vector<BlockParams> blocks_;
  int final_g_, final_b_;
};

}  // namespace mmp::model
