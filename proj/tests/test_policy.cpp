#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "core/rng.hpp"
#include "model/checkpoint.hpp"
#include "model/policy.hpp"
#include "tasks/tasks.hpp"

using namespace mmp;
using namespace mmp::model;

namespace {

const Vocabulary& vocab() {
  static const Vocabulary v = Vocabulary::standard();
  return v;
}

tasks::SuiteConfig suite() { return tasks::SuiteConfig{}; }

PolicyConfig small_cfg() {
  PolicyConfig cfg = PolicyConfig::for_sim(suite().sim);
  cfg.d = 32;
  cfg.layers = 2;
  cfg.heads = 2;
  cfg.lm_layers = 1;
  cfg.lm_heads = 2;
  cfg.dropout = 0.0f;
  return cfg;
}

tasks::TrainingSample expert_sample(tasks::TaskType task, uint64_t seed) {
  const auto cfg = suite();
  const auto level = tasks::task_allowed_at_level(cfg.split, task, tasks::Level::L1) ? tasks::Level::L1
                                                                                     : tasks::Level::L4;
  const auto inst = tasks::generate_instance(cfg, task, level, seed, vocab());
  return {inst.prompt, tasks::scripted_expert(cfg, inst)};
}

// Zeroes every parameter, then plants +30 head-bias logits so each head
// deterministically prefers the wanted token.
void plant_one_hot_heads(Policy& policy, const std::array<int, tasks::kActionDims>& tokens) {
  auto& ps = policy.params();
  for (int i = 0; i < ps.count(); ++i) std::fill(ps.at(i).values.begin(), ps.at(i).values.end(), 0.0f);
  for (int n = 0; n < policy.config().n_action_dims(); ++n)
    ps.at("head.dim" + std::to_string(n) + ".b").values[tokens[n]] = 30.0f;
}

}  // namespace

TEST_CASE("assemble_stream: minimal layout at t=0") {
  const auto layout = assemble_stream(5, {3}, {0}, 6, 64);
  CHECK(layout.length() == 8);
  CHECK(layout.prompt_len == 5);
  CHECK(layout.last_obs_pos == std::vector<int>{7});
  CHECK(layout.act_pos[0].empty());
  for (int i = 0; i < 5; ++i) CHECK(layout.entries[i].kind == StreamEntry::Kind::Prompt);
  for (int i = 5; i < 8; ++i) CHECK(layout.entries[i].kind == StreamEntry::Kind::Obs);
}

TEST_CASE("assemble_stream: length matches the independent count for random shapes") {
  core::Rng rng(41);
  for (int trial = 0; trial < 200; ++trial) {
    const int p = 1 + static_cast<int>(rng.next_below(20));
    const int steps = 1 + static_cast<int>(rng.next_below(4));
    std::vector<int> obs, act;
    int expected = p;
    for (int t = 0; t < steps; ++t) {
      obs.push_back(1 + static_cast<int>(rng.next_below(5)));
      const bool last = t == steps - 1;
      act.push_back(last ? static_cast<int>(rng.next_below(7)) : 6);
      expected += obs.back() + act.back();
    }
    const auto layout = assemble_stream(p, obs, act, 6, 4096);
    CHECK(layout.length() == expected);
  }
}

TEST_CASE("assemble_stream: six action positions per completed step") {
  const auto layout = assemble_stream(4, {2, 3, 2}, {6, 6, 0}, 6, 256);
  CHECK(layout.act_pos[0].size() == 6);
  CHECK(layout.act_pos[1].size() == 6);
  CHECK(layout.act_pos[2].empty());
  // Action positions of step t precede the observations of step t+1.
  CHECK(layout.act_pos[0].back() < layout.last_obs_pos[1]);
}

TEST_CASE("assemble_stream: exceeding max sequence length is an error") {
  CHECK_THROWS(assemble_stream(100, {50}, {6}, 6, 64));
}

TEST_CASE("forward_logits: causal mode is bitwise invariant to later-position edits") {
  Policy policy(small_cfg(), vocab(), 3);
  auto sample = expert_sample(tasks::TaskType::PUT_INTO, 1);

  core::Graph g1;
  const auto f1 = policy.build_forward(g1, sample, AttentionMode::CAUSAL, false, nullptr);
  const int d = small_cfg().d;
  const int len = f1.layout.length();

  // Perturb the last stream token's input: the final observation's last view.
  auto& last_obs = sample.trajectory.observations.back();
  for (auto& px : last_obs.views.back().patch) px = 1.0f - px;

  core::Graph g2;
  const auto f2 = policy.build_forward(g2, sample, AttentionMode::CAUSAL, false, nullptr);
  REQUIRE(f2.layout.length() == len);

  const float* h1 = g1.values(f1.hidden);
  const float* h2 = g2.values(f2.hidden);
  for (int i = 0; i < len - 1; ++i)
    for (int j = 0; j < d; ++j) CHECK(h1[i * d + j] == h2[i * d + j]);
  bool last_changed = false;
  for (int j = 0; j < d; ++j)
    if (h1[(len - 1) * d + j] != h2[(len - 1) * d + j]) last_changed = true;
  CHECK(last_changed);
}

TEST_CASE("forward_logits: future observations reach a_t only in masked-pretrain mode") {
  Policy policy(small_cfg(), vocab(), 5);
  auto sample = expert_sample(tasks::TaskType::REARRANGE_RESTORE, 7);
  REQUIRE(sample.trajectory.actions.size() >= 2);

  auto logits_at_step0 = [&](AttentionMode attn) {
    core::Graph g;
    const auto f = policy.build_forward(g, sample, attn, false, nullptr);
    std::vector<float> out;
    for (int n = 0; n < policy.config().n_action_dims(); ++n) {
      const int l = policy.head_logits(g, f.hidden, policy.read_position(f.layout, 0, n, DecodeMode::AUTOREGRESSIVE), n);
      out.insert(out.end(), g.values(l), g.values(l) + g.cols(l));
    }
    return out;
  };

  const auto causal_before = logits_at_step0(AttentionMode::CAUSAL);
  const auto masked_before = logits_at_step0(AttentionMode::MASKED_PRETRAIN);

  // Perturb o_1 (the observation after the first action).
  for (auto& v : sample.trajectory.observations[1].views)
    for (auto& px : v.patch) px = 1.0f - px;

  CHECK(logits_at_step0(AttentionMode::CAUSAL) == causal_before);
  CHECK(logits_at_step0(AttentionMode::MASKED_PRETRAIN) != masked_before);
}

TEST_CASE("forward_logits: one logit vector per action position with the right arity") {
  Policy policy(small_cfg(), vocab(), 9);
  const auto sample = expert_sample(tasks::TaskType::FOLLOW_ORDER, 3);
  core::Graph g;
  const auto f = policy.build_forward(g, sample, AttentionMode::CAUSAL, false, nullptr);
  for (size_t t = 0; t < sample.trajectory.actions.size(); ++t) {
    for (int n = 0; n < policy.config().n_action_dims(); ++n) {
      const int l =
          policy.head_logits(g, f.hidden, policy.read_position(f.layout, static_cast<int>(t), n, DecodeMode::AUTOREGRESSIVE), n);
      CHECK(g.rows(l) == 1);
      CHECK(g.cols(l) == policy.config().head_sizes[n]);
    }
  }
}

TEST_CASE("action_loss: logits matching targets with +30 margin give near-zero loss") {
  Policy policy(small_cfg(), vocab(), 11);
  const auto sample = expert_sample(tasks::TaskType::PUT_INTO, 4);
  REQUIRE(sample.trajectory.actions.size() == 1);
  plant_one_hot_heads(policy, tasks::action_to_tokens(sample.trajectory.actions[0]));
  CHECK(policy.action_loss({sample}, DecodeMode::AUTOREGRESSIVE, AttentionMode::CAUSAL) < 1e-6f);
}

TEST_CASE("action_loss: equals the manual per-dimension cross-entropy sum") {
  Policy policy(small_cfg(), vocab(), 13);
  const auto sample = expert_sample(tasks::TaskType::REARRANGE_RESTORE, 5);

  core::Graph g;
  const auto f = policy.build_forward(g, sample, AttentionMode::CAUSAL, false, nullptr);
  double manual = 0.0;
  for (size_t t = 0; t < sample.trajectory.actions.size(); ++t) {
    const auto toks = tasks::action_to_tokens(sample.trajectory.actions[t]);
    for (int n = 0; n < policy.config().n_action_dims(); ++n) {
      const int l =
          policy.head_logits(g, f.hidden, policy.read_position(f.layout, static_cast<int>(t), n, DecodeMode::AUTOREGRESSIVE), n);
      const std::vector<double> row(g.values(l), g.values(l) + g.cols(l));
      manual += core::cross_entropy(row, toks[n]);
    }
  }
  const float loss = policy.action_loss({sample}, DecodeMode::AUTOREGRESSIVE, AttentionMode::CAUSAL);
  CHECK(loss == doctest::Approx(manual).epsilon(1e-5));
}

TEST_CASE("action_loss: autoregressive and independent coincide when N_a = 1") {
  PolicyConfig cfg = small_cfg();
  cfg.head_sizes = {8};
  Policy policy(cfg, vocab(), 17);
  const auto sample = expert_sample(tasks::TaskType::PUT_INTO, 6);
  const float ar = policy.action_loss({sample}, DecodeMode::AUTOREGRESSIVE, AttentionMode::CAUSAL);
  const float ind = policy.action_loss({sample}, DecodeMode::INDEPENDENT, AttentionMode::CAUSAL);
  CHECK(ar == ind);
}

TEST_CASE("pretrain_loss: a length-1 trajectory contributes exactly N_a tokens") {
  Policy policy(small_cfg(), vocab(), 19);
  const auto base = expert_sample(tasks::TaskType::PUT_INTO, 8);
  const auto sample = tasks::make_pretrain_sample(base.trajectory, vocab(), suite().sim);
  CHECK(policy.loss_token_count(sample) == 6);
  CHECK(policy.pretrain_loss({sample}) > 0.0f);
}

TEST_CASE("pretrain_loss: equals action_loss on the same stream in causal mode") {
  PolicyConfig cfg = small_cfg();
  cfg.attention_mode = AttentionMode::CAUSAL;
  cfg.decode_mode = DecodeMode::AUTOREGRESSIVE;
  Policy policy(cfg, vocab(), 23);
  const auto base = expert_sample(tasks::TaskType::TWIST, 9);
  const auto sample = tasks::make_pretrain_sample(base.trajectory, vocab(), suite().sim);
  CHECK(policy.pretrain_loss({sample}) ==
        policy.action_loss({sample}, DecodeMode::AUTOREGRESSIVE, AttentionMode::CAUSAL));
}

TEST_CASE("decode_action: near-one-hot heads make both modes return the same action") {
  Policy policy(small_cfg(), vocab(), 29);
  const auto cfg = suite();
  const auto inst = tasks::generate_instance(cfg, tasks::TaskType::PUT_INTO, tasks::Level::L1, 11, vocab());
  const auto traj = tasks::scripted_expert(cfg, inst);
  const auto want = tasks::action_to_tokens(traj.actions[0]);
  plant_one_hot_heads(policy, want);

  auto ctx = policy.begin_episode(inst.prompt);
  policy.push_observation(ctx, traj.observations[0]);

  const auto a1 = policy.decode_action(ctx, DecodeMode::AUTOREGRESSIVE, DecodeStrategy::GREEDY, nullptr);
  const auto a2 = policy.decode_action(ctx, DecodeMode::INDEPENDENT, DecodeStrategy::GREEDY, nullptr);
  CHECK(a1 == traj.actions[0]);
  CHECK(a2 == traj.actions[0]);

  core::Rng r1(5), r2(5);
  const auto s1 = policy.decode_action(ctx, DecodeMode::AUTOREGRESSIVE, DecodeStrategy::SAMPLE, &r1);
  CHECK(s1 == traj.actions[0]);  // margin +30 leaves no sampling mass elsewhere
  (void)r2;
}

TEST_CASE("decode_action: greedy decoding is deterministic") {
  Policy policy(small_cfg(), vocab(), 31);
  const auto cfg = suite();
  const auto inst = tasks::generate_instance(cfg, tasks::TaskType::FOLLOW_ORDER, tasks::Level::L1, 13, vocab());
  const auto traj = tasks::scripted_expert(cfg, inst);

  auto ctx = policy.begin_episode(inst.prompt);
  policy.push_observation(ctx, traj.observations[0]);
  const auto a = policy.decode_action(ctx, DecodeMode::AUTOREGRESSIVE, DecodeStrategy::GREEDY, nullptr);
  const auto b = policy.decode_action(ctx, DecodeMode::AUTOREGRESSIVE, DecodeStrategy::GREEDY, nullptr);
  CHECK(a == b);
}

TEST_CASE("gradient sanity: every parameter group receives nonzero gradient") {
  PolicyConfig cfg = small_cfg();
  cfg.dropout = 0.0f;
  Policy policy(cfg, vocab(), 37);
  const auto sample = expert_sample(tasks::TaskType::TWIST, 15);

  core::Graph g;
  const int loss = policy.build_sample_loss(g, sample, DecodeMode::AUTOREGRESSIVE, AttentionMode::CAUSAL, false,
                                            nullptr);
  g.backward(loss);
  core::GradientRecord rec(policy.params());
  core::accumulate_param_grads(g, 1.0f, rec);

  for (const std::string prefix : {"obj_enc.", "lm.", "decoder.", "head.", "act_emb."}) {
    double norm = 0;
    for (int i = 0; i < policy.params().count(); ++i) {
      if (policy.params().name(i).rfind(prefix, 0) != 0) continue;
      for (const float v : rec.at(i).values) norm += std::fabs(v);
    }
    INFO(prefix);
    CHECK(norm > 0.0);
  }
}

TEST_CASE("checkpoint: save/load preserves forward outputs bitwise") {
  Policy policy(small_cfg(), vocab(), 41);
  const auto sample = expert_sample(tasks::TaskType::PUT_INTO, 17);
  const float before = policy.action_loss({sample}, DecodeMode::AUTOREGRESSIVE, AttentionMode::CAUSAL);

  const std::string path = "/tmp/mmp_test_ckpt.bin";
  CheckpointMeta meta;
  meta.phase = "finetune";
  meta.step = 123;
  meta.seed = 7;
  save_checkpoint(policy, meta, path);

  CheckpointMeta loaded_meta;
  const Policy loaded = load_checkpoint(path, &loaded_meta);
  CHECK(loaded_meta.phase == "finetune");
  CHECK(loaded_meta.step == 123);
  const float after = loaded.action_loss({sample}, DecodeMode::AUTOREGRESSIVE, AttentionMode::CAUSAL);
  CHECK(before == after);
  std::remove(path.c_str());
}

TEST_CASE("checkpoint: two saves of identical state are byte-identical") {
  Policy policy(small_cfg(), vocab(), 43);
  CheckpointMeta meta;
  save_checkpoint(policy, meta, "/tmp/mmp_ckpt_a.bin");
  save_checkpoint(policy, meta, "/tmp/mmp_ckpt_b.bin");
  auto slurp = [](const std::string& p) {
    std::ifstream is(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  };
  CHECK(slurp("/tmp/mmp_ckpt_a.bin") == slurp("/tmp/mmp_ckpt_b.bin"));
  std::remove("/tmp/mmp_ckpt_a.bin");
  std::remove("/tmp/mmp_ckpt_b.bin");
}

TEST_CASE("checkpoint: unknown version is rejected") {
  Policy policy(small_cfg(), vocab(), 47);
  const std::string path = "/tmp/mmp_ckpt_badver.bin";
  save_checkpoint(policy, CheckpointMeta{}, path);
  std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
  f.seekp(8);
  const char bad = 9;
  f.write(&bad, 1);
  f.close();
  CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("unsupported checkpoint version"), std::runtime_error);
  std::remove(path.c_str());
}

TEST_CASE("determinism: same seed gives identical initialization and losses") {
  const auto sample = expert_sample(tasks::TaskType::PUT_INTO, 19);
  Policy a(small_cfg(), vocab(), 53);
  Policy b(small_cfg(), vocab(), 53);
  CHECK(a.action_loss({sample}, DecodeMode::AUTOREGRESSIVE, AttentionMode::CAUSAL) ==
        b.action_loss({sample}, DecodeMode::AUTOREGRESSIVE, AttentionMode::CAUSAL));
}
