// Acceptance suite: one criterion per function, one pass/fail line each.
// Usage: acceptance [name...]   (no args runs everything)
//
// Training-based criteria pin their full configuration here; nothing is
// deferred to later calibration.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "core/rng.hpp"
#include "model/checkpoint.hpp"
#include "support/acceptance.hpp"
#include "pipeline/config.hpp"
#include "pipeline/evaluate.hpp"
#include "pipeline/train.hpp"
#include "support/gradcheck.hpp"
#include "tasks/tasks.hpp"

using namespace mmp;
using Clock = std::chrono::steady_clock;

namespace {

using acceptance::Criterion;
using acceptance::Outcome;

const model::Vocabulary& vocab() {
  static const model::Vocabulary v = model::Vocabulary::standard();
  return v;
}

std::string pct(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f%%", 100.0 * x);
  return buf;
}

// ---------------------------------------------------------------------------
// 1. Gradient verification: every supported op and three composed models.

Outcome criterion_gradients() {
  double worst = 0.0;
  std::string where;
  for (auto& c : gradcheck::per_op_cases(2024)) {
    const auto rep = gradcheck::check(c.build, c.params);
    if (rep.max_rel_err > worst) {
      worst = rep.max_rel_err;
      where = c.name;
    }
  }
  for (const uint64_t seed : {11u, 22u, 33u}) {
    auto c = gradcheck::composed_model(seed);
    const auto rep = gradcheck::check(c.build, c.params);
    if (rep.max_rel_err > worst) {
      worst = rep.max_rel_err;
      where = c.name;
    }
  }
  char buf[128];
  std::snprintf(buf, sizeof(buf), "max rel err %.2e (%s), bound 1e-4", worst, where.c_str());
  return {worst < 1e-4, buf};
}

// ---------------------------------------------------------------------------
// 2. Expert-oracle soundness: 500 seeded instances per family, 100% success.

Outcome criterion_expert() {
  const tasks::SuiteConfig cfg;
  int total = 0, ok = 0;
  for (const tasks::TaskType task : {tasks::TaskType::PUT_INTO, tasks::TaskType::REARRANGE_RESTORE,
                                     tasks::TaskType::TWIST, tasks::TaskType::FOLLOW_ORDER,
                                     tasks::TaskType::FOLLOW_MOTION}) {
    const tasks::Level level =
        tasks::task_allowed_at_level(cfg.split, task, tasks::Level::L1) ? tasks::Level::L1 : tasks::Level::L4;
    for (uint64_t seed = 0; seed < 500; ++seed) {
      ++total;
      const auto inst = tasks::generate_instance(cfg, task, level, seed, vocab());
      const auto traj = tasks::scripted_expert(cfg, inst);
      sim::Scene s = inst.initial_scene;
      bool legal = true;
      for (const auto& a : traj.actions) {
        const auto [next, flag] = sim::step(s, a, cfg.sim);
        legal = legal && flag == sim::StepFlag::OK;
        s = next;
      }
      if (legal && tasks::predicate_holds(inst.predicate, s)) ++ok;
    }
  }
  return {ok == total, std::to_string(ok) + "/" + std::to_string(total) + " demonstrations succeed under replay"};
}

// ---------------------------------------------------------------------------
// 3. Motion-following sample validity: 1000 samples replay bit-exactly.

Outcome criterion_pretrain_samples() {
  const tasks::SuiteConfig cfg;
  int checked = 0, exact = 0;
  uint64_t seed = 0;
  while (checked < 1000) {
    for (const tasks::TaskType task : {tasks::TaskType::PUT_INTO, tasks::TaskType::REARRANGE_RESTORE,
                                       tasks::TaskType::TWIST, tasks::TaskType::FOLLOW_ORDER,
                                       tasks::TaskType::FOLLOW_MOTION}) {
      if (checked >= 1000) break;
      const tasks::Level level =
          tasks::task_allowed_at_level(cfg.split, task, tasks::Level::L1) ? tasks::Level::L1 : tasks::Level::L4;
      const auto inst = tasks::generate_instance(cfg, task, level, seed, vocab());
      const auto sample = tasks::make_pretrain_sample(tasks::scripted_expert(cfg, inst), vocab(), cfg.sim);
      ++checked;

      sim::Scene s = sample.trajectory.start_scene;
      std::vector<sim::Observation> replay = {sim::observe(s, cfg.sim)};
      for (const auto& a : sample.trajectory.actions) {
        s = sim::step(s, a, cfg.sim).first;
        replay.push_back(sim::observe(s, cfg.sim));
      }
      size_t frame = 0;
      bool good = true;
      for (const auto& e : sample.prompt.elements) {
        if (e.is_word) continue;
        if (frame >= replay.size() || e.image.views.size() != replay[frame].views.size()) {
          good = false;
          break;
        }
        for (size_t i = 0; i < e.image.views.size(); ++i)
          good = good && e.image.views[i].view.patch == replay[frame].views[i].patch &&
                 e.image.views[i].view.bbox == replay[frame].views[i].bbox;
        ++frame;
      }
      if (good && frame == replay.size()) ++exact;
    }
    ++seed;
  }
  return {exact == checked, std::to_string(exact) + "/" + std::to_string(checked) + " samples replay bit-exactly"};
}

// ---------------------------------------------------------------------------
// 4. Residual-connection exactness at 1e-6.

Outcome criterion_rc_exactness() {
  model::PolicyConfig pc = model::PolicyConfig::for_sim(sim::SimConfig{});
  pc.d = 64;
  pc.layers = 2;
  pc.lm_layers = 2;
  pc.dropout = 0.0f;
  model::Policy policy(pc, vocab(), 77);

  const tasks::SuiteConfig cfg;
  const auto inst = tasks::generate_instance(cfg, tasks::TaskType::TWIST, tasks::Level::L1, 5, vocab());
  const auto tok = model::tokenize_prompt(inst.prompt, vocab());

  double worst = 0.0;

  {  // Numeric identity: output_i - LM(x)_i == v_i at visual positions.
    core::Graph g1, g2, g3;
    const int rc = policy.prompt_encoder().encode(g1, policy.params(), tok, policy.object_encoder(),
                                                  model::PromptMode::LM_PLUS_RC, 0.0f);
    const int lm = policy.prompt_encoder().encode(g2, policy.params(), tok, policy.object_encoder(),
                                                  model::PromptMode::LM_ONLY, 0.0f);
    for (int i = 0; i < tok.length(); ++i) {
      for (int j = 0; j < pc.d; ++j) {
        const double diff = static_cast<double>(g1.values(rc)[i * pc.d + j]) - g2.values(lm)[i * pc.d + j];
        double want = 0.0;
        if (tok.visual[i]) {
          const int v = policy.object_encoder().encode_view(g3, policy.params(), tok.items[i].view->view);
          want = g3.values(v)[j];
        }
        worst = std::max(worst, std::fabs(diff - want));
      }
    }
  }

  {  // Zero LM: RC output equals the raw visual tokens exactly.
    for (int i = 0; i < policy.params().count(); ++i)
      if (policy.params().name(i).rfind("lm.", 0) == 0)
        std::fill(policy.params().at(i).values.begin(), policy.params().at(i).values.end(), 0.0f);
    core::Graph g1, g3;
    const int rc = policy.prompt_encoder().encode(g1, policy.params(), tok, policy.object_encoder(),
                                                  model::PromptMode::LM_PLUS_RC, 0.0f);
    for (int i = 0; i < tok.length(); ++i) {
      for (int j = 0; j < pc.d; ++j) {
        double want = 0.0;
        if (tok.visual[i]) {
          const int v = policy.object_encoder().encode_view(g3, policy.params(), tok.items[i].view->view);
          want = g3.values(v)[j];
        }
        worst = std::max(worst, std::fabs(static_cast<double>(g1.values(rc)[i * pc.d + j]) - want));
      }
    }
  }

  char buf[96];
  std::snprintf(buf, sizeof(buf), "max deviation %.2e, bound 1e-6", worst);
  return {worst < 1e-6, buf};
}

// ---------------------------------------------------------------------------
// 10. Reproducibility: identical eval reports; bitwise checkpoint round trip.

Outcome criterion_reproducibility() {
  pipeline::KeyValueFile kv;
  kv.set("model.d", "32");
  kv.set("model.layers", "2");
  kv.set("model.heads", "2");
  kv.set("model.lm_layers", "1");
  kv.set("model.lm_heads", "2");
  kv.set("eval.episodes", "12");
  kv.set("eval.levels", "L1,L4");
  const auto cfg = pipeline::TrainConfig::from_file(kv);
  auto policy = pipeline::make_policy(cfg, vocab());

  const auto a = pipeline::evaluate(policy, model::CheckpointMeta{}, cfg);
  const auto b = pipeline::evaluate(policy, model::CheckpointMeta{}, cfg);
  const bool reports_equal = a == b && pipeline::report_to_json(a) == pipeline::report_to_json(b);

  const tasks::SuiteConfig suite = cfg.suite();
  const auto inst = tasks::generate_instance(suite, tasks::TaskType::PUT_INTO, tasks::Level::L1, 3, vocab());
  const tasks::TrainingSample sample{inst.prompt, tasks::scripted_expert(suite, inst)};
  const float before = policy.action_loss({sample}, cfg.policy.decode_mode, model::AttentionMode::CAUSAL);
  model::save_checkpoint(policy, model::CheckpointMeta{}, "/tmp/mmp_acc_ckpt.bin");
  const auto loaded = model::load_checkpoint("/tmp/mmp_acc_ckpt.bin");
  const float after = loaded.action_loss({sample}, cfg.policy.decode_mode, model::AttentionMode::CAUSAL);
  std::remove("/tmp/mmp_acc_ckpt.bin");

  const bool bitwise = before == after;
  return {reports_equal && bitwise,
          std::string("identical reports: ") + (reports_equal ? "yes" : "no") +
              ", bitwise forward after reload: " + (bitwise ? "yes" : "no")};
}

std::vector<Criterion>& registry() {
  static std::vector<Criterion> r;
  return r;
}

}  // namespace

// Training-based criteria live in a separate translation unit.
void register_training_criteria(std::vector<acceptance::Criterion>& r);

int main(int argc, char** argv) {
  auto& r = registry();
  r.push_back({"1-gradients", "gradient verification vs finite differences", criterion_gradients});
  r.push_back({"2-expert", "scripted expert soundness over 500 seeds per family", criterion_expert});
  r.push_back({"3-pretrain-samples", "motion-following sample validity (1000 samples)", criterion_pretrain_samples});
  r.push_back({"4-rc-exactness", "residual-connection exactness at 1e-6", criterion_rc_exactness});
  register_training_criteria(r);
  r.push_back({"10-reproducibility", "identical reports and bitwise checkpoint reload", criterion_reproducibility});

  std::vector<std::string> wanted(argv + 1, argv + argc);
  bool all_pass = true;
  for (const auto& c : r) {
    if (!wanted.empty()) {
      bool match = false;
      for (const auto& w : wanted) match = match || c.name.rfind(w, 0) == 0;
      if (!match) continue;
    }
    const auto t0 = Clock::now();
    Outcome out;
    try {
      out = c.fn();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    std::printf("[%s] criterion %s: %s (%s) [%.1fs]\n", out.pass ? "PASS" : "FAIL", c.name.c_str(),
                c.description.c_str(), out.detail.c_str(), secs);
    std::fflush(stdout);
    all_pass = all_pass && out.pass;
  }
  return all_pass ? 0 : 1;
}
