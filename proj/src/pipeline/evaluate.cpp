#include "pipeline/evaluate.hpp"

#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "core/rng.hpp"

namespace mmp::pipeline {

using core::Rng;
using json = nlohmann::json;

double EvalReport::rate(tasks::Level level, tasks::TaskType task) const {
  for (const auto& t : tasks)
    if (t.level == level && t.task == task) return t.rate();
  throw std::out_of_range("eval report: no entry for that (level, task)");
}

double EvalReport::level_average(tasks::Level level) const {
  double sum = 0;
  int n = 0;
  for (const auto& t : tasks) {
    if (t.level != level) continue;
    sum += t.rate();
    ++n;
  }
  if (n == 0) throw std::out_of_range("eval report: no entries for that level");
  return sum / n;
}

namespace {

std::vector<tasks::TaskType> tasks_for_level(const tasks::SplitConfig& split, tasks::Level level) {
  return level == tasks::Level::L4 ? split.l4_tasks : split.train_tasks;
}

// Seeded (level, task) episode sweep. Episodes are independent; logs land in
// a preassigned slot per episode so the report does not depend on worker
// scheduling.
template <typename EpisodeFn>
EvalReport run_suite(const TrainConfig& cfg, EpisodeFn&& episode_fn) {
  const tasks::SuiteConfig suite = cfg.suite();
  const model::Vocabulary vocab = model::Vocabulary::standard();

  EvalReport report;
  report.episodes_per_task = cfg.eval_episodes;
  report.config_hash = config_hash(cfg);

  for (const tasks::Level level : cfg.eval_levels) {
    for (const tasks::TaskType task : tasks_for_level(suite.split, level)) {
      TaskReport tr;
      tr.level = level;
      tr.task = task;
      tr.episodes = cfg.eval_episodes;
      tr.logs.resize(cfg.eval_episodes);

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
      for (int e = 0; e < cfg.eval_episodes; ++e) {
        const uint64_t seed =
            Rng::mix(cfg.eval_seed, Rng::mix(static_cast<uint64_t>(level) * 131 + static_cast<uint64_t>(task), e));
        tasks::TaskInstance instance = tasks::generate_instance(suite, task, level, seed, vocab);
        if (cfg.eval_edit_prompts && level == tasks::Level::L4 &&
            (task == tasks::TaskType::TWIST || task == tasks::TaskType::FOLLOW_ORDER ||
             task == tasks::TaskType::FOLLOW_MOTION))
          instance = tasks::edit_holdout_prompt(instance, vocab);
        const EpisodeRunResult out = episode_fn(instance);
        tr.logs[e] = {seed, out.steps, out.success};
      }

      for (const auto& log : tr.logs) tr.successes += log.success ? 1 : 0;
      report.tasks.push_back(std::move(tr));
    }
  }
  return report;
}

}  // namespace

EvalReport evaluate_with_source(const TrainConfig& cfg, const ActionSource& source) {
  const sim::SimConfig sim_cfg = cfg.sim;
  return run_suite(cfg, [&](const tasks::TaskInstance& instance) {
    const int limit = std::max(1, 2 * instance.expert_steps);
    sim::Scene scene = instance.initial_scene;
    std::vector<sim::ActionPrim> done;
    EpisodeRunResult out;
    for (int step = 0; step <= limit; ++step) {
      if (tasks::predicate_holds(instance.predicate, scene)) {
        out.success = true;
        out.steps = step;
        return out;
      }
      if (step == limit) break;
      const sim::ActionPrim action = source(instance, scene, done);
      scene = sim::step(scene, action, sim_cfg).first;  // illegal actions consume the step
      done.push_back(action);
    }
    out.steps = limit;
    return out;
  });
}

EpisodeRunResult run_policy_episode(const model::Policy& policy, const tasks::TaskInstance& instance,
                                    const sim::SimConfig& sim_cfg, model::DecodeMode mode) {
  const int limit = std::max(1, 2 * instance.expert_steps);
  sim::Scene scene = instance.initial_scene;
  auto ctx = policy.begin_episode(instance.prompt);
  EpisodeRunResult out;
  for (int step = 0; step <= limit; ++step) {
    if (tasks::predicate_holds(instance.predicate, scene)) {
      out.success = true;
      out.steps = step;
      return out;
    }
    if (step == limit) break;
    policy.push_observation(ctx, sim::observe(scene, sim_cfg));
    const sim::ActionPrim action = policy.decode_action(ctx, mode, model::DecodeStrategy::GREEDY, nullptr);
    policy.push_action(ctx, action);
    scene = sim::step(scene, action, sim_cfg).first;
  }
  out.steps = limit;
  return out;
}

EvalReport evaluate(const model::Policy& policy, const model::CheckpointMeta& meta, const TrainConfig& cfg) {
  // The checkpoint's data manifest must describe the same world.
  if (!meta.manifest_text.empty()) {
    const tasks::Manifest m = tasks::manifest_from_text(meta.manifest_text);
    if (m.sim.board_w != cfg.sim.board_w || m.sim.board_h != cfg.sim.board_h || m.sim.patch_k != cfg.sim.patch_k ||
        m.sim.rotations != cfg.sim.rotations || m.sim.shapes != cfg.sim.shapes || m.sim.textures != cfg.sim.textures)
      throw std::runtime_error("evaluate: checkpoint manifest does not match the evaluation world");
  }
  if (policy.config().board_w != cfg.sim.board_w || policy.config().board_h != cfg.sim.board_h ||
      policy.config().rotations != cfg.sim.rotations || policy.config().patch_k != cfg.sim.patch_k)
    throw std::runtime_error("evaluate: policy heads do not match the evaluation world");

  const model::DecodeMode mode = policy.config().decode_mode;
  const sim::SimConfig sim_cfg = cfg.sim;
  return run_suite(cfg,
                   [&](const tasks::TaskInstance& instance) { return run_policy_episode(policy, instance, sim_cfg, mode); });
}

std::string report_to_json(const EvalReport& report) {
  json j;
  j["episodes_per_task"] = report.episodes_per_task;
  j["config_hash"] = report.config_hash;
  j["tasks"] = json::array();
  for (const auto& t : report.tasks) {
    json jt;
    jt["level"] = tasks::to_string(t.level);
    jt["task"] = tasks::to_string(t.task);
    jt["episodes"] = t.episodes;
    jt["successes"] = t.successes;
    jt["rate"] = t.rate();
    jt["episode_logs"] = json::array();
    for (const auto& log : t.logs)
      jt["episode_logs"].push_back({{"seed", log.seed}, {"steps", log.steps}, {"success", log.success}});
    j["tasks"].push_back(std::move(jt));
  }
  return j.dump(2);
}

EvalReport report_from_json(const std::string& text) {
  const json j = json::parse(text);
  EvalReport report;
  report.episodes_per_task = j.at("episodes_per_task").get<int>();
  report.config_hash = j.at("config_hash").get<uint64_t>();
  for (const auto& jt : j.at("tasks")) {
    TaskReport t;
    t.level = tasks::level_from_string(jt.at("level").get<std::string>());
    t.task = tasks::task_type_from_string(jt.at("task").get<std::string>());
    t.episodes = jt.at("episodes").get<int>();
    t.successes = jt.at("successes").get<int>();
    for (const auto& jl : jt.at("episode_logs"))
      t.logs.push_back({jl.at("seed").get<uint64_t>(), jl.at("steps").get<int>(), jl.at("success").get<bool>()});
    report.tasks.push_back(std::move(t));
  }
  return report;
}

std::string format_report_table(const EvalReport& report) {
  std::ostringstream os;
  os << std::left << std::setw(6) << "level" << std::setw(20) << "task" << std::right << std::setw(10) << "episodes"
     << std::setw(11) << "successes" << std::setw(9) << "rate" << "\n";
  os << std::string(56, '-') << "\n";
  for (const auto& t : report.tasks) {
    os << std::left << std::setw(6) << tasks::to_string(t.level) << std::setw(20) << tasks::to_string(t.task)
       << std::right << std::setw(10) << t.episodes << std::setw(11) << t.successes << std::setw(8) << std::fixed
       << std::setprecision(1) << 100.0 * t.rate() << "%\n";
  }
  return os.str();
}

}  // namespace mmp::pipeline
