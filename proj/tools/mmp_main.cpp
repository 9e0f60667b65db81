// Command-line surface: dataset generation, the two training phases, the
// four-level evaluation harness, and inspection helpers.

#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <iostream>

#include "model/checkpoint.hpp"
#include "pipeline/config.hpp"
#include "pipeline/evaluate.hpp"
#include "pipeline/train.hpp"

using namespace mmp;

namespace {

struct CommonOpts {
  std::vector<std::string> config_paths;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_paths, "config file(s), later files win")->expected(-1);
  cmd->add_option("--set", opts.overrides, "inline override key=value (repeatable)");
}

pipeline::TrainConfig resolve_config(const CommonOpts& opts) {
  pipeline::KeyValueFile kv;
  for (const auto& path : opts.config_paths) {
    const auto loaded = pipeline::KeyValueFile::load(path);
    for (const auto& [k, v] : loaded.entries()) kv.set(k, v);
  }
  for (const auto& ov : opts.overrides) {
    const size_t eq = ov.find('=');
    if (eq == std::string::npos) throw std::runtime_error("--set expects key=value, got '" + ov + "'");
    kv.set(ov.substr(0, eq), ov.substr(eq + 1));
  }
  return pipeline::TrainConfig::from_file(kv);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path);
  os << text;
}

pipeline::ProgressFn progress_printer(int every) {
  auto last = std::make_shared<int64_t>(-1);
  return [every, last](const pipeline::CurvePoint& p) {
    if (p.step % every != 0 && p.step != *last + 1) return;
    *last = p.step;
    std::cout << p.phase << " step " << p.step << "  loss " << p.loss << "  lr " << p.lr << "\n";
  };
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multimodal-prompt tabletop manipulation: data, training, evaluation"};
  app.require_subcommand(1);

  CommonOpts gen_opts, pre_opts, ft_opts, eval_opts, print_opts;

  auto* gen = app.add_subcommand("gen-data", "generate expert demonstrations into a dataset shard");
  add_common(gen, gen_opts);
  std::string gen_out = "train.shard";
  gen->add_option("--out", gen_out, "output shard path");

  auto* pre = app.add_subcommand("pretrain", "motion-following pretraining over a shard");
  add_common(pre, pre_opts);
  std::string pre_data, pre_out = "pretrained.ckpt", pre_curve;
  pre->add_option("--data", pre_data, "training shard")->required();
  pre->add_option("--out", pre_out, "output checkpoint");
  pre->add_option("--curve", pre_curve, "loss/LR curve CSV");

  auto* ft = app.add_subcommand("finetune", "multi-task imitation finetuning");
  add_common(ft, ft_opts);
  std::string ft_data, ft_init, ft_out = "finetuned.ckpt", ft_curve;
  ft->add_option("--data", ft_data, "training shard")->required();
  ft->add_option("--init", ft_init, "starting checkpoint (fresh init when omitted)");
  ft->add_option("--out", ft_out, "output checkpoint");
  ft->add_option("--curve", ft_curve, "loss/LR curve CSV");

  auto* ev = app.add_subcommand("eval", "seeded episode evaluation across generalization levels");
  add_common(ev, eval_opts);
  std::string ev_ckpt, ev_report, ev_table;
  ev->add_option("--ckpt", ev_ckpt, "policy checkpoint")->required();
  ev->add_option("--report", ev_report, "structured report (JSON)");
  ev->add_option("--table", ev_table, "aligned text table path");

  auto* pc = app.add_subcommand("print-config", "print the full configuration (defaults + overrides)");
  add_common(pc, print_opts);

  auto* is = app.add_subcommand("inspect-shard", "print a shard's manifest and record summary");
  std::string is_path;
  is->add_option("path", is_path, "shard path")->required();

  auto* ic = app.add_subcommand("inspect-checkpoint", "print a checkpoint's config and metadata");
  std::string ic_path;
  ic->add_option("path", ic_path, "checkpoint path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      const auto cfg = resolve_config(gen_opts);
      const auto t0 = std::chrono::steady_clock::now();
      const auto shard = pipeline::generate_dataset(cfg);
      tasks::write_shard(shard, gen_out);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::cout << "wrote " << shard.records.size() << " demonstrations to " << gen_out << " (" << secs << "s)\n";
    } else if (pre->parsed()) {
      const auto cfg = resolve_config(pre_opts);
      const auto shard = tasks::read_shard(pre_data);
      auto policy = pipeline::make_policy(cfg, model::Vocabulary::standard());
      const auto res = pipeline::run_pretrain(policy, cfg, shard, progress_printer(20));
      if (!pre_curve.empty()) pipeline::write_curve_csv(res.curve, pre_curve);
      model::CheckpointMeta meta;
      meta.phase = "pretrain";
      meta.step = res.steps;
      meta.seed = cfg.train_seed;
      meta.manifest_text = tasks::manifest_to_text(shard.manifest);
      model::save_checkpoint(policy, meta, pre_out);
      std::cout << "pretrain: " << res.steps << " steps, epoch loss " << res.first_epoch_loss << " -> "
                << res.last_epoch_loss << ", saved " << pre_out << "\n";
    } else if (ft->parsed()) {
      const auto cfg = resolve_config(ft_opts);
      const auto shard = tasks::read_shard(ft_data);
      model::CheckpointMeta meta;
      auto policy = ft_init.empty() ? pipeline::make_policy(cfg, model::Vocabulary::standard())
                                    : model::load_checkpoint(ft_init, &meta);
      const auto res = pipeline::run_finetune(policy, cfg, shard, progress_printer(20));
      if (!ft_curve.empty()) pipeline::write_curve_csv(res.curve, ft_curve);
      meta.phase = "finetune";
      meta.step += res.steps;
      meta.seed = cfg.train_seed;
      meta.manifest_text = tasks::manifest_to_text(shard.manifest);
      model::save_checkpoint(policy, meta, ft_out);
      std::cout << "finetune: " << res.steps << " steps, epoch loss " << res.first_epoch_loss << " -> "
                << res.last_epoch_loss << ", saved " << ft_out << "\n";
    } else if (ev->parsed()) {
      const auto cfg = resolve_config(eval_opts);
      model::CheckpointMeta meta;
      const auto policy = model::load_checkpoint(ev_ckpt, &meta);
      const auto report = pipeline::evaluate(policy, meta, cfg);
      const std::string table = pipeline::format_report_table(report);
      std::cout << table;
      if (!ev_report.empty()) write_text(ev_report, pipeline::report_to_json(report));
      if (!ev_table.empty()) write_text(ev_table, table);
    } else if (pc->parsed()) {
      std::cout << pipeline::print_config(resolve_config(print_opts));
    } else if (is->parsed()) {
      const auto shard = tasks::read_shard(is_path);
      std::cout << tasks::manifest_to_text(shard.manifest);
      std::map<std::string, int> counts;
      size_t total_actions = 0;
      for (const auto& rec : shard.records) {
        counts[tasks::to_string(rec.instance.task_type)]++;
        total_actions += rec.trajectory.actions.size();
      }
      std::cout << "records = " << shard.records.size() << "\n";
      for (const auto& [task, n] : counts) std::cout << "records." << task << " = " << n << "\n";
      if (!shard.records.empty())
        std::cout << "mean_actions_per_demo = "
                  << static_cast<double>(total_actions) / static_cast<double>(shard.records.size()) << "\n";
    } else if (ic->parsed()) {
      model::CheckpointMeta meta;
      const auto policy = model::load_checkpoint(ic_path, &meta);
      std::cout << model::policy_config_to_text(policy.config());
      std::cout << "phase = " << meta.phase << "\n";
      std::cout << "step = " << meta.step << "\n";
      std::cout << "train_seed = " << meta.seed << "\n";
      std::cout << "vocab_size = " << policy.vocab().size() << "\n";
      std::cout << "parameters = " << policy.params().element_count() << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
