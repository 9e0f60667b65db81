#include "pipeline/train.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

#include "core/kernels.hpp"
#include "core/optim.hpp"
#include "core/schedule.hpp"

namespace mmp::pipeline {

using core::Rng;
using model::Policy;

tasks::DatasetShard generate_dataset(const TrainConfig& cfg) {
  const tasks::SuiteConfig suite = cfg.suite();
  const model::Vocabulary vocab = model::Vocabulary::standard();

  tasks::DatasetShard shard;
  shard.manifest.split_name = cfg.split_name;
  shard.manifest.generator_seed = cfg.data_seed;
  shard.manifest.demos_per_task = cfg.demos_per_task;
  shard.manifest.sim = cfg.sim;
  shard.manifest.tasks = suite.split.train_tasks;
  shard.manifest.combos = tasks::combos_for_level(suite.split, tasks::Level::L1);

  for (const tasks::TaskType task : suite.split.train_tasks) {
    for (int i = 0; i < cfg.demos_per_task; ++i) {
      const uint64_t seed = Rng::mix(cfg.data_seed, Rng::mix(static_cast<uint64_t>(task), i));
      tasks::ShardRecord rec;
      rec.instance = tasks::generate_instance(suite, task, tasks::Level::L1, seed, vocab);
      rec.trajectory = tasks::scripted_expert(suite, rec.instance);
      shard.records.push_back(std::move(rec));
    }
  }
  return shard;
}

void write_curve_csv(const std::vector<CurvePoint>& curve, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("write_curve_csv: cannot open " + path);
  os << "phase,step,loss,lr,grad_norm\n";
  for (const auto& p : curve)
    os << p.phase << "," << p.step << "," << p.loss << "," << p.lr << "," << p.grad_norm << "\n";
}

Policy make_policy(const TrainConfig& cfg, const model::Vocabulary& vocab) {
  return Policy(cfg.policy, vocab, cfg.init_seed);
}

void transfer_param_prefix(const core::ParamStore& src, core::ParamStore& dst, const std::string& prefix) {
  for (int i = 0; i < src.count(); ++i) {
    const std::string& name = src.name(i);
    if (name.rfind(prefix, 0) != 0) continue;
    dst.at(name).values = src.at(i).values;
  }
}

namespace {

core::AdamWConfig adamw_config(const TrainConfig& cfg) {
  core::AdamWConfig a;
  a.beta1 = cfg.beta1;
  a.beta2 = cfg.beta2;
  a.eps = cfg.eps;
  a.weight_decay = cfg.weight_decay;
  a.clip_threshold = cfg.clip;
  return a;
}

core::LRScheduleConfig phase_schedule(const TrainConfig& cfg, int64_t total_steps) {
  core::LRScheduleConfig s;
  s.base_lr = cfg.lr;
  s.min_lr = cfg.min_lr;
  s.warmup_steps = std::max<int64_t>(0, static_cast<int64_t>(cfg.warmup_frac * static_cast<double>(total_steps)));
  s.anneal_steps = std::max<int64_t>(1, total_steps - s.warmup_steps);
  return s;
}

// One epoch of batched optimization. Samples are built lazily per batch by
// make_sample(record_index, sample_seed). Per-sample graphs run in parallel;
// the loss and gradient reductions always walk samples in batch order, so
// results do not depend on the worker count.
struct EpochRunner {
  Policy& policy;
  const TrainConfig& cfg;
  const tasks::DatasetShard& data;
  std::string phase;
  model::DecodeMode decode_mode;
  model::AttentionMode attn_mode;
  std::function<tasks::TrainingSample(const tasks::ShardRecord&, uint64_t)> make_sample;

  core::OptimizerState state;
  core::GradientRecord grads;
  std::vector<core::Graph> graphs;
  std::vector<Rng> rngs;
  int64_t global_step = 0;

  explicit EpochRunner(Policy& p, const TrainConfig& c, const tasks::DatasetShard& d)
      : policy(p), cfg(c), data(d), state(p.params()), grads(p.params()) {
    const int chunk = std::max(2 * core::kernels::max_threads(), 2);
    graphs.resize(chunk);
    rngs.resize(chunk, Rng(0));
  }

  double run_epoch(int epoch, const core::LRScheduleConfig& schedule, std::vector<CurvePoint>& curve,
                   const ProgressFn& progress) {
    std::vector<int> order(data.records.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    Rng shuffle_rng(Rng::mix(cfg.train_seed, Rng::mix(core::fnv1a64(phase), epoch)));
    shuffle_rng.shuffle(order);

    double epoch_loss = 0.0;
    int64_t epoch_tokens = 0;

    for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const size_t end = std::min(order.size(), start + cfg.batch_size);
      const int bsz = static_cast<int>(end - start);

      // Samples are materialized serially (cheap); graphs run in parallel.
      std::vector<tasks::TrainingSample> samples;
      samples.reserve(bsz);
      for (int i = 0; i < bsz; ++i) {
        const uint64_t sseed = Rng::mix(cfg.train_seed, Rng::mix(static_cast<uint64_t>(global_step), i));
        samples.push_back(make_sample(data.records[order[start + i]], sseed));
      }

      double batch_loss = 0.0;
      grads.zero();
      const int chunk = static_cast<int>(graphs.size());
      std::vector<int> loss_nodes(chunk, -1);
      for (int base = 0; base < bsz; base += chunk) {
        const int n = std::min(chunk, bsz - base);
#ifdef _OPENMP
#pragma omp parallel for schedule(static, 1)
#endif
        for (int i = 0; i < n; ++i) {
          rngs[i] = Rng(Rng::mix(cfg.train_seed, Rng::mix(0xD0D0, Rng::mix(static_cast<uint64_t>(global_step), base + i))));
          graphs[i].reset();
          loss_nodes[i] = policy.build_sample_loss(graphs[i], samples[base + i], decode_mode, attn_mode,
                                                   /*training=*/true, &rngs[i]);
          graphs[i].backward(loss_nodes[i]);
        }
        for (int i = 0; i < n; ++i) {
          batch_loss += static_cast<double>(graphs[i].scalar(loss_nodes[i]));
          core::accumulate_param_grads(graphs[i], 1.0f / static_cast<float>(bsz), grads);
        }
      }

      const double lr = core::lr_at_step(schedule, global_step);
      double gnorm = 0.0;
      try {
        gnorm = core::adamw_step(policy.params(), grads, state, lr, adamw_config(cfg));
      } catch (const std::exception& e) {
        std::cerr << "abort: " << e.what() << "\n"
                  << "state dump: phase=" << phase << " epoch=" << epoch << " step=" << global_step
                  << " batch_loss=" << batch_loss / bsz << "\n";
        throw;
      }

      const double mean_loss = batch_loss / bsz;
      if (!std::isfinite(mean_loss)) {
        std::cerr << "abort: non-finite loss\nstate dump: phase=" << phase << " epoch=" << epoch
                  << " step=" << global_step << "\n";
        throw std::runtime_error("training: non-finite loss");
      }
      CurvePoint pt{phase, global_step, mean_loss, lr, gnorm};
      curve.push_back(pt);
      if (progress) progress(pt);
      epoch_loss += batch_loss;
      epoch_tokens += bsz;
      ++global_step;
    }
    return epoch_tokens > 0 ? epoch_loss / static_cast<double>(epoch_tokens) : 0.0;
  }
};

// Span-corruption warm start for the LM over template text: word spans are
// blanked with <unk> and the encoder must reproduce the original ids through
// the tied word-embedding readout.
void lm_span_pretrain(Policy& policy, const TrainConfig& cfg, const tasks::DatasetShard& data,
                      std::vector<CurvePoint>& curve, const ProgressFn& progress) {
  if (cfg.lm_span_steps <= 0 || data.records.empty()) return;
  const model::Vocabulary& vocab = policy.vocab();
  core::OptimizerState state(policy.params());
  core::GradientRecord grads(policy.params());
  core::LRScheduleConfig schedule = phase_schedule(cfg, cfg.lm_span_steps);

  Rng rng(Rng::mix(cfg.train_seed, 0x5BA7));
  const int word_slot = policy.params().slot("lm.word_emb");
  for (int step = 0; step < cfg.lm_span_steps; ++step) {
    grads.zero();
    double loss_val = 0.0;
    const int bsz = std::min<int>(cfg.batch_size, 16);
    for (int b = 0; b < bsz; ++b) {
      const auto& rec = data.records[rng.next_below(static_cast<uint32_t>(data.records.size()))];
      std::vector<int> ids;
      for (const auto& e : rec.instance.prompt.elements)
        if (e.is_word) ids.push_back(e.word_id);
      if (ids.size() < 4) continue;

      std::vector<int> corrupted = ids;
      std::vector<int> masked_pos;
      for (size_t i = 0; i < ids.size(); ++i) {
        if (rng.next_real() < 0.2) {
          corrupted[i] = vocab.unk_id();
          masked_pos.push_back(static_cast<int>(i));
        }
      }
      if (masked_pos.empty()) {
        masked_pos.push_back(0);
        corrupted[0] = vocab.unk_id();
      }

      tasks::MultimodalPrompt p;
      for (const int id : corrupted) p.elements.push_back(tasks::PromptElement::word(id));
      const auto tok = model::tokenize_prompt(p, vocab);

      core::Graph g;
      const int enc = policy.prompt_encoder().encode(g, policy.params(), tok, policy.object_encoder(),
                                                     policy.config().prompt_mode, 0.0f);
      const int readout = g.matmul(enc, g.param(word_slot, policy.params().at(word_slot)), false, true);
      std::vector<int> terms;
      for (const int pos : masked_pos)
        terms.push_back(g.ce_loss(g.slice_rows(readout, pos, pos + 1), ids[pos]));
      const int loss = terms.size() == 1 ? terms[0] : g.add_n(terms);
      g.backward(loss);
      loss_val += static_cast<double>(g.scalar(loss)) / static_cast<double>(masked_pos.size());
      core::accumulate_param_grads(g, 1.0f / static_cast<float>(bsz), grads);
    }
    const double lr = core::lr_at_step(schedule, step);
    const double gnorm = core::adamw_step(policy.params(), grads, state, lr, adamw_config(cfg));
    CurvePoint pt{"lm_span", step, loss_val / bsz, lr, gnorm};
    curve.push_back(pt);
    if (progress) progress(pt);
  }
}

PhaseResult pretrain_pass(Policy& policy, const TrainConfig& cfg, const tasks::DatasetShard& data, int epochs,
                          const ProgressFn& progress, std::vector<CurvePoint>& curve) {
  const model::Vocabulary& vocab = policy.vocab();
  EpochRunner runner(policy, cfg, data);
  runner.phase = "pretrain";
  runner.decode_mode = policy.config().decode_mode;
  runner.attn_mode = cfg.pretrain_mode == PretrainMode::MASKED ? model::AttentionMode::MASKED_PRETRAIN
                                                               : model::AttentionMode::CAUSAL;
  const tasks::AugmentConfig aug = cfg.augment;
  const sim::SimConfig sim_cfg = cfg.sim;
  runner.make_sample = [&vocab, aug, sim_cfg](const tasks::ShardRecord& rec, uint64_t seed) {
    return tasks::augment_sample(tasks::make_pretrain_sample(rec.trajectory, vocab, sim_cfg), seed, aug);
  };

  const int64_t steps_per_epoch =
      static_cast<int64_t>((data.records.size() + cfg.batch_size - 1) / cfg.batch_size);
  const core::LRScheduleConfig schedule = phase_schedule(cfg, steps_per_epoch * epochs);

  PhaseResult res;
  for (int e = 0; e < epochs; ++e) {
    const double mean = runner.run_epoch(e, schedule, curve, progress);
    if (e == 0) res.first_epoch_loss = mean;
    res.last_epoch_loss = mean;
  }
  res.steps = runner.global_step;
  return res;
}

}  // namespace

PhaseResult run_pretrain(Policy& policy, const TrainConfig& cfg, const tasks::DatasetShard& data,
                         const ProgressFn& progress) {
  PhaseResult res;
  if (cfg.pretrain_mode == PretrainMode::NONE || cfg.pretrain_epochs == 0) return res;
  if (data.records.empty()) throw std::runtime_error("run_pretrain: dataset is empty");

  lm_span_pretrain(policy, cfg, data, res.curve, progress);

  const PhaseResult first = pretrain_pass(policy, cfg, data, cfg.pretrain_epochs, progress, res.curve);
  res.steps = first.steps;
  res.first_epoch_loss = first.first_epoch_loss;
  res.last_epoch_loss = first.last_epoch_loss;

  if (cfg.two_step_pretrain && cfg.second_step_epochs > 0) {
    // Keep only the object encoder; reinitialize everything else and run a
    // short second pass with a restarted schedule.
    Policy fresh(policy.config(), policy.vocab(), core::Rng::mix(policy.init_seed(), 0x25));
    transfer_param_prefix(policy.params(), fresh.params(), model::ObjectEncoder::param_prefix());
    policy = std::move(fresh);
    const PhaseResult second = pretrain_pass(policy, cfg, data, cfg.second_step_epochs, progress, res.curve);
    res.steps += second.steps;
    res.last_epoch_loss = second.last_epoch_loss;
  }
  return res;
}

PhaseResult run_finetune(Policy& policy, const TrainConfig& cfg, const tasks::DatasetShard& data,
                         const ProgressFn& progress) {
  PhaseResult res;
  if (cfg.finetune_epochs == 0) return res;
  if (data.records.empty()) throw std::runtime_error("run_finetune: dataset is empty");

  const model::Vocabulary& vocab = policy.vocab();
  EpochRunner runner(policy, cfg, data);
  runner.phase = "finetune";
  runner.decode_mode = policy.config().decode_mode;
  runner.attn_mode = model::AttentionMode::CAUSAL;
  const double p_replace = cfg.modified_ft_prob;
  runner.make_sample = [&vocab, p_replace](const tasks::ShardRecord& rec, uint64_t seed) {
    tasks::TrainingSample s;
    s.prompt = p_replace > 0.0 ? tasks::modified_ft_transform(rec.instance.prompt, seed, p_replace, vocab)
                               : rec.instance.prompt;
    s.trajectory = rec.trajectory;
    return s;
  };

  const int64_t steps_per_epoch =
      static_cast<int64_t>((data.records.size() + cfg.batch_size - 1) / cfg.batch_size);
  const core::LRScheduleConfig schedule = phase_schedule(cfg, steps_per_epoch * cfg.finetune_epochs);

  for (int e = 0; e < cfg.finetune_epochs; ++e) {
    const double mean = runner.run_epoch(e, schedule, res.curve, progress);
    if (e == 0) res.first_epoch_loss = mean;
    res.last_epoch_loss = mean;
  }
  res.steps = runner.global_step;
  return res;
}

}  // namespace mmp::pipeline
