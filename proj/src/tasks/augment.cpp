#include <algorithm>
#include <stdexcept>

#include "tasks/tasks.hpp"

namespace mmp::tasks {

using core::Rng;
using model::Vocabulary;

TrainingSample make_pretrain_sample(const Trajectory& traj, const Vocabulary& vocab, const sim::SimConfig& cfg) {
  if (traj.observations.empty()) throw std::invalid_argument("make_pretrain_sample: empty trajectory");
  TrainingSample sample;
  for (const int id : vocab.encode("follow this motion :")) sample.prompt.elements.push_back(PromptElement::word(id));

  // Frames reuse the trajectory's own observation views bit-for-bit; the
  // object specs come from replaying the actions over the start scene.
  sim::Scene s = traj.start_scene;
  for (size_t t = 0; t < traj.observations.size(); ++t) {
    if (t > 0) s = sim::step(s, traj.actions[t - 1], cfg).first;
    PromptImage im;
    im.kind = ImageKind::SCENE_FRAME;
    const auto& obs = traj.observations[t];
    if (obs.views.size() != s.objects.size())
      throw std::invalid_argument("make_pretrain_sample: trajectory is not replay-valid");
    for (size_t i = 0; i < obs.views.size(); ++i) {
      PromptView v;
      v.spec = s.objects[i];
      v.view = obs.views[i];
      im.views.push_back(std::move(v));
    }
    sample.prompt.elements.push_back(PromptElement::img(std::move(im)));
  }
  sample.trajectory = traj;
  return sample;
}

namespace {

void jitter_image(PromptImage& im, Rng& rng, const AugmentConfig& cfg) {
  for (auto& v : im.views) {
    if (cfg.color_jitter > 0.0) {
      float f[3];
      for (int ch = 0; ch < 3; ++ch)
        f[ch] = static_cast<float>(1.0 + cfg.color_jitter * (2.0 * rng.next_real() - 1.0));
      for (size_t i = 0; i < v.view.patch.size(); ++i)
        v.view.patch[i] = std::clamp(v.view.patch[i] * f[i % 3], 0.0f, 1.0f);
    }
    if (cfg.gray_prob > 0.0 && rng.next_real() < cfg.gray_prob) {
      for (size_t i = 0; i + 2 < v.view.patch.size(); i += 3) {
        const float y = 0.299f * v.view.patch[i] + 0.587f * v.view.patch[i + 1] + 0.114f * v.view.patch[i + 2];
        v.view.patch[i] = v.view.patch[i + 1] = v.view.patch[i + 2] = y;
      }
    }
  }
}

}  // namespace

TrainingSample augment_sample(TrainingSample sample, uint64_t seed, const AugmentConfig& cfg) {
  if (cfg.color_jitter <= 0.0 && cfg.gray_prob <= 0.0 && cfg.bbox_shift_max <= 0) return sample;
  Rng rng(Rng::mix(seed, 0xA06));

  for (auto& e : sample.prompt.elements) {
    if (e.is_word) continue;
    jitter_image(e.image, rng, cfg);
  }

  if (cfg.bbox_shift_max > 0) {
    const int span = 2 * cfg.bbox_shift_max + 1;
    const float dx = static_cast<float>(static_cast<int>(rng.next_below(static_cast<uint32_t>(span))) - cfg.bbox_shift_max);
    const float dy = static_cast<float>(static_cast<int>(rng.next_below(static_cast<uint32_t>(span))) - cfg.bbox_shift_max);
    for (auto& e : sample.prompt.elements) {
      if (e.is_word || e.image.kind != ImageKind::SCENE_FRAME) continue;
      for (auto& v : e.image.views) {
        v.view.bbox[0] += dx;
        v.view.bbox[2] += dx;
        v.view.bbox[1] += dy;
        v.view.bbox[3] += dy;
      }
    }
  }
  return sample;
}

MultimodalPrompt modified_ft_transform(const MultimodalPrompt& prompt, uint64_t seed, double p_replace,
                                       const Vocabulary& vocab) {
  if (p_replace < 0.0 || p_replace > 1.0) throw std::invalid_argument("modified_ft: p_replace outside [0, 1]");
  Rng rng(Rng::mix(seed, 0xF7));
  MultimodalPrompt out;
  for (const auto& e : prompt.elements) {
    if (e.is_word || e.image.kind == ImageKind::SCENE_FRAME) {
      out.elements.push_back(e);
      continue;
    }
    if (p_replace > 0.0 && rng.next_real() < p_replace) {
      const auto& spec = e.image.views.at(0).spec;
      for (const int id : vocab.encode(model::object_description(spec.shape_id, spec.texture_id, true)))
        out.elements.push_back(PromptElement::word(id));
    } else {
      out.elements.push_back(e);
    }
  }
  return out;
}

TaskInstance edit_holdout_prompt(const TaskInstance& instance, const Vocabulary& vocab) {
  if (instance.task_type == TaskType::FOLLOW_MOTION) return instance;

  TaskInstance out = instance;
  out.prompt.elements.clear();
  auto words = [&](const std::string& text) {
    for (const int id : vocab.encode(text)) out.prompt.elements.push_back(PromptElement::word(id));
  };

  if (instance.task_type == TaskType::TWIST) {
    // "Follow this motion : {before} to {after} for all <desc> objects ."
    const PromptElement* before = nullptr;
    const PromptElement* after = nullptr;
    for (const auto& e : instance.prompt.elements) {
      if (e.is_word || e.image.kind != ImageKind::OBJECT_PATCH) continue;
      if (before == nullptr) {
        before = &e;
      } else if (after == nullptr) {
        after = &e;
        break;
      }
    }
    if (before == nullptr || after == nullptr) throw std::invalid_argument("edit_holdout_prompt: malformed twist prompt");

    const sim::ObjectSpec* target = nullptr;
    for (const auto& rg : instance.predicate.rot_goals) {
      const sim::ObjectSpec* o = instance.initial_scene.object_by_uid(rg.uid);
      if (o != nullptr && o->rotation_bin != rg.expected_rot) {
        target = o;
        break;
      }
    }
    if (target == nullptr) throw std::invalid_argument("edit_holdout_prompt: twist instance has no target");

    words("follow this motion :");
    out.prompt.elements.push_back(*before);
    words("to");
    out.prompt.elements.push_back(*after);
    words("for all");
    words(model::object_description(target->shape_id, target->texture_id, false));
    words("objects .");
    return out;
  }

  if (instance.task_type == TaskType::FOLLOW_ORDER) {
    words("follow this motion :");
    for (const auto& e : instance.prompt.elements)
      if (!e.is_word && e.image.kind == ImageKind::SCENE_FRAME) out.prompt.elements.push_back(e);
    return out;
  }

  throw std::invalid_argument(std::string("edit_holdout_prompt: unsupported task type ") +
                              to_string(instance.task_type));
}

}  // namespace mmp::tasks
