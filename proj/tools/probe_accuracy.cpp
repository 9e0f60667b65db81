// Teacher-forced per-dimension token accuracy of a checkpoint over a shard.

#include <cstdio>
#include <string>

#include "model/checkpoint.hpp"
#include "tasks/tasks.hpp"

using namespace mmp;

int main(int argc, char** argv) {
  if (argc < 3) {
    std::fprintf(stderr, "usage: probe_accuracy <ckpt> <shard> [pretrain]\n");
    return 1;
  }
  const bool pretrain_form = argc > 3 && std::string(argv[3]) == "pretrain";
  const auto policy = model::load_checkpoint(argv[1]);
  const auto shard = tasks::read_shard(argv[2]);
  const auto vocab = model::Vocabulary::standard();

  std::vector<tasks::TrainingSample> samples;
  for (size_t i = 0; i < shard.records.size() && samples.size() < 200; i += 3) {
    if (pretrain_form)
      samples.push_back(tasks::make_pretrain_sample(shard.records[i].trajectory, vocab, shard.manifest.sim));
    else
      samples.push_back({shard.records[i].instance.prompt, shard.records[i].trajectory});
  }
  const auto acc = policy.token_accuracy(samples, policy.config().decode_mode);
  const char* names[] = {"pick_row", "pick_col", "pick_rot", "place_row", "place_col", "place_rot"};
  for (size_t n = 0; n < acc.size(); ++n) std::printf("%-10s %.3f\n", names[n], acc[n]);
  std::printf("loss %.4f\n", policy.action_loss(samples, policy.config().decode_mode, model::AttentionMode::CAUSAL));
  return 0;
}
