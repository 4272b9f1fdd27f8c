#pragma once

#include <optional>
#include <string>
#include <vector>

#include "clt/kvconfig.hpp"
#include "clt/model.hpp"
#include "clt/optim.hpp"

namespace clt {

// Binary model snapshot: magic, version, descriptor and run metadata as
// UTF-8 key-value blocks, then named float32 tensors with explicit shapes,
// all little-endian. Round trips are bit-exact.
struct Checkpoint {
  ArchitectureDescriptor descriptor;
  KvFile meta;  // step, epoch, seed, head metadata when present
  std::vector<std::pair<std::string, Tensor<float>>> tensors;

  const Tensor<float>* find(const std::string& name) const {
    for (const auto& [k, t] : tensors)
      if (k == name) return &t;
    return nullptr;
  }
};

struct CheckpointExtras {
  std::int64_t step = 0;
  std::int64_t epoch = 0;
  std::uint64_t seed = 0;
  // optimizer moments and step counter travel with the model when resuming
  AdamW<float>* optimizer = nullptr;
  // fine-tuned classifier, stored alongside the encoder
  TaskHead<float>* head = nullptr;
  std::vector<std::string> head_labels;
};

void save_checkpoint(const EncoderModel<float>& model, const std::string& path,
                     const CheckpointExtras& extras = {});

Checkpoint load_checkpoint(const std::string& path);

// materializes the stored encoder
EncoderModel<float> model_from_checkpoint(const Checkpoint& ckpt);

// loads parameter values into an existing model; the stored descriptor must
// match the model's
void load_checkpoint_into(EncoderModel<float>& model, const Checkpoint& ckpt);

// restores optimizer moments saved by save_checkpoint
void load_optimizer_state(AdamW<float>& optimizer, const Checkpoint& ckpt);

// restores a stored task head; returns nullopt when none was saved
std::optional<TaskHead<float>> head_from_checkpoint(const Checkpoint& ckpt);

}  // namespace clt
