#pragma once

#include <string>
#include <vector>

#include "clt/checkpoint.hpp"
#include "clt/datasets.hpp"
#include "clt/distill.hpp"
#include "clt/metrics.hpp"
#include "clt/mlm.hpp"
#include "clt/model.hpp"
#include "clt/optim.hpp"

namespace clt {

enum class DistillObjective { output_alignment, layer_to_layer, recursive };

// external names follow the CLI surface: eq1 | eq2 | recursive
DistillObjective objective_from_name(const std::string& name);
const char* objective_name(DistillObjective objective);

struct TrainConfig {
  std::uint64_t seed = 1;
  double lr = 5e-4;
  std::int64_t batch_size = 8;
  std::int64_t accumulation = 1;
  std::int64_t epochs = 1;
  std::int64_t max_steps = 0;  // optimizer steps; 0 = run the configured epochs
  std::int64_t warmup_steps = 0;
  double weight_decay = 1e-4;
  double clip_norm = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int max_len = 64;
  MlmConfig mlm;
  bool lowercase = false;
  std::int64_t checkpoint_interval = 0;  // optimizer steps between snapshots; 0 = final only
  std::string out_dir;                   // empty: keep everything in memory
  std::string resume_from;               // checkpoint path to continue from
};

struct StepRecord {
  std::int64_t step = 0;
  double loss = 0.0;
  double lr = 0.0;
  std::vector<std::pair<std::string, double>> components;
};

struct TrainResult {
  std::vector<StepRecord> log;
  std::string final_checkpoint;
  MetricsReport eval;
};

// Masked-LM training with the linear warmup/decay schedule. Further
// pre-training an existing checkpoint (resume_from or a pre-loaded model)
// on a new corpus is the continual-learning path; the loop is the same.
TrainResult pretrain_mlm(EncoderModel<float>& model, const std::string& corpus_path,
                         const Vocabulary& vocab, const TrainConfig& cfg);

// Distillation against a frozen teacher. The objective must match the
// student: the recursive objective requires a recursive student, and the
// output-alignment objective requires matching vocab and hidden width.
TrainResult distill_pretrain(EncoderModel<float>& student, const EncoderModel<float>& teacher,
                             const std::string& corpus_path, const Vocabulary& vocab,
                             const DistillationConfig& dcfg, const TrainConfig& cfg,
                             DistillObjective objective);

// Supervised training of an encoder plus task head, then evaluation on the
// eval split with the task's reporting metric.
TrainResult finetune(EncoderModel<float>& model, TaskHead<float>& head, const TaskData& train_data,
                     const TaskData& eval_data, const Vocabulary& vocab, const TrainConfig& cfg);

// Greedy (argmax) predictions and the task's metric; NER reads token
// predictions at first-subword positions and scores exact span F1.
MetricsReport evaluate_task(const EncoderModel<float>& model, const TaskHead<float>& head,
                            const TaskData& data, const Vocabulary& vocab, int max_len,
                            std::int64_t batch_size,
                            std::vector<std::string>* predictions = nullptr);

// masked-LM cross entropy over a corpus, no parameter updates
double evaluate_mlm_loss(const EncoderModel<float>& model, const std::string& corpus_path,
                         const Vocabulary& vocab, int max_len, std::int64_t batch_size,
                         std::uint64_t seed);

// mean loss of the log window ending at 1-based step `step`
double smoothed_loss(const std::vector<StepRecord>& log, std::int64_t step, std::int64_t window);

std::string serialize_log(const std::vector<StepRecord>& log);

}  // namespace clt
