#include "clt/train.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace clt {

namespace {

using nlohmann::json;

struct LoopState {
  std::int64_t global_step = 0;
  std::int64_t start_epoch = 0;
  std::int64_t start_micro = 0;
};

std::string out_path(const TrainConfig& cfg, const std::string& name) {
  return (std::filesystem::path(cfg.out_dir) / name).string();
}

void ensure_out_dir(const TrainConfig& cfg) {
  if (!cfg.out_dir.empty()) std::filesystem::create_directories(cfg.out_dir);
}

void append_log(std::ofstream* stream, const StepRecord& rec) {
  if (!stream) return;
  json j;
  j["step"] = rec.step;
  j["loss"] = rec.loss;
  j["lr"] = rec.lr;
  if (!rec.components.empty()) {
    json c;
    for (const auto& [k, v] : rec.components) c[k] = v;
    j["components"] = c;
  }
  *stream << j.dump() << "\n";
}

AdamWConfig adamw_config(const TrainConfig& cfg) {
  AdamWConfig out;
  out.beta1 = cfg.beta1;
  out.beta2 = cfg.beta2;
  out.eps = cfg.adam_eps;
  out.weight_decay = cfg.weight_decay;
  out.clip_norm = cfg.clip_norm;
  return out;
}

Rng dropout_rng(const TrainConfig& cfg, std::int64_t step, std::int64_t micro) {
  return Rng(mix64(cfg.seed, 0xD0ull + static_cast<std::uint64_t>(micro),
                   static_cast<std::uint64_t>(step)));
}

// shared epoch/micro-batch scaffolding for the corpus-driven loops
template <typename StepFn>
TrainResult run_corpus_loop(EncoderModel<float>& model, AdamW<float>& optimizer,
                            const CorpusBatcher& batcher, const TrainConfig& cfg,
                            LoopState state, const CheckpointExtras& base_extras,
                            StepFn&& run_micro) {
  TrainResult result;
  const std::int64_t micros_per_epoch = batcher.batches_per_epoch();
  const std::int64_t steps_per_epoch = (micros_per_epoch + cfg.accumulation - 1) / cfg.accumulation;
  const std::int64_t total_steps =
      cfg.max_steps > 0 ? cfg.max_steps : steps_per_epoch * cfg.epochs;
  if (total_steps < 1) throw ConfigError("train: no steps to run");
  ScheduleConfig sched{cfg.lr, std::min(cfg.warmup_steps, total_steps), total_steps};

  std::ofstream log_stream;
  std::ofstream* log_ptr = nullptr;
  if (!cfg.out_dir.empty()) {
    ensure_out_dir(cfg);
    const bool resuming = state.global_step > 0;
    log_stream.open(out_path(cfg, "train_log.jsonl"), resuming ? std::ios::app : std::ios::out);
    if (!log_stream) throw IoError("train: cannot write log in " + cfg.out_dir);
    log_ptr = &log_stream;
  }

  auto save = [&](const std::string& name, std::int64_t epoch, std::int64_t next_micro) {
    if (cfg.out_dir.empty()) return std::string();
    CheckpointExtras extras = base_extras;
    extras.step = state.global_step;
    extras.epoch = epoch;
    extras.seed = cfg.seed;
    extras.optimizer = &optimizer;
    std::string path = out_path(cfg, name);
    // batch position within the epoch travels in the meta block
    save_checkpoint(model, path, extras);
    (void)next_micro;
    return path;
  };

  bool done = state.global_step >= total_steps;
  for (std::int64_t epoch = state.start_epoch; !done; ++epoch) {
    const std::int64_t first_micro = (epoch == state.start_epoch) ? state.start_micro : 0;
    for (std::int64_t micro = first_micro; micro < micros_per_epoch && !done;) {
      const std::int64_t take =
          std::min<std::int64_t>(cfg.accumulation, micros_per_epoch - micro);
      optimizer.zero_grad();
      double loss_sum = 0.0;
      std::vector<std::pair<std::string, double>> components;
      for (std::int64_t k = 0; k < take; ++k) {
        MlmBatch batch = batcher.batch(epoch, micro + k);
        Rng drng = dropout_rng(cfg, state.global_step, k);
        Tape<float> tape;
        auto [loss, comps] = run_micro(batch, drng);
        backward(scale(loss, 1.0f / static_cast<float>(take)));
        loss_sum += static_cast<double>(loss.item());
        if (components.empty()) {
          components = comps;
        } else {
          for (std::size_t c = 0; c < comps.size(); ++c) components[c].second += comps[c].second;
        }
      }
      for (auto& [k, v] : components) v /= static_cast<double>(take);
      const double lr = lr_at_step(sched, state.global_step);
      optimizer.step(lr);
      micro += take;
      ++state.global_step;

      StepRecord rec{state.global_step, loss_sum / static_cast<double>(take), lr,
                     std::move(components)};
      append_log(log_ptr, rec);
      result.log.push_back(std::move(rec));

      done = state.global_step >= total_steps;
      if (!done && cfg.checkpoint_interval > 0 &&
          state.global_step % cfg.checkpoint_interval == 0) {
        save("model-step" + std::to_string(state.global_step) + ".ckpt", epoch, micro);
      }
      if (done) result.final_checkpoint = save("model.ckpt", epoch, micro);
    }
    if (!done && cfg.max_steps == 0 && epoch + 1 >= cfg.epochs) {
      // epochs exhausted exactly at a boundary
      done = true;
      result.final_checkpoint = save("model.ckpt", epoch + 1, 0);
    }
  }
  return result;
}

LoopState resume_state(const TrainConfig& cfg, EncoderModel<float>& model,
                       AdamW<float>& optimizer, const CorpusBatcher& batcher) {
  LoopState state;
  if (cfg.resume_from.empty()) return state;
  Checkpoint ckpt = load_checkpoint(cfg.resume_from);
  load_checkpoint_into(model, ckpt);
  load_optimizer_state(optimizer, ckpt);
  state.global_step = ckpt.meta.get_int("step", 0);
  // position within the epoch stream is implied by the step count
  const std::int64_t micros_per_epoch = batcher.batches_per_epoch();
  const std::int64_t steps_per_epoch = (micros_per_epoch + cfg.accumulation - 1) / cfg.accumulation;
  state.start_epoch = state.global_step / steps_per_epoch;
  state.start_micro = (state.global_step % steps_per_epoch) * cfg.accumulation;
  return state;
}

}  // namespace

DistillObjective objective_from_name(const std::string& name) {
  if (name == "eq1" || name == "output") return DistillObjective::output_alignment;
  if (name == "eq2" || name == "layer") return DistillObjective::layer_to_layer;
  if (name == "recursive") return DistillObjective::recursive;
  throw ConfigError("unknown distillation objective '" + name +
                    "' (expected eq1, eq2, or recursive)");
}

const char* objective_name(DistillObjective objective) {
  switch (objective) {
    case DistillObjective::output_alignment: return "eq1";
    case DistillObjective::layer_to_layer: return "eq2";
    case DistillObjective::recursive: return "recursive";
  }
  return "?";
}

TrainResult pretrain_mlm(EncoderModel<float>& model, const std::string& corpus_path,
                         const Vocabulary& vocab, const TrainConfig& cfg) {
  if (!model.desc().with_mlm_head) {
    throw ConfigError("pretrain: the model descriptor has no MLM head");
  }
  CorpusBatcher batcher(corpus_path, vocab, cfg.max_len, static_cast<int>(cfg.batch_size),
                        cfg.seed, cfg.mlm, cfg.lowercase);
  std::vector<NamedParam<float>> params = model.params();
  AdamW<float> optimizer(params, adamw_config(cfg));
  LoopState state = resume_state(cfg, model, optimizer, batcher);

  const std::int64_t V = model.desc().vocab_size;
  return run_corpus_loop(
      model, optimizer, batcher, cfg, state, {},
      [&](const MlmBatch& batch, Rng& drng) {
        ForwardOptions opts;
        opts.training = true;
        opts.dropout_rng = &drng;
        auto out = model.forward(input_from(batch), opts);
        auto flat = reshape(out.logits, {batch.batch * batch.len, V});
        Tensor<float> loss = cross_entropy(flat, std::span<const std::int32_t>(batch.labels));
        return std::make_pair(loss, std::vector<std::pair<std::string, double>>{});
      });
}

TrainResult distill_pretrain(EncoderModel<float>& student, const EncoderModel<float>& teacher,
                             const std::string& corpus_path, const Vocabulary& vocab,
                             const DistillationConfig& dcfg, const TrainConfig& cfg,
                             DistillObjective objective) {
  if (objective == DistillObjective::recursive && !student.desc().recursive) {
    throw ConfigError("distill: the recursive objective requires a recursive student");
  }
  if (objective == DistillObjective::layer_to_layer && student.desc().recursive) {
    throw ConfigError("distill: the layer-to-layer objective requires a standard student; use the "
                      "recursive objective instead");
  }
  if (objective == DistillObjective::output_alignment) {
    if (student.desc().hidden != teacher.desc().hidden) {
      throw ConfigError("distill: output alignment requires matching hidden widths, got " +
                        std::to_string(student.desc().hidden) + " vs " +
                        std::to_string(teacher.desc().hidden));
    }
  }
  if (student.desc().vocab_size != teacher.desc().vocab_size) {
    throw ConfigError("distill: student and teacher must share a vocabulary");
  }
  const bool introspect = objective != DistillObjective::output_alignment;
  if (introspect) {
    LayerMapping{student.desc().effective_depth(), teacher.desc().effective_depth()}.validate();
  }

  CorpusBatcher batcher(corpus_path, vocab, cfg.max_len, static_cast<int>(cfg.batch_size),
                        cfg.seed, cfg.mlm, cfg.lowercase);
  Projections<float> projections =
      make_projections<float>(student.desc(), teacher.desc(), mix64(cfg.seed, 0xBEEF));
  std::vector<NamedParam<float>> params = student.params();
  for (auto& p : projections.params()) params.push_back(p);
  AdamW<float> optimizer(params, adamw_config(cfg));
  LoopState state = resume_state(cfg, student, optimizer, batcher);

  return run_corpus_loop(
      student, optimizer, batcher, cfg, state, {},
      [&](const MlmBatch& batch, Rng& drng) {
        ForwardOptions teacher_opts;
        teacher_opts.want_hidden = introspect;
        teacher_opts.want_attention = introspect;
        ModelOutputs<float> t_out;
        {
          TapePause<float> frozen;
          t_out = teacher.forward(input_from(batch), teacher_opts);
        }
        ForwardOptions student_opts = teacher_opts;
        student_opts.training = true;
        student_opts.dropout_rng = &drng;
        auto s_out = student.forward(input_from(batch), student_opts);

        LossBreakdown<float> loss;
        switch (objective) {
          case DistillObjective::output_alignment:
            loss = output_alignment_loss(s_out, t_out, batch, dcfg);
            break;
          case DistillObjective::layer_to_layer:
            loss = layer_to_layer_loss(s_out, t_out, batch, dcfg, projections,
                                       student.desc().heads);
            break;
          case DistillObjective::recursive:
            loss = recursive_alignment_loss(s_out, t_out, batch, dcfg, projections,
                                            student.desc().heads, student.desc().recursive);
            break;
        }
        return std::make_pair(loss.total, loss.components);
      });
}

TrainResult finetune(EncoderModel<float>& model, TaskHead<float>& head, const TaskData& train_data,
                     const TaskData& eval_data, const Vocabulary& vocab, const TrainConfig& cfg) {
  if (train_data.head_kind != head.kind) {
    throw ConfigError(std::string("finetune: dataset expects head kind ") +
                      head_kind_name(train_data.head_kind) + ", got " + head_kind_name(head.kind));
  }
  if (static_cast<std::int64_t>(train_data.labels.size()) != head.num_labels) {
    throw ConfigError("finetune: head has " + std::to_string(head.num_labels) +
                      " labels but the dataset defines " + std::to_string(train_data.labels.size()));
  }
  const std::size_t n = train_data.size();
  if (n == 0) throw ValueError("finetune: empty training data");

  std::vector<NamedParam<float>> params = model.params();
  for (auto& p : head.params()) params.push_back(p);
  AdamW<float> optimizer(params, adamw_config(cfg));

  const std::int64_t batches_per_epoch =
      (static_cast<std::int64_t>(n) + cfg.batch_size - 1) / cfg.batch_size;
  const std::int64_t total_steps = std::max<std::int64_t>(1, batches_per_epoch * cfg.epochs);
  ScheduleConfig sched{cfg.lr, std::min(cfg.warmup_steps, total_steps), total_steps};

  TrainResult result;
  std::ofstream log_stream;
  std::ofstream* log_ptr = nullptr;
  if (!cfg.out_dir.empty()) {
    ensure_out_dir(cfg);
    log_stream.open(out_path(cfg, "train_log.jsonl"));
    log_ptr = &log_stream;
  }

  std::int64_t global_step = 0;
  for (std::int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    // deterministic shuffle per (seed, epoch)
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng shuffle_rng(mix64(cfg.seed, 0xF1, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = n; i > 1; --i) {
      std::size_t j =
          static_cast<std::size_t>(shuffle_rng.uniform_int(static_cast<std::int64_t>(i)));
      std::swap(order[i - 1], order[j]);
    }
    for (std::int64_t b = 0; b < batches_per_epoch; ++b) {
      const std::size_t begin = static_cast<std::size_t>(b * cfg.batch_size);
      const std::size_t end = std::min(n, begin + static_cast<std::size_t>(cfg.batch_size));
      std::vector<std::size_t> indices(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                       order.begin() + static_cast<std::ptrdiff_t>(end));
      TaskBatch batch = encode_task_batch(train_data, indices, vocab, cfg.max_len, cfg.lowercase);

      optimizer.zero_grad();
      Rng drng = dropout_rng(cfg, global_step, 0);
      Tape<float> tape;
      Tensor<float> logits = forward_task_head(model, head, batch.input, true, &drng);
      Tensor<float> flat = head.kind == HeadKind::token_classification
                               ? reshape(logits, {batch.input.batch * batch.input.len,
                                                  head.num_labels})
                               : logits;
      Tensor<float> loss = cross_entropy(flat, std::span<const std::int32_t>(batch.labels));
      backward(loss);
      const double lr = lr_at_step(sched, global_step);
      optimizer.step(lr);
      ++global_step;
      StepRecord rec{global_step, static_cast<double>(loss.item()), lr, {}};
      append_log(log_ptr, rec);
      result.log.push_back(std::move(rec));
    }
  }

  std::vector<std::string> predictions;
  result.eval = evaluate_task(model, head, eval_data, vocab, cfg.max_len, cfg.batch_size,
                              &predictions);
  if (!cfg.out_dir.empty()) {
    CheckpointExtras extras;
    extras.step = global_step;
    extras.seed = cfg.seed;
    extras.head = &head;
    extras.head_labels = train_data.labels;
    result.final_checkpoint = out_path(cfg, "model.ckpt");
    save_checkpoint(model, result.final_checkpoint, extras);
    std::ofstream report(out_path(cfg, "metrics.txt"));
    report << result.eval.serialize();
    write_predictions_tsv(out_path(cfg, "predictions.tsv"), predictions);
  }
  return result;
}

MetricsReport evaluate_task(const EncoderModel<float>& model, const TaskHead<float>& head,
                            const TaskData& data, const Vocabulary& vocab, int max_len,
                            std::int64_t batch_size, std::vector<std::string>* predictions) {
  const std::size_t n = data.size();
  if (n == 0) throw ValueError("evaluate: empty dataset");
  MetricsReport report;
  const char* task = task_kind_name(data.task);

  if (data.head_kind == HeadKind::token_classification) {
    std::vector<std::vector<Span>> gold_spans, pred_spans;
    for (std::size_t begin = 0; begin < n; begin += static_cast<std::size_t>(batch_size)) {
      const std::size_t end = std::min(n, begin + static_cast<std::size_t>(batch_size));
      std::vector<std::size_t> indices;
      for (std::size_t i = begin; i < end; ++i) indices.push_back(i);
      TaskBatch batch = encode_task_batch(data, indices, vocab, max_len);
      Tensor<float> logits = forward_task_head(model, head, batch.input);
      const auto lv = logits.data();
      const std::int64_t C = head.num_labels;
      for (std::size_t bi = 0; bi < indices.size(); ++bi) {
        const NerSentence& sent = data.sentences[indices[bi]];
        std::vector<std::string> pred_labels;
        for (std::size_t t = 0; t < sent.tokens.size(); ++t) {
          const std::int64_t pos = batch.token_positions[bi][t];
          if (pos < 0) {
            pred_labels.push_back("O");  // truncated away
            continue;
          }
          const float* row =
              lv.data() + (static_cast<std::int64_t>(bi) * batch.input.len + pos) * C;
          std::int64_t best = 0;
          for (std::int64_t c = 1; c < C; ++c)
            if (row[c] > row[best]) best = c;
          pred_labels.push_back(data.labels[static_cast<std::size_t>(best)]);
        }
        gold_spans.push_back(spans_from_bio(sent.labels));
        pred_spans.push_back(spans_from_bio(pred_labels));
        if (predictions) {
          std::string joined;
          for (std::size_t t = 0; t < pred_labels.size(); ++t) {
            if (t) joined += " ";
            joined += pred_labels[t];
          }
          predictions->push_back(joined);
        }
      }
    }
    PrfScores scores = exact_f1(gold_spans, pred_spans);
    report.add(task, "exact_precision", scores.precision, static_cast<std::int64_t>(n));
    report.add(task, "exact_recall", scores.recall, static_cast<std::int64_t>(n));
    report.add(task, "exact_f1", scores.f1, static_cast<std::int64_t>(n));
    return report;
  }

  std::vector<std::string> gold, pred;
  for (std::size_t begin = 0; begin < n; begin += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(n, begin + static_cast<std::size_t>(batch_size));
    std::vector<std::size_t> indices;
    for (std::size_t i = begin; i < end; ++i) indices.push_back(i);
    TaskBatch batch = encode_task_batch(data, indices, vocab, max_len);
    Tensor<float> logits = forward_task_head(model, head, batch.input);
    const auto lv = logits.data();
    const std::int64_t C = head.num_labels;
    for (std::size_t bi = 0; bi < indices.size(); ++bi) {
      const float* row = lv.data() + static_cast<std::int64_t>(bi) * C;
      std::int64_t best = 0;
      for (std::int64_t c = 1; c < C; ++c)
        if (row[c] > row[best]) best = c;
      pred.push_back(data.labels[static_cast<std::size_t>(best)]);
      gold.push_back(data.labels[static_cast<std::size_t>(data.label_ids[indices[bi]])]);
    }
  }
  if (predictions) *predictions = pred;

  MetricScheme scheme = MetricScheme::accuracy;
  if (data.task == TaskKind::re) scheme = MetricScheme::micro_f1;
  if (data.task == TaskKind::cls) scheme = MetricScheme::macro_f1;
  report.add(task, metric_scheme_name(scheme), classification_score(gold, pred, scheme),
             static_cast<std::int64_t>(n));
  report.add(task, "accuracy", classification_score(gold, pred, MetricScheme::accuracy),
             static_cast<std::int64_t>(n));
  return report;
}

double evaluate_mlm_loss(const EncoderModel<float>& model, const std::string& corpus_path,
                         const Vocabulary& vocab, int max_len, std::int64_t batch_size,
                         std::uint64_t seed) {
  CorpusBatcher batcher(corpus_path, vocab, max_len, static_cast<int>(batch_size), seed);
  const std::int64_t V = model.desc().vocab_size;
  double total = 0.0;
  std::int64_t count = 0;
  for (std::int64_t b = 0; b < batcher.batches_per_epoch(); ++b) {
    MlmBatch batch = batcher.batch(0, b);
    auto out = model.forward(input_from(batch));
    auto flat = reshape(out.logits, {batch.batch * batch.len, V});
    total += static_cast<double>(
        cross_entropy(flat, std::span<const std::int32_t>(batch.labels)).item());
    ++count;
  }
  return total / static_cast<double>(count);
}

double smoothed_loss(const std::vector<StepRecord>& log, std::int64_t step, std::int64_t window) {
  if (step < window || step > static_cast<std::int64_t>(log.size())) {
    throw ValueError("smoothed_loss: window out of range");
  }
  double acc = 0.0;
  for (std::int64_t i = step - window; i < step; ++i)
    acc += log[static_cast<std::size_t>(i)].loss;
  return acc / static_cast<double>(window);
}

std::string serialize_log(const std::vector<StepRecord>& log) {
  std::string out;
  for (const auto& rec : log) {
    json j;
    j["step"] = rec.step;
    j["loss"] = rec.loss;
    j["lr"] = rec.lr;
    if (!rec.components.empty()) {
      json c;
      for (const auto& [k, v] : rec.components) c[k] = v;
      j["components"] = c;
    }
    out += j.dump();
    out += "\n";
  }
  return out;
}

}  // namespace clt
