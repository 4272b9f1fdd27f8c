#include "clt/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "clt/checkpoint.hpp"
#include "clt/profiler.hpp"
#include "clt/train.hpp"

namespace clt {

namespace {

namespace fs = std::filesystem;

// defaults for every accepted key, printable via --print-defaults
KvFile default_config() {
  KvFile kv;
  kv.set_int("run.seed", 1);
  kv.set_double("run.lr", 5e-4);
  kv.set_int("run.batch", 8);
  kv.set_int("run.accumulation", 1);
  kv.set_int("run.epochs", 3);
  kv.set_int("run.max_steps", 0);
  kv.set_int("run.warmup", 0);
  kv.set_double("run.weight_decay", 1e-4);
  kv.set_double("run.clip_norm", 1.0);
  kv.set_int("run.max_len", 128);
  kv.set_int("run.checkpoint_interval", 0);
  kv.set_bool("run.lowercase", false);
  kv.set_double("mlm.rate", 0.15);
  kv.set_double("mlm.mask_frac", 0.8);
  kv.set_double("mlm.random_frac", 0.1);
  kv.set_double("distill.temperature", 2.0);
  kv.set("distill.lambdas", "");
  kv.set("distill.attention_target", "scores");
  kv.set_int("profile.seq_len", 256);
  kv.set_int("profile.latency_runs", 10);
  kv.set_int("profile.latency_warmup", 3);
  kv.set_int("profile.latency_batch", 1);
  return kv;
}

struct MergedConfig {
  KvFile kv;

  // flag value wins over config file value wins over default
  void apply_flag(const std::string& key, const std::string& value, bool flag_given) {
    if (flag_given) kv.set(key, value);
  }
};

TrainConfig train_config_from(const KvFile& kv, const std::string& out_dir) {
  TrainConfig cfg;
  cfg.seed = static_cast<std::uint64_t>(kv.get_int("run.seed", 1));
  cfg.lr = kv.get_double("run.lr", 5e-4);
  cfg.batch_size = kv.get_int("run.batch", 8);
  cfg.accumulation = kv.get_int("run.accumulation", 1);
  cfg.epochs = kv.get_int("run.epochs", 3);
  cfg.max_steps = kv.get_int("run.max_steps", 0);
  cfg.warmup_steps = kv.get_int("run.warmup", 0);
  cfg.weight_decay = kv.get_double("run.weight_decay", 1e-4);
  cfg.clip_norm = kv.get_double("run.clip_norm", 1.0);
  cfg.max_len = static_cast<int>(kv.get_int("run.max_len", 128));
  cfg.checkpoint_interval = kv.get_int("run.checkpoint_interval", 0);
  cfg.lowercase = kv.get_bool("run.lowercase", false);
  cfg.mlm.rate = kv.get_double("mlm.rate", 0.15);
  cfg.mlm.mask_frac = kv.get_double("mlm.mask_frac", 0.8);
  cfg.mlm.random_frac = kv.get_double("mlm.random_frac", 0.1);
  cfg.out_dir = out_dir;
  cfg.resume_from = kv.get_or("run.resume_from", "");
  return cfg;
}

DistillationConfig distill_config_from(const KvFile& kv, std::int64_t student_depth,
                                       DistillObjective objective) {
  DistillationConfig cfg = objective == DistillObjective::output_alignment
                               ? DistillationConfig::output_alignment_defaults()
                               : DistillationConfig::layer_to_layer_defaults(student_depth);
  cfg.temperature = kv.get_double("distill.temperature",
                                  objective == DistillObjective::output_alignment ? 2.0 : 1.0);
  const std::string lambdas = kv.get_or("distill.lambdas", "");
  if (!lambdas.empty()) {
    cfg.lambdas.clear();
    std::istringstream in(lambdas);
    std::string item;
    while (std::getline(in, item, ',')) {
      try {
        cfg.lambdas.push_back(std::stod(item));
      } catch (const std::exception&) {
        throw ConfigError("config: distill.lambdas entry '" + item + "' is not a number");
      }
    }
  }
  const std::string target = kv.get_or("distill.attention_target", "scores");
  if (target == "scores") {
    cfg.align_attention_on = AttentionTarget::scores;
  } else if (target == "probabilities") {
    cfg.align_attention_on = AttentionTarget::probabilities;
  } else {
    throw ConfigError("config: distill.attention_target must be scores or probabilities");
  }
  return cfg;
}

TaskData load_task_data(TaskKind task, const std::string& path,
                        const std::vector<std::string>& labels) {
  switch (task) {
    case TaskKind::ner:
      return task_from_ner(load_conll(path, labels));
    case TaskKind::re:
      return task_from_re(load_re_tsv(path));
    case TaskKind::nli:
      return task_from_pairs(load_pairs_tsv(path));
    case TaskKind::cls:
      return task_from_cls(load_cls_tsv(path, labels));
  }
  throw ConfigError("unknown task");
}

void require_same_labels(TaskData& eval_data, const TaskData& train_data) {
  if (eval_data.labels == train_data.labels) return;
  // RE and CLS sets may be derived per file; re-map the eval view onto the
  // training inventory so label ids agree
  if (eval_data.head_kind == HeadKind::token_classification) {
    throw ConfigError("evaluate: label inventories differ between train and eval data");
  }
  std::vector<std::int32_t> remapped;
  for (std::size_t i = 0; i < eval_data.label_ids.size(); ++i) {
    const std::string& name =
        eval_data.labels[static_cast<std::size_t>(eval_data.label_ids[i])];
    auto it = std::find(train_data.labels.begin(), train_data.labels.end(), name);
    if (it == train_data.labels.end()) {
      throw ConfigError("evaluate: eval label '" + name + "' missing from the training set");
    }
    remapped.push_back(static_cast<std::int32_t>(it - train_data.labels.begin()));
  }
  eval_data.labels = train_data.labels;
  eval_data.label_ids = std::move(remapped);
}

int dispatch(const std::string& command, const KvFile& kv, const std::string& out_dir) {
  auto errors = validate_config(command, kv);
  if (!errors.empty()) {
    for (const auto& e : errors) std::cerr << "config error: " << e << "\n";
    return 3;
  }

  if (command == "pretrain") {
    Vocabulary vocab = Vocabulary::load(kv.get("data.vocab"));
    TrainConfig cfg = train_config_from(kv, out_dir);
    EncoderModel<float> model = [&] {
      if (kv.has("model.init_checkpoint")) {
        return model_from_checkpoint(load_checkpoint(kv.get("model.init_checkpoint")));
      }
      auto desc = ArchitectureDescriptor::load(kv.get("model.desc"));
      return EncoderModel<float>::build(desc, cfg.seed);
    }();
    auto result = pretrain_mlm(model, kv.get("data.corpus"), vocab, cfg);
    std::cout << "pretrain: " << result.log.size() << " steps, final loss "
              << (result.log.empty() ? 0.0 : result.log.back().loss) << "\n";
    if (!result.final_checkpoint.empty()) {
      std::cout << "checkpoint: " << result.final_checkpoint << "\n";
    }
    return 0;
  }

  if (command == "distill") {
    Vocabulary vocab = Vocabulary::load(kv.get("data.vocab"));
    TrainConfig cfg = train_config_from(kv, out_dir);
    DistillObjective objective = objective_from_name(kv.get("distill.objective"));
    EncoderModel<float> teacher = model_from_checkpoint(load_checkpoint(kv.get("model.teacher")));
    EncoderModel<float> student = [&] {
      if (kv.has("model.student_checkpoint")) {
        return model_from_checkpoint(load_checkpoint(kv.get("model.student_checkpoint")));
      }
      auto desc = ArchitectureDescriptor::load(kv.get("model.student_desc"));
      return EncoderModel<float>::build(desc, cfg.seed);
    }();
    DistillationConfig dcfg =
        distill_config_from(kv, student.desc().effective_depth(), objective);
    auto result =
        distill_pretrain(student, teacher, kv.get("data.corpus"), vocab, dcfg, cfg, objective);
    std::cout << "distill(" << objective_name(objective) << "): " << result.log.size()
              << " steps, final loss " << (result.log.empty() ? 0.0 : result.log.back().loss)
              << "\n";
    if (!result.final_checkpoint.empty()) {
      std::cout << "checkpoint: " << result.final_checkpoint << "\n";
    }
    return 0;
  }

  if (command == "finetune") {
    Vocabulary vocab = Vocabulary::load(kv.get("data.vocab"));
    TrainConfig cfg = train_config_from(kv, out_dir);
    TaskKind task = task_kind_from_name(kv.get("task.kind"));
    std::vector<std::string> labels;
    if (kv.has("task.labels")) labels = load_label_file(kv.get("task.labels"));
    TaskData train_data = load_task_data(task, kv.get("data.train"), labels);
    TaskData eval_data = load_task_data(task, kv.get("data.eval"), train_data.labels);
    require_same_labels(eval_data, train_data);

    EncoderModel<float> model = [&] {
      if (kv.has("model.checkpoint")) {
        return model_from_checkpoint(load_checkpoint(kv.get("model.checkpoint")));
      }
      auto desc = ArchitectureDescriptor::load(kv.get("model.desc"));
      return EncoderModel<float>::build(desc, cfg.seed);
    }();
    auto head = TaskHead<float>::create(train_data.head_kind,
                                        static_cast<std::int64_t>(train_data.labels.size()),
                                        model.desc().hidden);
    auto result = finetune(model, head, train_data, eval_data, vocab, cfg);
    std::cout << result.eval.serialize();
    return 0;
  }

  if (command == "evaluate") {
    Vocabulary vocab = Vocabulary::load(kv.get("data.vocab"));
    TaskKind task = task_kind_from_name(kv.get("task.kind"));
    Checkpoint ckpt = load_checkpoint(kv.get("model.checkpoint"));
    EncoderModel<float> model = model_from_checkpoint(ckpt);
    auto head = head_from_checkpoint(ckpt);
    if (!head) throw ConfigError("evaluate: the checkpoint carries no task head");

    std::vector<std::string> labels;
    const std::string stored = ckpt.meta.get_or("head_label_names", "");
    if (kv.has("task.labels")) {
      labels = load_label_file(kv.get("task.labels"));
    } else if (!stored.empty()) {
      std::istringstream in(stored);
      std::string item;
      while (std::getline(in, item, '\t')) labels.push_back(item);
    }
    TaskData data = load_task_data(task, kv.get("data.eval"), labels);
    if (!labels.empty()) data.labels = labels;

    const int max_len = static_cast<int>(kv.get_int("run.max_len", 128));
    const std::int64_t batch = kv.get_int("run.batch", 8);
    std::vector<std::string> predictions;
    MetricsReport report = evaluate_task(model, *head, data, vocab, max_len, batch, &predictions);
    std::cout << report.serialize();
    if (!out_dir.empty()) {
      fs::create_directories(out_dir);
      std::ofstream rep(fs::path(out_dir) / "metrics.txt");
      rep << report.serialize();
      write_predictions_tsv((fs::path(out_dir) / "predictions.tsv").string(), predictions);
      if (data.head_kind != HeadKind::token_classification) {
        std::vector<std::string> gold;
        for (auto id : data.label_ids) gold.push_back(data.labels[static_cast<std::size_t>(id)]);
        auto matrix = confusion_matrix(gold, predictions, data.labels);
        std::ofstream conf(fs::path(out_dir) / "confusion_matrix.txt");
        conf << format_confusion_matrix(matrix, data.labels);
      }
    }
    return 0;
  }

  if (command == "profile") {
    std::vector<EfficiencyRecord> records;
    const std::int64_t seq_len = kv.get_int("profile.seq_len", 256);
    std::istringstream descs(kv.get("profile.descs"));
    std::string desc_path;
    while (std::getline(descs, desc_path, '\t')) {
      auto desc = ArchitectureDescriptor::load(desc_path);
      EfficiencyRecord rec = profile_descriptor(desc, seq_len);
      if (kv.get_bool("profile.measure_latency", false)) {
        auto model = EncoderModel<float>::build(desc, 0);
        auto stats = measure_latency(model, seq_len,
                                     kv.get_int("profile.latency_batch", 1),
                                     static_cast<int>(kv.get_int("profile.latency_warmup", 3)),
                                     static_cast<int>(kv.get_int("profile.latency_runs", 10)));
        rec.latency_ms_mean = stats.mean_ms;
        rec.latency_ms_std = stats.std_ms;
      }
      records.push_back(std::move(rec));
    }
    const std::string table = emit_efficiency_table(records);
    std::cout << table;
    if (!out_dir.empty()) {
      fs::create_directories(out_dir);
      std::ofstream tbl(fs::path(out_dir) / "efficiency.txt");
      tbl << table;
      std::ofstream jsonl(fs::path(out_dir) / "efficiency_records.jsonl");
      jsonl << efficiency_records_jsonl(records);
    }
    return 0;
  }

  if (command == "mine-corners") {
    std::vector<std::vector<std::string>> predictions;
    std::istringstream paths(kv.get("corners.predictions"));
    std::string path;
    while (std::getline(paths, path, '\t')) {
      predictions.push_back(load_predictions_tsv(path));
    }
    auto indices = mine_corner_cases(predictions,
                                     static_cast<int>(kv.get_int("corners.min_distinct", 2)));
    std::ostringstream body;
    for (auto i : indices) body << i << "\n";
    std::cout << "corner cases: " << indices.size() << " of "
              << (predictions.empty() ? 0 : predictions.front().size()) << "\n";
    if (!out_dir.empty()) {
      fs::create_directories(out_dir);
      std::ofstream out(fs::path(out_dir) / "corner_cases.txt");
      out << body.str();
    } else {
      std::cout << body.str();
    }
    return 0;
  }

  std::cerr << "unknown command: " << command << "\n";
  return 2;
}

}  // namespace

std::vector<std::string> validate_config(const std::string& command, const KvFile& kv) {
  std::vector<std::string> errors;
  auto require = [&](const char* key) {
    if (!kv.has(key) || kv.get(key).empty()) {
      errors.push_back(std::string("missing required key '") + key + "'");
      return false;
    }
    return true;
  };
  auto require_file = [&](const char* key) {
    if (!require(key)) return;
    if (!fs::exists(kv.get(key))) {
      errors.push_back(std::string("key '") + key + "' names a missing file: " + kv.get(key));
    }
  };

  if (command == "pretrain" || command == "distill") {
    require_file("data.corpus");
    require_file("data.vocab");
    if (kv.get_int("run.seed", -1) < 0) errors.push_back("run.seed must be a nonnegative integer");
    if (kv.get_int("run.batch", 1) < 1) errors.push_back("run.batch must be >= 1");
    if (kv.get_int("run.accumulation", 1) < 1) errors.push_back("run.accumulation must be >= 1");
    const double rate = kv.get_double("mlm.rate", 0.15);
    if (rate < 0.0 || rate > 1.0) errors.push_back("mlm.rate must be in [0, 1]");
    if (kv.get_double("mlm.mask_frac", 0.8) + kv.get_double("mlm.random_frac", 0.1) > 1.0) {
      errors.push_back("mlm.mask_frac + mlm.random_frac must be <= 1");
    }
  }
  if (command == "pretrain") {
    if (!kv.has("model.desc") && !kv.has("model.init_checkpoint")) {
      errors.push_back("one of model.desc or model.init_checkpoint is required");
    }
  }
  if (command == "distill") {
    require_file("model.teacher");
    if (!kv.has("model.student_desc") && !kv.has("model.student_checkpoint")) {
      errors.push_back("one of model.student_desc or model.student_checkpoint is required");
    }
    if (require("distill.objective")) {
      try {
        DistillObjective objective = objective_from_name(kv.get("distill.objective"));
        // objective <-> architecture compatibility when the descriptor is at hand
        if (kv.has("model.student_desc") && fs::exists(kv.get("model.student_desc"))) {
          auto desc = ArchitectureDescriptor::load(kv.get("model.student_desc"));
          if (objective == DistillObjective::recursive && !desc.recursive) {
            errors.push_back("the recursive objective requires a recursive student descriptor");
          }
          if (objective == DistillObjective::layer_to_layer && desc.recursive) {
            errors.push_back("the layer-to-layer objective requires a standard student; use the "
                             "recursive objective");
          }
          if (objective != DistillObjective::output_alignment &&
              kv.has("model.teacher") && fs::exists(kv.get("model.teacher"))) {
            try {
              auto teacher_desc = load_checkpoint(kv.get("model.teacher")).descriptor;
              if (teacher_desc.effective_depth() % desc.effective_depth() != 0) {
                errors.push_back(
                    "teacher depth " + std::to_string(teacher_desc.effective_depth()) +
                    " is not divisible by student depth " +
                    std::to_string(desc.effective_depth()));
              }
            } catch (const std::exception&) {
              // unreadable checkpoint is reported by the file check
            }
          }
        }
      } catch (const ConfigError& e) {
        errors.push_back(e.what());
      }
    }
  }
  if (command == "finetune") {
    require_file("data.vocab");
    require_file("data.train");
    require_file("data.eval");
    if (require("task.kind")) {
      try {
        TaskKind task = task_kind_from_name(kv.get("task.kind"));
        if (task == TaskKind::ner && !kv.has("task.labels")) {
          errors.push_back("task.labels (a BIO inventory file) is required for ner");
        }
      } catch (const ConfigError& e) {
        errors.push_back(e.what());
      }
    }
    if (!kv.has("model.desc") && !kv.has("model.checkpoint")) {
      errors.push_back("one of model.desc or model.checkpoint is required");
    }
  }
  if (command == "evaluate") {
    require_file("data.vocab");
    require_file("data.eval");
    require_file("model.checkpoint");
    require("task.kind");
  }
  if (command == "profile") {
    if (require("profile.descs")) {
      std::istringstream in(kv.get("profile.descs"));
      std::string path;
      while (std::getline(in, path, '\t')) {
        if (!fs::exists(path)) errors.push_back("descriptor file missing: " + path);
      }
    }
    if (kv.get_int("profile.seq_len", 256) < 1) errors.push_back("profile.seq_len must be >= 1");
  }
  if (command == "mine-corners") {
    if (require("corners.predictions")) {
      std::istringstream in(kv.get("corners.predictions"));
      std::string path;
      int count = 0;
      while (std::getline(in, path, '\t')) {
        ++count;
        if (!fs::exists(path)) errors.push_back("prediction file missing: " + path);
      }
      if (count < 2) errors.push_back("mine-corners needs at least 2 prediction files");
    }
  }
  return errors;
}

int run(int argc, const char* const* argv) {
  CLI::App app{"compact clinical transformer toolkit"};
  app.require_subcommand(0, 1);

  std::string config_path, out_dir;
  bool print_defaults = false;
  app.add_option("--config", config_path, "key = value configuration file");
  app.add_option("--out", out_dir, "output directory");
  app.add_flag("--print-defaults", print_defaults, "print every configuration default and exit");

  // flag storage; only values the user actually passed override the config
  std::string seed, lr, batch, accumulation, epochs, max_steps, warmup, weight_decay, clip_norm,
      max_len, checkpoint_interval, resume_from;
  std::string corpus, vocab_path, desc_path, init_checkpoint;
  std::string teacher, student_desc, student_checkpoint, objective, temperature, lambdas,
      attention_target;
  std::string task, labels_path, train_data, eval_data, model_checkpoint;
  std::vector<std::string> profile_descs, corner_preds;
  std::string seq_len, measure_latency_flag, latency_runs, latency_warmup, latency_batch,
      min_distinct;
  bool lowercase = false;

  auto add_run_options = [&](CLI::App* cmd) {
    cmd->add_option("--seed", seed, "rng seed (runs are deterministic in it)");
    cmd->add_option("--lr", lr, "peak learning rate");
    cmd->add_option("--batch", batch, "micro-batch size");
    cmd->add_option("--accumulation", accumulation, "gradient accumulation factor");
    cmd->add_option("--epochs", epochs, "training epochs");
    cmd->add_option("--max-steps", max_steps, "optimizer step budget (0 = epochs)");
    cmd->add_option("--warmup", warmup, "linear warmup steps");
    cmd->add_option("--weight-decay", weight_decay, "decoupled weight decay");
    cmd->add_option("--clip-norm", clip_norm, "global gradient norm clip (0 = off)");
    cmd->add_option("--max-len", max_len, "sequence length");
    cmd->add_option("--checkpoint-interval", checkpoint_interval,
                    "steps between checkpoints (0 = final only)");
    cmd->add_option("--resume-from", resume_from, "checkpoint to continue from");
    cmd->add_flag("--lowercase", lowercase, "lowercase input text");
    cmd->add_option("--vocab", vocab_path, "vocabulary file (one token per line)");
  };

  CLI::App* pretrain_cmd = app.add_subcommand("pretrain", "masked-LM pre-training");
  pretrain_cmd->fallthrough();
  add_run_options(pretrain_cmd);
  pretrain_cmd->add_option("--corpus", corpus, "newline-delimited text corpus");
  pretrain_cmd->add_option("--desc", desc_path, "architecture descriptor file");
  pretrain_cmd->add_option("--init-checkpoint", init_checkpoint,
                           "checkpoint to continue pre-training from");

  CLI::App* distill_cmd = app.add_subcommand("distill", "distillation pre-training");
  distill_cmd->fallthrough();
  add_run_options(distill_cmd);
  distill_cmd->add_option("--corpus", corpus, "newline-delimited text corpus");
  distill_cmd->add_option("--teacher", teacher, "frozen teacher checkpoint");
  distill_cmd->add_option("--student-desc", student_desc, "student descriptor file");
  distill_cmd->add_option("--student-checkpoint", student_checkpoint, "student checkpoint");
  distill_cmd->add_option("--objective", objective, "eq1 | eq2 | recursive");
  distill_cmd->add_option("--temperature", temperature, "softening temperature");
  distill_cmd->add_option("--lambdas", lambdas, "comma-separated component weights");
  distill_cmd->add_option("--attention-target", attention_target, "scores | probabilities");

  CLI::App* finetune_cmd = app.add_subcommand("finetune", "task fine-tuning + evaluation");
  finetune_cmd->fallthrough();
  add_run_options(finetune_cmd);
  finetune_cmd->add_option("--task", task, "ner | re | nli | cls");
  finetune_cmd->add_option("--labels", labels_path, "label inventory file");
  finetune_cmd->add_option("--train-data", train_data, "training split");
  finetune_cmd->add_option("--eval-data", eval_data, "evaluation split");
  finetune_cmd->add_option("--checkpoint", model_checkpoint, "encoder checkpoint");
  finetune_cmd->add_option("--desc", desc_path, "architecture descriptor file");

  CLI::App* evaluate_cmd = app.add_subcommand("evaluate", "evaluate a fine-tuned checkpoint");
  evaluate_cmd->fallthrough();
  evaluate_cmd->add_option("--task", task, "ner | re | nli | cls");
  evaluate_cmd->add_option("--labels", labels_path, "label inventory file");
  evaluate_cmd->add_option("--data", eval_data, "evaluation split");
  evaluate_cmd->add_option("--checkpoint", model_checkpoint, "fine-tuned checkpoint");
  evaluate_cmd->add_option("--vocab", vocab_path, "vocabulary file");
  evaluate_cmd->add_option("--max-len", max_len, "sequence length");
  evaluate_cmd->add_option("--batch", batch, "batch size");

  CLI::App* profile_cmd = app.add_subcommand("profile", "parameter/GMACs/latency/size profiling");
  profile_cmd->fallthrough();
  profile_cmd->add_option("--desc", profile_descs, "descriptor file (repeatable)");
  profile_cmd->add_option("--seq-len", seq_len, "sequence length for compute counts");
  profile_cmd->add_flag("--measure-latency", measure_latency_flag,
                        "also measure wall-clock latency");
  profile_cmd->add_option("--latency-runs", latency_runs, "measured runs");
  profile_cmd->add_option("--latency-warmup", latency_warmup, "warmup runs");
  profile_cmd->add_option("--latency-batch", latency_batch, "latency batch size");

  CLI::App* corners_cmd = app.add_subcommand("mine-corners", "ensemble disagreement mining");
  corners_cmd->fallthrough();
  corners_cmd->add_option("--pred", corner_preds, "prediction TSV (repeatable, >= 2)");
  corners_cmd->add_option("--min-distinct", min_distinct, "distinct labels to flag (default 2)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  if (print_defaults) {
    std::cout << default_config().serialize();
    return 0;
  }

  try {
    KvFile kv = default_config();
    if (!config_path.empty()) {
      for (const auto& [k, v] : KvFile::parse_file(config_path).entries()) kv.set(k, v);
    }
    auto set_if = [&](const std::string& key, const std::string& value) {
      if (!value.empty()) kv.set(key, value);
    };
    set_if("run.seed", seed);
    set_if("run.lr", lr);
    set_if("run.batch", batch);
    set_if("run.accumulation", accumulation);
    set_if("run.epochs", epochs);
    set_if("run.max_steps", max_steps);
    set_if("run.warmup", warmup);
    set_if("run.weight_decay", weight_decay);
    set_if("run.clip_norm", clip_norm);
    set_if("run.max_len", max_len);
    set_if("run.checkpoint_interval", checkpoint_interval);
    set_if("run.resume_from", resume_from);
    if (lowercase) kv.set_bool("run.lowercase", true);
    set_if("data.corpus", corpus);
    set_if("data.vocab", vocab_path);
    set_if("data.train", train_data);
    set_if("data.eval", eval_data);
    set_if("model.desc", desc_path);
    set_if("model.init_checkpoint", init_checkpoint);
    set_if("model.teacher", teacher);
    set_if("model.student_desc", student_desc);
    set_if("model.student_checkpoint", student_checkpoint);
    set_if("model.checkpoint", model_checkpoint);
    set_if("distill.objective", objective);
    set_if("distill.temperature", temperature);
    set_if("distill.lambdas", lambdas);
    set_if("distill.attention_target", attention_target);
    set_if("task.kind", task);
    set_if("task.labels", labels_path);
    set_if("profile.seq_len", seq_len);
    if (!measure_latency_flag.empty()) kv.set_bool("profile.measure_latency", true);
    set_if("profile.latency_runs", latency_runs);
    set_if("profile.latency_warmup", latency_warmup);
    set_if("profile.latency_batch", latency_batch);
    set_if("corners.min_distinct", min_distinct);
    if (!profile_descs.empty()) {
      std::string joined;
      for (const auto& p : profile_descs) {
        if (!joined.empty()) joined += "\t";
        joined += p;
      }
      kv.set("profile.descs", joined);
    }
    if (!corner_preds.empty()) {
      std::string joined;
      for (const auto& p : corner_preds) {
        if (!joined.empty()) joined += "\t";
        joined += p;
      }
      kv.set("corners.predictions", joined);
    }

    std::string command;
    for (const CLI::App* sub : app.get_subcommands()) command = sub->get_name();
    if (command.empty()) {
      std::cerr << app.help();
      return 2;
    }
    return dispatch(command, kv, out_dir);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace clt
