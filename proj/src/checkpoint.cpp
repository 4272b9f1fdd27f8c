#include "clt/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace clt {

namespace {

constexpr char kMagic[8] = {'C', 'L', 'T', 'C', 'K', 'P', 'T', '\n'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void write_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void write_i64(std::ostream& out, std::int64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void write_string(std::ostream& out, const std::string& s) {
  write_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void write_tensor(std::ostream& out, const std::string& name, const Tensor<float>& t) {
  write_string(out, name);
  write_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (std::int64_t d : t.shape()) write_i64(out, d);
  out.write(reinterpret_cast<const char*>(t.data().data()),
            static_cast<std::streamsize>(t.size() * sizeof(float)));
}

std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(v))) {
    throw IoError("checkpoint: truncated file");
  }
  return v;
}

std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(v))) {
    throw IoError("checkpoint: truncated file");
  }
  return v;
}

std::int64_t read_i64(std::istream& in) {
  std::int64_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(v))) {
    throw IoError("checkpoint: truncated file");
  }
  return v;
}

std::string read_string(std::istream& in) {
  std::uint64_t n = read_u64(in);
  if (n > (1ull << 32)) throw IoError("checkpoint: implausible string length");
  std::string s(n, '\0');
  if (!in.read(s.data(), static_cast<std::streamsize>(n))) {
    throw IoError("checkpoint: truncated file");
  }
  return s;
}

std::pair<std::string, Tensor<float>> read_tensor(std::istream& in) {
  std::string name = read_string(in);
  std::uint32_t rank = read_u32(in);
  if (rank > 8) throw IoError("checkpoint: implausible tensor rank");
  Shape shape;
  for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(read_i64(in));
  const std::int64_t n = numel(shape);
  if (n < 0 || n > (1ll << 33)) throw IoError("checkpoint: implausible tensor size");
  std::vector<float> data(static_cast<std::size_t>(n));
  if (!in.read(reinterpret_cast<char*>(data.data()),
               static_cast<std::streamsize>(data.size() * sizeof(float)))) {
    throw IoError("checkpoint: truncated file");
  }
  return {std::move(name), Tensor<float>::from(std::move(shape), std::move(data))};
}

}  // namespace

void save_checkpoint(const EncoderModel<float>& model, const std::string& path,
                     const CheckpointExtras& extras) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("checkpoint: cannot write " + path);
  out.write(kMagic, sizeof(kMagic));
  write_u32(out, kVersion);
  write_string(out, model.desc().to_kv().serialize());

  KvFile meta;
  meta.set_int("step", extras.step);
  meta.set_int("epoch", extras.epoch);
  meta.set_int("seed", static_cast<std::int64_t>(extras.seed));
  meta.set_bool("has_optimizer", extras.optimizer != nullptr);
  if (extras.optimizer) meta.set_int("optimizer_step", extras.optimizer->step_count());
  meta.set_bool("has_head", extras.head != nullptr);
  if (extras.head) {
    meta.set("head_kind", head_kind_name(extras.head->kind));
    meta.set_int("head_labels", extras.head->num_labels);
    meta.set_double("head_dropout", extras.head->dropout);
    std::string joined;
    for (const auto& l : extras.head_labels) {
      if (!joined.empty()) joined += "\t";
      joined += l;
    }
    meta.set("head_label_names", joined);
  }
  write_string(out, meta.serialize());

  std::uint32_t count = static_cast<std::uint32_t>(model.params().size());
  if (extras.optimizer) count += 2 * static_cast<std::uint32_t>(extras.optimizer->size());
  if (extras.head) count += 2;
  write_u32(out, count);
  for (const auto& p : model.params()) write_tensor(out, p.name, p.tensor);
  if (extras.optimizer) {
    auto& opt = *extras.optimizer;
    for (std::size_t i = 0; i < opt.size(); ++i) {
      write_tensor(out, "optimizer.m." + opt.params()[i].name, opt.first_moment(i));
      write_tensor(out, "optimizer.v." + opt.params()[i].name, opt.second_moment(i));
    }
  }
  if (extras.head) {
    write_tensor(out, "head.weight", extras.head->weight);
    write_tensor(out, "head.bias", extras.head->bias);
  }
  if (!out) throw IoError("checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint: cannot open " + path);
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw IoError("checkpoint: " + path + " is not a checkpoint file (bad magic)");
  }
  const std::uint32_t version = read_u32(in);
  if (version != kVersion) {
    throw IoError("checkpoint: unsupported version " + std::to_string(version) + ", expected " +
                  std::to_string(kVersion));
  }
  Checkpoint ckpt;
  ckpt.descriptor = ArchitectureDescriptor::from_kv(KvFile::parse_string(read_string(in)));
  ckpt.meta = KvFile::parse_string(read_string(in));
  const std::uint32_t count = read_u32(in);
  for (std::uint32_t i = 0; i < count; ++i) ckpt.tensors.push_back(read_tensor(in));
  return ckpt;
}

EncoderModel<float> model_from_checkpoint(const Checkpoint& ckpt) {
  EncoderModel<float> model = EncoderModel<float>::build(ckpt.descriptor, 0);
  load_checkpoint_into(model, ckpt);
  return model;
}

void load_checkpoint_into(EncoderModel<float>& model, const Checkpoint& ckpt) {
  if (model.desc().to_kv().serialize() != ckpt.descriptor.to_kv().serialize()) {
    throw ConfigError("checkpoint: descriptor mismatch between stored model '" +
                      ckpt.descriptor.name + "' and target '" + model.desc().name + "'");
  }
  for (auto& p : model.params()) {
    const Tensor<float>* stored = ckpt.find(p.name);
    if (!stored) throw IoError("checkpoint: missing tensor '" + p.name + "'");
    if (stored->shape() != p.tensor.shape()) {
      throw IoError("checkpoint: tensor '" + p.name + "' has shape " + shape_str(stored->shape()) +
                    ", expected " + shape_str(p.tensor.shape()));
    }
    std::copy(stored->data().begin(), stored->data().end(), p.tensor.data().begin());
  }
}

void load_optimizer_state(AdamW<float>& optimizer, const Checkpoint& ckpt) {
  if (!ckpt.meta.get_bool("has_optimizer", false)) {
    throw IoError("checkpoint: no optimizer state stored");
  }
  optimizer.set_step_count(ckpt.meta.get_int("optimizer_step", 0));
  for (std::size_t i = 0; i < optimizer.size(); ++i) {
    const std::string& name = optimizer.params()[i].name;
    const Tensor<float>* m = ckpt.find("optimizer.m." + name);
    const Tensor<float>* v = ckpt.find("optimizer.v." + name);
    if (!m || !v) throw IoError("checkpoint: missing optimizer state for '" + name + "'");
    std::copy(m->data().begin(), m->data().end(), optimizer.first_moment(i).data().begin());
    std::copy(v->data().begin(), v->data().end(), optimizer.second_moment(i).data().begin());
  }
}

std::optional<TaskHead<float>> head_from_checkpoint(const Checkpoint& ckpt) {
  if (!ckpt.meta.get_bool("has_head", false)) return std::nullopt;
  const Tensor<float>* w = ckpt.find("head.weight");
  const Tensor<float>* b = ckpt.find("head.bias");
  if (!w || !b) throw IoError("checkpoint: head metadata present but tensors missing");
  TaskHead<float> head;
  head.kind = head_kind_from_name(ckpt.meta.get("head_kind"));
  head.num_labels = ckpt.meta.get_int("head_labels", 0);
  head.dropout = ckpt.meta.get_double("head_dropout", 0.1);
  head.weight = w->detached();
  head.bias = b->detached();
  head.weight.set_requires_grad(true);
  head.bias.set_requires_grad(true);
  return head;
}

}  // namespace clt
