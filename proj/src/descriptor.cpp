#include "clt/descriptor.hpp"

namespace clt {

void ArchitectureDescriptor::validate() const {
  if (vocab_size <= 0) throw ConfigError("descriptor: vocab_size must be positive");
  if (max_positions <= 0) throw ConfigError("descriptor: max_positions must be positive");
  if (hidden <= 0) throw ConfigError("descriptor: hidden must be positive");
  if (heads <= 0 || hidden % heads != 0) {
    throw ConfigError("descriptor: hidden " + std::to_string(hidden) +
                      " must be divisible by heads " + std::to_string(heads));
  }
  if (mlp_expansion <= 0) throw ConfigError("descriptor: mlp_expansion must be positive");
  if (embedding_size < 0 || embedding_size > hidden) {
    throw ConfigError("descriptor: embedding_size must be in [1, hidden] or 0");
  }
  if (recursive) {
    if (layers != 1) {
      throw ConfigError("descriptor: a recursive encoder stores exactly one layer, got layers = " +
                        std::to_string(layers));
    }
    if (recursion_depth < 1) throw ConfigError("descriptor: recursion_depth must be >= 1");
    if (adapter_bottleneck < 0) throw ConfigError("descriptor: adapter_bottleneck must be >= 0");
  } else {
    if (layers < 1) throw ConfigError("descriptor: layers must be >= 1");
    if (adapter_bottleneck != 0) {
      throw ConfigError("descriptor: adapters require a recursive encoder");
    }
  }
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("descriptor: dropout must be in [0, 1)");
}

ArchitectureDescriptor ArchitectureDescriptor::from_kv(const KvFile& kv) {
  ArchitectureDescriptor d;
  d.name = kv.get_or("name", d.name);
  d.vocab_size = kv.get_int("vocab_size", 0);
  d.max_positions = kv.get_int("max_positions", d.max_positions);
  d.hidden = kv.get_int("hidden", 0);
  d.layers = kv.get_int("layers", d.layers);
  d.heads = kv.get_int("heads", d.heads);
  d.mlp_expansion = kv.get_int("mlp_expansion", d.mlp_expansion);
  d.embedding_size = kv.get_int("embedding_size", 0);
  d.recursive = kv.get_bool("recursive", false);
  d.recursion_depth = kv.get_int("recursion_depth", d.recursion_depth);
  d.adapter_bottleneck = kv.get_int("adapter_bottleneck", 0);
  d.dropout = kv.get_double("dropout", 0.0);
  d.use_segment = kv.get_bool("use_segment", false);
  d.use_pooler = kv.get_bool("use_pooler", false);
  d.with_mlm_head = kv.get_bool("with_mlm_head", true);
  d.declared_params = kv.get_int("declared_params", 0);
  d.validate();
  return d;
}

KvFile ArchitectureDescriptor::to_kv() const {
  KvFile kv;
  kv.set("name", name);
  kv.set_int("vocab_size", vocab_size);
  kv.set_int("max_positions", max_positions);
  kv.set_int("hidden", hidden);
  kv.set_int("layers", layers);
  kv.set_int("heads", heads);
  kv.set_int("mlp_expansion", mlp_expansion);
  kv.set_int("embedding_size", embedding_size);
  kv.set_bool("recursive", recursive);
  kv.set_int("recursion_depth", recursion_depth);
  kv.set_int("adapter_bottleneck", adapter_bottleneck);
  kv.set_double("dropout", dropout);
  kv.set_bool("use_segment", use_segment);
  kv.set_bool("use_pooler", use_pooler);
  kv.set_bool("with_mlm_head", with_mlm_head);
  kv.set_int("declared_params", declared_params);
  return kv;
}

ArchitectureDescriptor ArchitectureDescriptor::load(const std::string& path) {
  return from_kv(KvFile::parse_file(path));
}

void ArchitectureDescriptor::save(const std::string& path) const {
  to_kv().write_file(path);
}

std::int64_t count_parameters(const ArchitectureDescriptor& desc) {
  desc.validate();
  const std::int64_t V = desc.vocab_size;
  const std::int64_t P = desc.max_positions;
  const std::int64_t h = desc.hidden;
  const std::int64_t E = desc.embed_dim();
  const std::int64_t X = h * desc.mlp_expansion;

  std::int64_t embeddings = V * E + P * E;
  if (desc.use_segment) embeddings += 2 * E;
  if (desc.factorized()) embeddings += E * h + h;
  embeddings += 2 * h;

  const std::int64_t attention = 4 * (h * h + h);
  const std::int64_t mlp = h * X + X + X * h + h;
  const std::int64_t norms = 2 * (2 * h);
  const std::int64_t per_layer = attention + mlp + norms;
  std::int64_t total = embeddings + desc.stored_layers() * per_layer;

  if (desc.recursive && desc.adapter_bottleneck > 0) {
    const std::int64_t A = desc.adapter_bottleneck;
    total += desc.recursion_depth * 2 * (h * A + A + A * h + h);
  }
  if (desc.use_pooler) total += h * h + h;
  if (desc.with_mlm_head) {
    const std::int64_t D = desc.factorized() ? E : h;
    total += h * D + D + 2 * D + V;
  }
  return total;
}

}  // namespace clt
