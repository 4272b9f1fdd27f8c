#pragma once

#include <cstdint>
#include <string>

#include "clt/kvconfig.hpp"

namespace clt {

// Structural description of an encoder. A recursive encoder stores one
// transformer layer and applies it recursion_depth times, optionally with a
// distinct bottleneck adapter pair per recursion; embedding_size below
// hidden adds a learned projection between the two widths.
struct ArchitectureDescriptor {
  std::string name = "encoder";
  std::int64_t vocab_size = 0;
  std::int64_t max_positions = 512;
  std::int64_t hidden = 0;
  std::int64_t layers = 1;
  std::int64_t heads = 1;
  std::int64_t mlp_expansion = 4;
  std::int64_t embedding_size = 0;  // 0 = same as hidden
  bool recursive = false;
  std::int64_t recursion_depth = 1;
  std::int64_t adapter_bottleneck = 0;  // recursive only; 0 = no adapters
  double dropout = 0.0;
  bool use_segment = false;
  bool use_pooler = false;
  bool with_mlm_head = true;
  // profile-only entries may declare an externally known parameter count
  // instead of computing one from the structure
  std::int64_t declared_params = 0;

  std::int64_t embed_dim() const { return embedding_size > 0 ? embedding_size : hidden; }
  bool factorized() const { return embed_dim() < hidden; }
  std::int64_t effective_depth() const { return recursive ? recursion_depth : layers; }
  std::int64_t stored_layers() const { return recursive ? 1 : layers; }
  std::int64_t head_dim() const { return hidden / heads; }

  void validate() const;

  static ArchitectureDescriptor from_kv(const KvFile& kv);
  KvFile to_kv() const;
  static ArchitectureDescriptor load(const std::string& path);
  void save(const std::string& path) const;
};

// Closed-form parameter count for the model build_model allocates; equals
// the number of scalars in the built model exactly. Term by term:
//   embeddings: V*E word + P*E position + 2*E segment (if enabled)
//               + E*h + h projection (if E < h) + 2*h final norm
//   per stored layer: 4*(h*h + h) attention (q, k, v, out with biases)
//               + h*X + X + X*h + h for the MLP with X = h*mlp_expansion
//               + 2*(2*h) for the two norms
//   adapters (recursive with A > 0): R * 2 * (h*A + A + A*h + h)
//   pooler (if enabled): h*h + h
//   MLM head (if enabled): h*D + D transform + 2*D norm + V output bias,
//               with D = E when factorized else h; the decoder weight is
//               tied to the word embedding table and not counted again.
std::int64_t count_parameters(const ArchitectureDescriptor& desc);

}  // namespace clt
