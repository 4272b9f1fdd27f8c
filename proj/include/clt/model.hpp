#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "clt/descriptor.hpp"
#include "clt/losses.hpp"
#include "clt/mlm.hpp"
#include "clt/ops.hpp"
#include "clt/tensor.hpp"

namespace clt {

template <typename T>
struct NamedParam {
  std::string name;
  Tensor<T> tensor;
};

// Token ids plus masks in row-major [B, L] layout.
struct ModelInput {
  std::int64_t batch = 0;
  std::int64_t len = 0;
  std::vector<std::int32_t> ids;
  std::vector<std::uint8_t> attention_mask;
  std::vector<std::int32_t> segment_ids;  // empty = all zeros
};

inline ModelInput input_from(const MlmBatch& b) {
  return ModelInput{b.batch, b.len, b.input_ids, b.attention_mask, b.segment_ids};
}

inline ModelInput input_from(const EncodedSequence& seq) {
  return ModelInput{1, static_cast<std::int64_t>(seq.ids.size()), seq.ids, seq.attention_mask,
                    seq.segment_ids};
}

struct ForwardOptions {
  bool training = false;
  Rng* dropout_rng = nullptr;
  bool want_logits = true;
  bool want_hidden = false;     // per-layer hidden states
  bool want_attention = false;  // per-layer attention scores and probabilities
};

template <typename T>
struct ModelOutputs {
  Tensor<T> logits;            // [B, L, V] when the model has an MLM head
  Tensor<T> last_hidden;       // [B, L, h]
  Tensor<T> embedding_output;  // [B, L, h]; embedding block output fed to layer 1
  Tensor<T> pooled;            // [B, h] when the model has a pooler
  std::vector<Tensor<T>> per_layer_hidden;
  std::vector<Tensor<T>> per_layer_attention;         // post-softmax [B, H, L, L]
  std::vector<Tensor<T>> per_layer_attention_scores;  // pre-softmax, pre-mask [B, H, L, L]
};

// BERT-style post-norm encoder. Parameters live in a stable named order;
// forward is pure given fixed parameters, so concurrent forwards on separate
// batches are safe. Parameter mutation (optimizers, weight copying) requires
// exclusive access.
template <typename T>
class EncoderModel {
 public:
  // weights ~ truncated normal(0, 0.02), biases 0, norm gains 1
  static EncoderModel build(const ArchitectureDescriptor& desc, std::uint64_t seed) {
    desc.validate();
    EncoderModel m;
    m.desc_ = desc;
    Rng rng(seed);
    const std::int64_t V = desc.vocab_size, P = desc.max_positions;
    const std::int64_t h = desc.hidden, E = desc.embed_dim();
    const std::int64_t X = h * desc.mlp_expansion;
    const T sd = T(0.02);

    auto weight = [&](const std::string& name, Shape shape) {
      m.add_param(name, Tensor<T>::truncated_normal(std::move(shape), rng, sd, true));
    };
    auto zeros = [&](const std::string& name, Shape shape) {
      m.add_param(name, Tensor<T>::zeros(std::move(shape), true));
    };
    auto ones = [&](const std::string& name, Shape shape) {
      m.add_param(name, Tensor<T>::ones(std::move(shape), true));
    };

    weight("embeddings.word", {V, E});
    weight("embeddings.position", {P, E});
    if (desc.use_segment) weight("embeddings.segment", {2, E});
    if (desc.factorized()) {
      weight("embeddings.projection.weight", {E, h});
      zeros("embeddings.projection.bias", {h});
    }
    ones("embeddings.norm.gain", {h});
    zeros("embeddings.norm.bias", {h});

    for (std::int64_t l = 0; l < desc.stored_layers(); ++l) {
      const std::string p = "layer" + std::to_string(l) + ".";
      for (const char* proj : {"query", "key", "value"}) {
        weight(p + "attention." + proj + ".weight", {h, h});
        zeros(p + "attention." + proj + ".bias", {h});
      }
      weight(p + "attention.output.weight", {h, h});
      zeros(p + "attention.output.bias", {h});
      ones(p + "attention.norm.gain", {h});
      zeros(p + "attention.norm.bias", {h});
      weight(p + "mlp.in.weight", {h, X});
      zeros(p + "mlp.in.bias", {X});
      weight(p + "mlp.out.weight", {X, h});
      zeros(p + "mlp.out.bias", {h});
      ones(p + "mlp.norm.gain", {h});
      zeros(p + "mlp.norm.bias", {h});
    }

    if (desc.recursive && desc.adapter_bottleneck > 0) {
      const std::int64_t A = desc.adapter_bottleneck;
      for (std::int64_t r = 0; r < desc.recursion_depth; ++r) {
        for (const char* which : {"attention_adapter", "mlp_adapter"}) {
          const std::string p = "recursion" + std::to_string(r) + "." + which + ".";
          weight(p + "down.weight", {h, A});
          zeros(p + "down.bias", {A});
          weight(p + "up.weight", {A, h});
          zeros(p + "up.bias", {h});
        }
      }
    }

    if (desc.use_pooler) {
      weight("pooler.weight", {h, h});
      zeros("pooler.bias", {h});
    }

    if (desc.with_mlm_head) {
      const std::int64_t D = desc.factorized() ? E : h;
      weight("mlm.transform.weight", {h, D});
      zeros("mlm.transform.bias", {D});
      ones("mlm.norm.gain", {D});
      zeros("mlm.norm.bias", {D});
      zeros("mlm.output_bias", {V});  // decoder weight tied to embeddings.word
    }
    return m;
  }

  const ArchitectureDescriptor& desc() const { return desc_; }
  std::vector<NamedParam<T>>& params() { return params_; }
  const std::vector<NamedParam<T>>& params() const { return params_; }

  bool has_param(const std::string& name) const { return index_.count(name) > 0; }

  Tensor<T>& param(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ValueError("model: no parameter named '" + name + "'");
    return params_[it->second].tensor;
  }

  const Tensor<T>& param(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ValueError("model: no parameter named '" + name + "'");
    return params_[it->second].tensor;
  }

  std::int64_t num_scalars() const {
    std::int64_t n = 0;
    for (const auto& p : params_) n += p.tensor.size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

  ModelOutputs<T> forward(const ModelInput& input, const ForwardOptions& opts = {}) const {
    const std::int64_t B = input.batch, L = input.len;
    if (B <= 0 || L <= 0 || static_cast<std::int64_t>(input.ids.size()) != B * L) {
      throw ShapeError("forward: ids buffer does not match batch " + std::to_string(B) + " x len " +
                       std::to_string(L));
    }
    if (static_cast<std::int64_t>(input.attention_mask.size()) != B * L) {
      throw ShapeError("forward: attention mask must be [B, L]");
    }
    if (L > desc_.max_positions) {
      throw ShapeError("forward: sequence length " + std::to_string(L) + " exceeds max_positions " +
                       std::to_string(desc_.max_positions));
    }
    if ((opts.training && desc_.dropout > 0.0) && opts.dropout_rng == nullptr) {
      throw ValueError("forward: training with dropout requires a dropout rng");
    }
    const std::int64_t h = desc_.hidden;
    const std::int64_t H = desc_.heads;
    const std::int64_t d = desc_.head_dim();
    const T drop = static_cast<T>(desc_.dropout);
    Rng dummy(0);
    Rng& drng = opts.dropout_rng ? *opts.dropout_rng : dummy;
    const bool train = opts.training;

    ModelOutputs<T> out;

    // embedding block
    Tensor<T> x = embedding_lookup(param("embeddings.word"), input.ids);
    {
      std::vector<std::int32_t> pos_ids(static_cast<std::size_t>(B * L));
      for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t i = 0; i < L; ++i)
          pos_ids[static_cast<std::size_t>(b * L + i)] = static_cast<std::int32_t>(i);
      x = add(x, embedding_lookup(param("embeddings.position"), pos_ids));
    }
    if (desc_.use_segment) {
      std::vector<std::int32_t> seg = input.segment_ids;
      if (seg.empty()) seg.assign(static_cast<std::size_t>(B * L), 0);
      x = add(x, embedding_lookup(param("embeddings.segment"), seg));
    }
    if (desc_.factorized()) {
      x = add_bias(matmul(x, param("embeddings.projection.weight")),
                   param("embeddings.projection.bias"));
    }
    x = layer_norm(x, param("embeddings.norm.gain"), param("embeddings.norm.bias"), T(1e-12));
    out.embedding_output = reshape(x, {B, L, h});
    x = dropout(x, drop, drng, train);

    const std::int64_t depth = desc_.effective_depth();
    for (std::int64_t step = 0; step < depth; ++step) {
      const std::int64_t stored = desc_.recursive ? 0 : step;
      const std::string p = "layer" + std::to_string(stored) + ".";

      // multi-head self-attention
      Tensor<T> q = add_bias(matmul(x, param(p + "attention.query.weight")),
                             param(p + "attention.query.bias"));
      Tensor<T> k = add_bias(matmul(x, param(p + "attention.key.weight")),
                             param(p + "attention.key.bias"));
      Tensor<T> v = add_bias(matmul(x, param(p + "attention.value.weight")),
                             param(p + "attention.value.bias"));
      Tensor<T> q4 = transpose(reshape(q, {B, L, H, d}), 1, 2);
      Tensor<T> k4 = transpose(reshape(k, {B, L, H, d}), 1, 2);
      Tensor<T> v4 = transpose(reshape(v, {B, L, H, d}), 1, 2);
      Tensor<T> scores = scale(bmm(q4, transpose(k4, 2, 3)),
                               T(1) / static_cast<T>(std::sqrt(static_cast<double>(d))));
      if (opts.want_attention) out.per_layer_attention_scores.push_back(scores);
      Tensor<T> masked = add_key_padding_mask(scores, input.attention_mask);
      Tensor<T> probs = softmax(masked, -1);
      if (opts.want_attention) out.per_layer_attention.push_back(probs);
      Tensor<T> ctx = bmm(dropout(probs, drop, drng, train), v4);
      Tensor<T> merged = reshape(transpose(ctx, 1, 2), {B * L, h});
      Tensor<T> attn_out = add_bias(matmul(merged, param(p + "attention.output.weight")),
                                    param(p + "attention.output.bias"));
      if (desc_.recursive && desc_.adapter_bottleneck > 0) {
        attn_out = adapter(attn_out, "recursion" + std::to_string(step) + ".attention_adapter.");
      }
      attn_out = dropout(attn_out, drop, drng, train);
      x = layer_norm(add(x, attn_out), param(p + "attention.norm.gain"),
                     param(p + "attention.norm.bias"), T(1e-12));

      // feed-forward
      Tensor<T> m = add_bias(matmul(x, param(p + "mlp.in.weight")), param(p + "mlp.in.bias"));
      m = gelu(m);
      m = add_bias(matmul(m, param(p + "mlp.out.weight")), param(p + "mlp.out.bias"));
      if (desc_.recursive && desc_.adapter_bottleneck > 0) {
        m = adapter(m, "recursion" + std::to_string(step) + ".mlp_adapter.");
      }
      m = dropout(m, drop, drng, train);
      x = layer_norm(add(x, m), param(p + "mlp.norm.gain"), param(p + "mlp.norm.bias"), T(1e-12));

      if (opts.want_hidden) out.per_layer_hidden.push_back(reshape(x, {B, L, h}));
    }

    out.last_hidden = reshape(x, {B, L, h});

    if (desc_.use_pooler) {
      Tensor<T> first = take_first_token(out.last_hidden);
      out.pooled = tanh_act(add_bias(matmul(first, param("pooler.weight")), param("pooler.bias")));
    }

    if (desc_.with_mlm_head && opts.want_logits) {
      Tensor<T> t = add_bias(matmul(x, param("mlm.transform.weight")), param("mlm.transform.bias"));
      t = gelu(t);
      t = layer_norm(t, param("mlm.norm.gain"), param("mlm.norm.bias"), T(1e-12));
      Tensor<T> logits = add_bias(matmul_nt(t, param("embeddings.word")), param("mlm.output_bias"));
      out.logits = reshape(logits, {B, L, desc_.vocab_size});
    }
    return out;
  }

 private:
  Tensor<T> adapter(const Tensor<T>& z, const std::string& prefix) const {
    Tensor<T> a = add_bias(matmul(z, param(prefix + "down.weight")), param(prefix + "down.bias"));
    a = gelu(a);
    a = add_bias(matmul(a, param(prefix + "up.weight")), param(prefix + "up.bias"));
    return add(z, a);
  }

  void add_param(const std::string& name, Tensor<T> t) {
    index_[name] = params_.size();
    params_.push_back({name, std::move(t)});
  }

  ArchitectureDescriptor desc_;
  std::vector<NamedParam<T>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Copies teacher embeddings, the listed teacher layers, and the MLM head
// into a student of the same width. Indices are strictly increasing
// positions into the teacher's layer stack, one per student layer.
template <typename T>
void init_student_from_teacher(EncoderModel<T>& student, const EncoderModel<T>& teacher,
                               const std::vector<std::int64_t>& layer_indices) {
  const auto& sd = student.desc();
  const auto& td = teacher.desc();
  if (sd.recursive || td.recursive) {
    throw ConfigError("init_student_from_teacher: layer copying requires non-recursive encoders");
  }
  if (sd.hidden != td.hidden) {
    throw ConfigError("init_student_from_teacher: hidden width mismatch, student " +
                      std::to_string(sd.hidden) + " vs teacher " + std::to_string(td.hidden));
  }
  if (sd.embed_dim() != td.embed_dim() || sd.vocab_size != td.vocab_size) {
    throw ConfigError("init_student_from_teacher: embedding table mismatch");
  }
  if (static_cast<std::int64_t>(layer_indices.size()) != sd.layers) {
    throw ConfigError("init_student_from_teacher: need exactly " + std::to_string(sd.layers) +
                      " layer indices, got " + std::to_string(layer_indices.size()));
  }
  for (std::size_t i = 0; i < layer_indices.size(); ++i) {
    if (layer_indices[i] < 0 || layer_indices[i] >= td.layers) {
      throw ConfigError("init_student_from_teacher: layer index " +
                        std::to_string(layer_indices[i]) + " outside teacher depth " +
                        std::to_string(td.layers));
    }
    if (i > 0 && layer_indices[i] <= layer_indices[i - 1]) {
      throw ConfigError("init_student_from_teacher: layer indices must be strictly increasing");
    }
  }

  auto copy_param = [&](const std::string& dst, const std::string& src) {
    if (!student.has_param(dst) || !teacher.has_param(src)) return;
    Tensor<T>& d = student.param(dst);
    const Tensor<T>& s = teacher.param(src);
    if (d.shape() != s.shape()) {
      throw ConfigError("init_student_from_teacher: dimension mismatch for " + dst + ": " +
                        shape_str(d.shape()) + " vs " + shape_str(s.shape()));
    }
    std::copy(s.data().begin(), s.data().end(), d.data().begin());
  };

  for (const char* name :
       {"embeddings.word", "embeddings.position", "embeddings.segment",
        "embeddings.projection.weight", "embeddings.projection.bias", "embeddings.norm.gain",
        "embeddings.norm.bias", "mlm.transform.weight", "mlm.transform.bias", "mlm.norm.gain",
        "mlm.norm.bias", "mlm.output_bias"}) {
    copy_param(name, name);
  }
  static const char* kLayerParams[] = {
      "attention.query.weight", "attention.query.bias", "attention.key.weight",
      "attention.key.bias",     "attention.value.weight", "attention.value.bias",
      "attention.output.weight", "attention.output.bias", "attention.norm.gain",
      "attention.norm.bias",    "mlp.in.weight",          "mlp.in.bias",
      "mlp.out.weight",         "mlp.out.bias",           "mlp.norm.gain",
      "mlp.norm.bias"};
  for (std::size_t i = 0; i < layer_indices.size(); ++i) {
    const std::string sp = "layer" + std::to_string(i) + ".";
    const std::string tp = "layer" + std::to_string(layer_indices[i]) + ".";
    for (const char* leaf : kLayerParams) copy_param(sp + leaf, tp + leaf);
  }
}

// ---------------------------------------------------------------------------
// task heads
// ---------------------------------------------------------------------------

enum class HeadKind {
  token_classification,
  sequence_classification,
  sentence_pair_classification,
};

inline const char* head_kind_name(HeadKind k) {
  switch (k) {
    case HeadKind::token_classification: return "token_classification";
    case HeadKind::sequence_classification: return "sequence_classification";
    case HeadKind::sentence_pair_classification: return "sentence_pair_classification";
  }
  return "?";
}

inline HeadKind head_kind_from_name(const std::string& s) {
  if (s == "token_classification") return HeadKind::token_classification;
  if (s == "sequence_classification") return HeadKind::sequence_classification;
  if (s == "sentence_pair_classification") return HeadKind::sentence_pair_classification;
  throw ConfigError("unknown head kind '" + s + "'");
}

// Linear classifier over encoder states; sequence heads read the first-token
// hidden state. Weights start at zero so low fine-tuning learning rates move
// the decision boundary instead of fighting a random init.
template <typename T>
struct TaskHead {
  HeadKind kind = HeadKind::sequence_classification;
  std::int64_t num_labels = 0;
  double dropout = 0.1;
  Tensor<T> weight;  // [h, num_labels]
  Tensor<T> bias;    // [num_labels]

  static TaskHead create(HeadKind kind, std::int64_t num_labels, std::int64_t hidden,
                         double dropout = 0.1) {
    if (num_labels < 1) throw ConfigError("task head: num_labels must be >= 1");
    TaskHead head;
    head.kind = kind;
    head.num_labels = num_labels;
    head.dropout = dropout;
    head.weight = Tensor<T>::zeros({hidden, num_labels}, true);
    head.bias = Tensor<T>::zeros({num_labels}, true);
    return head;
  }

  std::vector<NamedParam<T>> params() {
    return {{"head.weight", weight}, {"head.bias", bias}};
  }

  void zero_grad() {
    weight.zero_grad();
    bias.zero_grad();
  }
};

// Token heads emit [B, L, num_labels]; sequence heads emit [B, num_labels].
template <typename T>
Tensor<T> forward_task_head(const EncoderModel<T>& model, const TaskHead<T>& head,
                            const ModelInput& input, bool training = false,
                            Rng* dropout_rng = nullptr) {
  ForwardOptions opts;
  opts.training = training;
  opts.dropout_rng = dropout_rng;
  opts.want_logits = false;
  ModelOutputs<T> out = model.forward(input, opts);
  const std::int64_t B = input.batch, L = input.len, h = model.desc().hidden;
  Rng dummy(0);
  Rng& drng = dropout_rng ? *dropout_rng : dummy;
  if (head.kind == HeadKind::token_classification) {
    Tensor<T> flat = reshape(out.last_hidden, {B * L, h});
    flat = dropout(flat, static_cast<T>(head.dropout), drng, training);
    Tensor<T> logits = add_bias(matmul(flat, head.weight), head.bias);
    return reshape(logits, {B, L, head.num_labels});
  }
  Tensor<T> first = take_first_token(out.last_hidden);
  first = dropout(first, static_cast<T>(head.dropout), drng, training);
  return add_bias(matmul(first, head.weight), head.bias);
}

}  // namespace clt
