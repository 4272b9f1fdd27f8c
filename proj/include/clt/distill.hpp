#pragma once

#include <string>
#include <vector>

#include "clt/model.hpp"

namespace clt {

// Uniform layer-to-layer rule g(l) = l * M / N (1-based); the teacher depth
// must be divisible by the student depth.
struct LayerMapping {
  std::int64_t student_depth = 0;
  std::int64_t teacher_depth = 0;

  void validate() const {
    if (student_depth < 1 || teacher_depth < 1) {
      throw ConfigError("layer mapping: depths must be positive, got student " +
                        std::to_string(student_depth) + ", teacher " +
                        std::to_string(teacher_depth));
    }
    if (teacher_depth % student_depth != 0) {
      throw ConfigError("layer mapping: teacher depth " + std::to_string(teacher_depth) +
                        " not divisible by student depth " + std::to_string(student_depth));
    }
  }
};

inline std::int64_t map_layer(const LayerMapping& mapping, std::int64_t l) {
  mapping.validate();
  if (l < 1 || l > mapping.student_depth) {
    throw ValueError("layer mapping: student layer " + std::to_string(l) + " out of range [1, " +
                     std::to_string(mapping.student_depth) + "]");
  }
  return l * (mapping.teacher_depth / mapping.student_depth);
}

enum class AttentionTarget { scores, probabilities };

struct DistillationConfig {
  // output-alignment weights; three entries for the output+hidden+mlm
  // objective, per-component weights for the layer-to-layer objective
  std::vector<double> lambdas;
  double temperature = 2.0;
  AttentionTarget align_attention_on = AttentionTarget::scores;
  // extra multipliers on the per-layer terms; the shared lambda weights a
  // layer, these isolate one alignment kind (e.g. attention only)
  double attention_weight = 1.0;
  double hidden_weight = 1.0;

  // output / hidden / mlm weights (2,1,1)/4 as documented defaults
  static DistillationConfig output_alignment_defaults() {
    DistillationConfig cfg;
    cfg.lambdas = {0.5, 0.25, 0.25};
    cfg.temperature = 2.0;
    return cfg;
  }

  // embedding + per-layer attention/hidden + output, all weighted 1
  static DistillationConfig layer_to_layer_defaults(std::int64_t student_depth) {
    DistillationConfig cfg;
    cfg.lambdas.assign(static_cast<std::size_t>(student_depth) + 2, 1.0);
    cfg.temperature = 1.0;
    return cfg;
  }

  double lambda_or(std::size_t i, double fallback) const {
    return i < lambdas.size() ? lambdas[i] : fallback;
  }
};

template <typename T>
struct LossBreakdown {
  Tensor<T> total;
  std::vector<std::pair<std::string, double>> components;

  double component(const std::string& name) const {
    for (const auto& [k, v] : components)
      if (k == name) return v;
    throw ValueError("loss breakdown: no component named '" + name + "'");
  }
};

// Learned width bridges used when student and teacher dimensions differ.
// They train with the student and are not part of the deployable model.
template <typename T>
struct Projections {
  Tensor<T> hidden;     // [h_s, h_t]; shared across aligned layers
  Tensor<T> embedding;  // [h_s, h_t] on embedding-block outputs

  std::vector<NamedParam<T>> params() {
    std::vector<NamedParam<T>> out;
    if (hidden.defined()) out.push_back({"projection.hidden", hidden});
    if (embedding.defined()) out.push_back({"projection.embedding", embedding});
    return out;
  }

  void zero_grad() {
    if (hidden.defined()) hidden.zero_grad();
    if (embedding.defined()) embedding.zero_grad();
  }
};

// Trainable width-bridging matrix; identity when square and
// identity_init is set, otherwise truncated normal.
template <typename T>
Tensor<T> make_projection(std::int64_t from_width, std::int64_t to_width, std::uint64_t rng_seed,
                          bool identity_init = false) {
  if (from_width <= 0 || to_width <= 0) {
    throw ConfigError("projection: widths must be positive");
  }
  if (identity_init) {
    if (from_width != to_width) {
      throw ConfigError("projection: identity init requires equal widths");
    }
    auto t = Tensor<T>::zeros({from_width, to_width}, true);
    for (std::int64_t i = 0; i < from_width; ++i) t.data()[i * to_width + i] = T(1);
    return t;
  }
  Rng rng(rng_seed);
  return Tensor<T>::truncated_normal({from_width, to_width}, rng, T(0.02), true);
}

template <typename T>
Projections<T> make_projections(const ArchitectureDescriptor& student,
                                const ArchitectureDescriptor& teacher, std::uint64_t rng_seed) {
  Projections<T> p;
  if (student.hidden != teacher.hidden) {
    p.hidden = make_projection<T>(student.hidden, teacher.hidden, mix64(rng_seed, 1));
    p.embedding = make_projection<T>(student.hidden, teacher.hidden, mix64(rng_seed, 2));
  }
  return p;
}

namespace detail {

// content mask over [B, L] rows
inline std::vector<std::uint8_t> content_rows(const ModelInput& input) {
  return std::vector<std::uint8_t>(input.attention_mask.begin(), input.attention_mask.end());
}

// elementwise mask over [B, H, L, L]: both query and key must be content
inline std::vector<std::uint8_t> attention_pair_mask(const ModelInput& input, std::int64_t heads) {
  const std::int64_t B = input.batch, L = input.len;
  std::vector<std::uint8_t> m(static_cast<std::size_t>(B * heads * L * L));
  std::size_t p = 0;
  for (std::int64_t b = 0; b < B; ++b) {
    const std::uint8_t* row = input.attention_mask.data() + b * L;
    for (std::int64_t head = 0; head < heads; ++head)
      for (std::int64_t q = 0; q < L; ++q)
        for (std::int64_t k = 0; k < L; ++k, ++p) m[p] = row[q] && row[k];
  }
  return m;
}

// elementwise mask over [B, L, h] from the content rows
inline std::vector<std::uint8_t> hidden_mask(const ModelInput& input, std::int64_t width) {
  const std::int64_t B = input.batch, L = input.len;
  std::vector<std::uint8_t> m(static_cast<std::size_t>(B * L * width));
  std::size_t p = 0;
  for (std::int64_t i = 0; i < B * L; ++i) {
    const std::uint8_t keep = input.attention_mask[static_cast<std::size_t>(i)];
    for (std::int64_t j = 0; j < width; ++j, ++p) m[p] = keep;
  }
  return m;
}

template <typename T>
Tensor<T> project_rows(const Tensor<T>& x, const Tensor<T>& projection) {
  if (!projection.defined()) return x;
  const std::int64_t rows = x.size() / x.shape().back();
  Shape out_shape = x.shape();
  out_shape.back() = projection.dim(1);
  return reshape(matmul(reshape(x, {rows, x.shape().back()}), projection), std::move(out_shape));
}

}  // namespace detail

// Output-distribution alignment: temperature KL against the frozen teacher
// plus per-content-token cosine alignment of the last hidden states plus the
// plain masked-LM term. Teacher outputs must carry no gradient history.
template <typename T>
LossBreakdown<T> output_alignment_loss(const ModelOutputs<T>& student_out,
                                       const ModelOutputs<T>& teacher_out, const MlmBatch& batch,
                                       const DistillationConfig& cfg) {
  if (!student_out.logits.defined() || !teacher_out.logits.defined()) {
    throw ValueError("output alignment: both models must provide logits (MLM head)");
  }
  if (student_out.logits.shape() != teacher_out.logits.shape()) {
    throw ShapeError("output alignment: logits mismatch " + shape_str(student_out.logits.shape()) +
                     " vs " + shape_str(teacher_out.logits.shape()));
  }
  if (student_out.last_hidden.shape() != teacher_out.last_hidden.shape()) {
    throw ShapeError("output alignment: hidden width mismatch " +
                     shape_str(student_out.last_hidden.shape()) + " vs " +
                     shape_str(teacher_out.last_hidden.shape()));
  }
  const std::int64_t B = batch.batch, L = batch.len;
  const std::int64_t V = student_out.logits.shape().back();
  const std::int64_t h = student_out.last_hidden.shape().back();
  ModelInput input = input_from(batch);
  auto rows = detail::content_rows(input);

  const double l_out = cfg.lambda_or(0, 0.5);
  const double l_align = cfg.lambda_or(1, 0.25);
  const double l_mlm = cfg.lambda_or(2, 0.25);

  Tensor<T> s_logits = reshape(student_out.logits, {B * L, V});
  Tensor<T> t_logits = reshape(teacher_out.logits, {B * L, V});
  Tensor<T> kl = soft_target_kl(s_logits, t_logits, static_cast<T>(cfg.temperature), rows);
  Tensor<T> cosine = cosine_embedding_loss(reshape(student_out.last_hidden, {B * L, h}),
                                           reshape(teacher_out.last_hidden, {B * L, h}), rows);
  Tensor<T> mlm = cross_entropy(s_logits, std::span<const std::int32_t>(batch.labels));

  LossBreakdown<T> out;
  out.total = add(add(scale(kl, static_cast<T>(l_out)), scale(cosine, static_cast<T>(l_align))),
                  scale(mlm, static_cast<T>(l_mlm)));
  out.components = {{"output", static_cast<double>(kl.item())},
                    {"align", static_cast<double>(cosine.item())},
                    {"mlm", static_cast<double>(mlm.item())},
                    {"total", static_cast<double>(out.total.item())}};
  return out;
}

// Layer-to-layer alignment: embedding MSE, per-layer attention and hidden
// MSE against the mapped teacher layers, and soft cross entropy on the
// output distributions. Only content positions contribute. Student layer l
// (1-based) aligns with teacher layer g(l) = l * M / N.
template <typename T>
LossBreakdown<T> layer_to_layer_loss(const ModelOutputs<T>& student_out,
                                     const ModelOutputs<T>& teacher_out, const MlmBatch& batch,
                                     const DistillationConfig& cfg, Projections<T>& projections,
                                     std::int64_t student_heads) {
  const std::int64_t N = static_cast<std::int64_t>(student_out.per_layer_hidden.size());
  const std::int64_t M = static_cast<std::int64_t>(teacher_out.per_layer_hidden.size());
  if (N == 0 || M == 0) {
    throw ValueError("layer alignment: per-layer introspection missing; run forward with hidden "
                     "and attention capture");
  }
  LayerMapping mapping{N, M};
  mapping.validate();
  const std::int64_t h_s = student_out.last_hidden.shape().back();
  const std::int64_t h_t = teacher_out.last_hidden.shape().back();
  if (h_s != h_t && !projections.hidden.defined()) {
    throw ConfigError("layer alignment: widths " + std::to_string(h_s) + " vs " +
                      std::to_string(h_t) + " need a projection");
  }
  const std::int64_t B = batch.batch, L = batch.len;
  ModelInput input = input_from(batch);
  auto rows = detail::content_rows(input);
  auto att_mask = detail::attention_pair_mask(input, student_heads);
  auto hid_mask = detail::hidden_mask(input, h_t);

  LossBreakdown<T> out;

  // embedding alignment
  const double l0 = cfg.lambda_or(0, 1.0);
  Tensor<T> s_emb = detail::project_rows(student_out.embedding_output, projections.embedding);
  Tensor<T> embed = masked_mse(s_emb, teacher_out.embedding_output, hid_mask);
  Tensor<T> total = scale(embed, static_cast<T>(l0));

  // per-layer attention and hidden alignment
  double att_total = 0.0, hid_total = 0.0;
  for (std::int64_t l = 1; l <= N; ++l) {
    const double ll = cfg.lambda_or(static_cast<std::size_t>(l), 1.0);
    const std::size_t si = static_cast<std::size_t>(l - 1);
    const std::size_t ti = static_cast<std::size_t>(map_layer(mapping, l) - 1);

    const auto& s_att_src = cfg.align_attention_on == AttentionTarget::scores
                                ? student_out.per_layer_attention_scores
                                : student_out.per_layer_attention;
    const auto& t_att_src = cfg.align_attention_on == AttentionTarget::scores
                                ? teacher_out.per_layer_attention_scores
                                : teacher_out.per_layer_attention;
    if (si >= s_att_src.size() || ti >= t_att_src.size()) {
      throw ValueError("layer alignment: attention maps missing");
    }
    Tensor<T> att = masked_mse(s_att_src[si], t_att_src[ti], att_mask);
    Tensor<T> hid = masked_mse(detail::project_rows(student_out.per_layer_hidden[si],
                                                    projections.hidden),
                               teacher_out.per_layer_hidden[ti], hid_mask);
    att_total += static_cast<double>(att.item());
    hid_total += static_cast<double>(hid.item());
    total = add(total, scale(add(scale(att, static_cast<T>(cfg.attention_weight)),
                                 scale(hid, static_cast<T>(cfg.hidden_weight))),
                             static_cast<T>(ll)));
  }

  // output-distribution alignment (soft cross entropy)
  const double l_out = cfg.lambda_or(static_cast<std::size_t>(N) + 1, 1.0);
  if (!student_out.logits.defined() || !teacher_out.logits.defined()) {
    throw ValueError("layer alignment: both models must provide logits (MLM head)");
  }
  const std::int64_t V = student_out.logits.shape().back();
  Tensor<T> soft = soft_target_ce(reshape(student_out.logits, {B * L, V}),
                                  reshape(teacher_out.logits, {B * L, V}),
                                  static_cast<T>(cfg.temperature), rows);
  total = add(total, scale(soft, static_cast<T>(l_out)));

  out.total = total;
  out.components = {{"embed", static_cast<double>(embed.item())},
                    {"att", att_total},
                    {"hid", hid_total},
                    {"out", static_cast<double>(soft.item())},
                    {"total", static_cast<double>(total.item())}};
  return out;
}

// Recursive-student variant: identical formula with the r-th recursion's
// hidden state and attention maps standing in for layer r.
template <typename T>
LossBreakdown<T> recursive_alignment_loss(const ModelOutputs<T>& student_out,
                                          const ModelOutputs<T>& teacher_out, const MlmBatch& batch,
                                          const DistillationConfig& cfg,
                                          Projections<T>& projections, std::int64_t student_heads,
                                          bool student_is_recursive) {
  if (!student_is_recursive) {
    throw ConfigError("recursive alignment: the student must be a recursive encoder");
  }
  return layer_to_layer_loss(student_out, teacher_out, batch, cfg, projections, student_heads);
}

}  // namespace clt
