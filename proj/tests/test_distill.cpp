#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "clt/distill.hpp"
#include "clt/grad_check.hpp"
#include "clt/optim.hpp"

using namespace clt;

namespace {

ArchitectureDescriptor toy_desc(std::int64_t vocab, std::int64_t hidden, std::int64_t layers,
                                std::int64_t heads, std::int64_t expansion) {
  ArchitectureDescriptor d;
  d.vocab_size = vocab;
  d.max_positions = 16;
  d.hidden = hidden;
  d.layers = layers;
  d.heads = heads;
  d.mlp_expansion = expansion;
  return d;
}

MlmBatch toy_batch(std::int64_t B, std::int64_t L, std::int64_t vocab, std::uint64_t seed,
                   std::int64_t pad_from = -1) {
  MlmBatch b;
  b.batch = B;
  b.len = L;
  Rng rng(seed);
  for (std::int64_t i = 0; i < B * L; ++i) {
    b.input_ids.push_back(static_cast<std::int32_t>(rng.uniform_int(vocab)));
    const std::int64_t col = i % L;
    b.attention_mask.push_back(pad_from >= 0 && col >= pad_from ? 0 : 1);
    const bool labeled = b.attention_mask.back() && rng.uniform() < 0.3;
    b.labels.push_back(labeled ? static_cast<std::int32_t>(rng.uniform_int(vocab)) : kIgnoreIndex);
  }
  if (b.labels[0] == kIgnoreIndex) b.labels[0] = 1;
  return b;
}

template <typename T>
ModelOutputs<T> run_forward(const EncoderModel<T>& m, const MlmBatch& batch, bool introspect) {
  ForwardOptions opts;
  opts.want_hidden = introspect;
  opts.want_attention = introspect;
  return m.forward(input_from(batch), opts);
}

}  // namespace

TEST_CASE("layer mapping uniform rule") {
  CHECK(map_layer({4, 12}, 1) == 3);
  CHECK(map_layer({4, 12}, 2) == 6);
  CHECK(map_layer({4, 12}, 3) == 9);
  CHECK(map_layer({4, 12}, 4) == 12);
  CHECK(map_layer({6, 12}, 1) == 2);
  CHECK(map_layer({6, 12}, 5) == 10);
  for (int l = 1; l <= 5; ++l) CHECK(map_layer({5, 5}, l) == l);
  CHECK_THROWS_AS(map_layer({5, 12}, 1), ConfigError);
  CHECK_THROWS_AS(map_layer({4, 12}, 5), ValueError);
  CHECK_THROWS_AS(map_layer({4, 12}, 0), ValueError);
}

TEST_CASE("output alignment at the mimicry fixed point") {
  auto d = toy_desc(24, 8, 2, 2, 2);
  auto teacher = EncoderModel<double>::build(d, 5);
  auto student = EncoderModel<double>::build(d, 6);
  init_student_from_teacher(student, teacher, {0, 1});
  auto batch = toy_batch(2, 6, 24, 7, 5);

  Tape<double> tape;
  ModelOutputs<double> t_out;
  {
    TapePause<double> frozen;
    t_out = run_forward(teacher, batch, false);
  }
  auto s_out = run_forward(student, batch, false);
  auto cfg = DistillationConfig::output_alignment_defaults();
  auto loss = output_alignment_loss(s_out, t_out, batch, cfg);

  CHECK(loss.component("output") == 0.0);
  CHECK(loss.component("align") == 0.0);
  CHECK(loss.component("mlm") > 0.0);
  CHECK(loss.total.item() ==
        doctest::Approx(0.25 * loss.component("mlm")).epsilon(1e-12));
}

TEST_CASE("output alignment KL term matches a hand-evaluated case") {
  // two content tokens, V = 3, temperature 1, weights (1, 0, 0)
  MlmBatch batch;
  batch.batch = 1;
  batch.len = 2;
  batch.input_ids = {0, 1};
  batch.labels = {kIgnoreIndex, kIgnoreIndex};
  batch.attention_mask = {1, 1};

  ModelOutputs<double> s_out, t_out;
  s_out.logits = Tensor<double>::from({1, 2, 3}, {0.2, -0.1, 0.4, 1.0, 0.0, -1.0});
  t_out.logits = Tensor<double>::from({1, 2, 3}, {0.5, 0.5, -0.3, 0.0, 0.2, 0.0});
  s_out.last_hidden = Tensor<double>::from({1, 2, 2}, {1, 0, 0, 1});
  t_out.last_hidden = s_out.last_hidden.detached();

  DistillationConfig cfg;
  cfg.lambdas = {1.0, 0.0, 0.0};
  cfg.temperature = 1.0;
  auto loss = output_alignment_loss(s_out, t_out, batch, cfg);

  auto row_kl = [](std::array<double, 3> t, std::array<double, 3> s) {
    double zt = 0, zs = 0;
    for (double v : t) zt += std::exp(v);
    for (double v : s) zs += std::exp(v);
    double acc = 0;
    for (int j = 0; j < 3; ++j) {
      double pt = std::exp(t[static_cast<std::size_t>(j)]) / zt;
      double ps = std::exp(s[static_cast<std::size_t>(j)]) / zs;
      acc += pt * (std::log(pt) - std::log(ps));
    }
    return acc;
  };
  double expected =
      0.5 * (row_kl({0.5, 0.5, -0.3}, {0.2, -0.1, 0.4}) + row_kl({0.0, 0.2, 0.0}, {1.0, 0.0, -1.0}));
  CHECK(loss.total.item() == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("output alignment with only the MLM weight reduces to plain MLM loss") {
  auto d = toy_desc(24, 8, 2, 2, 2);
  auto teacher = EncoderModel<double>::build(d, 5);
  auto student = EncoderModel<double>::build(d, 61);
  auto batch = toy_batch(2, 6, 24, 9);

  auto t_out = run_forward(teacher, batch, false);
  auto s_out = run_forward(student, batch, false);
  DistillationConfig cfg;
  cfg.lambdas = {0.0, 0.0, 1.0};
  auto loss = output_alignment_loss(s_out, t_out, batch, cfg);

  auto flat = reshape(s_out.logits, {12, 24});
  auto plain = cross_entropy(flat, std::span<const std::int32_t>(batch.labels));
  CHECK(loss.total.item() == doctest::Approx(plain.item()).epsilon(1e-12));
}

TEST_CASE("layer-to-layer alignment at the mimicry fixed point") {
  auto d = toy_desc(24, 8, 2, 2, 2);
  auto teacher = EncoderModel<double>::build(d, 15);
  auto student = EncoderModel<double>::build(d, 16);
  init_student_from_teacher(student, teacher, {0, 1});
  auto batch = toy_batch(2, 5, 24, 17, 4);

  auto t_out = run_forward(teacher, batch, true);
  auto s_out = run_forward(student, batch, true);
  auto cfg = DistillationConfig::layer_to_layer_defaults(2);
  Projections<double> none;
  auto loss = layer_to_layer_loss(s_out, t_out, batch, cfg, none, d.heads);

  CHECK(loss.component("embed") == 0.0);
  CHECK(loss.component("att") == 0.0);
  CHECK(loss.component("hid") == 0.0);
  CHECK(loss.component("out") > 0.0);  // soft CE equals teacher entropy, not 0
}

TEST_CASE("layer-to-layer alignment equals hand-computed masked MSE sums") {
  // single layer, hand-set activations, no projections
  MlmBatch batch;
  batch.batch = 1;
  batch.len = 2;
  batch.input_ids = {0, 1};
  batch.labels = {kIgnoreIndex, kIgnoreIndex};
  batch.attention_mask = {1, 1};

  ModelOutputs<double> s, t;
  s.embedding_output = Tensor<double>::from({1, 2, 2}, {1, 2, 3, 4});
  t.embedding_output = Tensor<double>::from({1, 2, 2}, {1, 1, 3, 5});
  s.per_layer_hidden = {Tensor<double>::from({1, 2, 2}, {0, 0, 1, 1})};
  t.per_layer_hidden = {Tensor<double>::from({1, 2, 2}, {1, 0, 1, 3})};
  s.per_layer_attention_scores = {Tensor<double>::from({1, 1, 2, 2}, {0.5, 0.5, 0.25, 0.75})};
  t.per_layer_attention_scores = {Tensor<double>::from({1, 1, 2, 2}, {1.0, 0.0, 0.25, 0.75})};
  s.per_layer_attention = s.per_layer_attention_scores;
  t.per_layer_attention = t.per_layer_attention_scores;
  s.last_hidden = s.per_layer_hidden[0];
  t.last_hidden = t.per_layer_hidden[0];
  s.logits = Tensor<double>::from({1, 2, 2}, {0, 0, 0, 0});
  t.logits = Tensor<double>::from({1, 2, 2}, {0, 0, 0, 0});

  auto cfg = DistillationConfig::layer_to_layer_defaults(1);
  Projections<double> none;
  auto loss = layer_to_layer_loss(s, t, batch, cfg, none, 1);

  CHECK(loss.component("embed") == doctest::Approx(2.0 / 4.0));          // two squared diffs of 1
  CHECK(loss.component("att") == doctest::Approx((0.25 + 0.25) / 4.0));  // two diffs of 0.5
  CHECK(loss.component("hid") == doctest::Approx((1.0 + 4.0) / 4.0));
  CHECK(loss.component("out") == doctest::Approx(std::log(2.0)));  // uniform vs uniform
}

TEST_CASE("attention-only alignment leaves non-attention tensors without gradient") {
  auto td = toy_desc(20, 8, 4, 2, 2);
  auto sd = toy_desc(20, 8, 2, 2, 2);
  auto teacher = EncoderModel<double>::build(td, 25);
  auto student = EncoderModel<double>::build(sd, 26);
  auto batch = toy_batch(1, 5, 20, 27);

  student.zero_grad();
  Tape<double> tape;
  ModelOutputs<double> t_out;
  {
    TapePause<double> frozen;
    t_out = run_forward(teacher, batch, true);
  }
  auto s_out = run_forward(student, batch, true);
  DistillationConfig cfg = DistillationConfig::layer_to_layer_defaults(2);
  cfg.lambdas = {0.0, 1.0, 1.0, 0.0};  // per-layer terms only
  cfg.hidden_weight = 0.0;             // attention scores only
  Projections<double> none;

  auto loss = layer_to_layer_loss(s_out, t_out, batch, cfg, none, sd.heads);
  backward(loss.total);

  auto grad_norm = [&](const std::string& name) {
    double acc = 0;
    if (!student.param(name).has_grad()) return 0.0;
    for (double v : student.param(name).grad()) acc += v * v;
    return acc;
  };
  // the last layer's scores see only its query/key projections; its value,
  // feed-forward, and the MLM head sit after every aligned tensor
  CHECK(grad_norm("layer1.attention.value.weight") == 0.0);
  CHECK(grad_norm("layer1.attention.output.weight") == 0.0);
  CHECK(grad_norm("layer1.mlp.in.weight") == 0.0);
  CHECK(grad_norm("layer1.mlp.out.weight") == 0.0);
  CHECK(grad_norm("mlm.transform.weight") == 0.0);
  CHECK(grad_norm("mlm.output_bias") == 0.0);
  CHECK(grad_norm("layer1.attention.query.weight") > 0.0);
  CHECK(grad_norm("layer1.attention.key.weight") > 0.0);
  // earlier layers feed the aligned scores through every path
  CHECK(grad_norm("layer0.attention.value.weight") > 0.0);
  CHECK(grad_norm("embeddings.word") > 0.0);
}

TEST_CASE("teacher parameters receive zero gradient under all objectives") {
  auto td = toy_desc(20, 8, 4, 2, 2);
  auto sd = toy_desc(20, 8, 2, 2, 2);
  auto teacher = EncoderModel<double>::build(td, 35);
  auto student = EncoderModel<double>::build(sd, 36);
  auto batch = toy_batch(2, 5, 20, 37);

  teacher.zero_grad();
  student.zero_grad();
  {
    Tape<double> tape;
    ModelOutputs<double> t_out;
    {
      TapePause<double> frozen;
      t_out = run_forward(teacher, batch, true);
    }
    auto s_out = run_forward(student, batch, true);
    auto cfg = DistillationConfig::layer_to_layer_defaults(2);
    Projections<double> none;
    auto loss = layer_to_layer_loss(s_out, t_out, batch, cfg, none, sd.heads);
    backward(loss.total);
  }
  for (auto& p : teacher.params()) {
    if (!p.tensor.has_grad()) continue;
    for (double v : p.tensor.grad()) CHECK(v == 0.0);
  }
}

TEST_CASE("scaling all lambdas scales the loss and keeps the gradient direction") {
  auto d = toy_desc(20, 8, 2, 2, 2);
  auto teacher = EncoderModel<double>::build(d, 45);
  auto student = EncoderModel<double>::build(d, 46);
  auto batch = toy_batch(2, 5, 20, 47);

  auto run = [&](double scale_all) {
    student.zero_grad();
    Tape<double> tape;
    ModelOutputs<double> t_out;
    {
      TapePause<double> frozen;
      t_out = run_forward(teacher, batch, false);
    }
    auto s_out = run_forward(student, batch, false);
    DistillationConfig cfg;
    cfg.lambdas = {0.5 * scale_all, 0.25 * scale_all, 0.25 * scale_all};
    auto loss = output_alignment_loss(s_out, t_out, batch, cfg);
    backward(loss.total);
    std::vector<double> flat;
    for (auto& p : student.params())
      flat.insert(flat.end(), p.tensor.grad().begin(), p.tensor.grad().end());
    return std::make_pair(loss.total.item(), flat);
  };

  auto [l1, g1] = run(1.0);
  auto [l3, g3] = run(3.0);
  CHECK(l3 == doctest::Approx(3.0 * l1).epsilon(1e-9));
  double dot = 0, n1 = 0, n3 = 0;
  for (std::size_t i = 0; i < g1.size(); ++i) {
    dot += g1[i] * g3[i];
    n1 += g1[i] * g1[i];
    n3 += g3[i] * g3[i];
  }
  CHECK(dot / std::sqrt(n1 * n3) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("KL component decreases toward the high-temperature limit on tested cases") {
  auto d = toy_desc(20, 8, 1, 2, 2);
  auto teacher = EncoderModel<double>::build(d, 55);
  auto student = EncoderModel<double>::build(d, 56);
  auto batch = toy_batch(1, 4, 20, 57);
  auto t_out = run_forward(teacher, batch, false);
  auto s_out = run_forward(student, batch, false);

  auto rows = std::vector<std::uint8_t>(batch.attention_mask.begin(), batch.attention_mask.end());
  auto s_flat = reshape(s_out.logits, {4, 20});
  auto t_flat = reshape(t_out.logits, {4, 20});
  // the raw divergence of the tempered distributions (T^2 compensation
  // divided back out) falls toward 0 as both sides flatten to uniform
  double prev = 1e300;
  for (double T : {1.0, 2.0, 4.0, 8.0, 16.0}) {
    double v = soft_target_kl(s_flat, t_flat, T, rows).item() / (T * T);
    CHECK(v < prev);
    prev = v;
  }
}

TEST_CASE("projections bridge unequal widths and receive gradient") {
  auto td = toy_desc(20, 12, 4, 2, 2);
  auto sd = toy_desc(20, 8, 2, 2, 2);
  auto teacher = EncoderModel<double>::build(td, 65);
  auto student = EncoderModel<double>::build(sd, 66);
  auto projections = make_projections<double>(sd, td, 67);
  REQUIRE(projections.hidden.defined());
  REQUIRE(projections.embedding.defined());
  auto batch = toy_batch(1, 5, 20, 68);

  projections.zero_grad();
  student.zero_grad();
  {
    Tape<double> tape;
    ModelOutputs<double> t_out;
    {
      TapePause<double> frozen;
      t_out = run_forward(teacher, batch, true);
    }
    auto s_out = run_forward(student, batch, true);
    auto cfg = DistillationConfig::layer_to_layer_defaults(2);
    auto loss = layer_to_layer_loss(s_out, t_out, batch, cfg, projections, sd.heads);
    backward(loss.total);
  }
  double pn = 0;
  for (double v : projections.hidden.grad()) pn += v * v;
  CHECK(pn > 0.0);

  // missing projection with unequal widths is an error
  Projections<double> none;
  auto t_out2 = run_forward(teacher, batch, true);
  auto s_out2 = run_forward(student, batch, true);
  auto cfg2 = DistillationConfig::layer_to_layer_defaults(2);
  CHECK_THROWS_AS(layer_to_layer_loss(s_out2, t_out2, batch, cfg2, none, sd.heads), ConfigError);
}

TEST_CASE("identity projection reduces the hidden term to a direct comparison") {
  auto proj = make_projection<double>(4, 4, 0, true);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) CHECK(proj.data()[i * 4 + j] == (i == j ? 1.0 : 0.0));
  CHECK_THROWS_AS(make_projection<double>(3, 4, 0, true), ConfigError);
}

TEST_CASE("recursive alignment uses mapped teacher layers") {
  ArchitectureDescriptor sd = toy_desc(20, 8, 1, 2, 2);
  sd.recursive = true;
  sd.recursion_depth = 2;
  sd.adapter_bottleneck = 4;
  auto td = toy_desc(20, 8, 4, 2, 2);
  auto student = EncoderModel<double>::build(sd, 75);
  auto teacher = EncoderModel<double>::build(td, 76);
  auto batch = toy_batch(1, 5, 20, 77);

  auto t_out = run_forward(teacher, batch, true);
  auto s_out = run_forward(student, batch, true);
  REQUIRE(s_out.per_layer_hidden.size() == 2);
  REQUIRE(t_out.per_layer_hidden.size() == 4);

  auto cfg = DistillationConfig::layer_to_layer_defaults(2);
  Projections<double> none;
  auto loss = recursive_alignment_loss(s_out, t_out, batch, cfg, none, sd.heads, true);
  CHECK(loss.total.item() > 0.0);

  // mapping consequence: recursion r aligns teacher layer 2r; replacing
  // teacher layer 1 or 3 tensors must not change the loss
  auto t_mod = t_out;
  t_mod.per_layer_hidden[0] = Tensor<double>::zeros(t_out.per_layer_hidden[0].shape());
  t_mod.per_layer_hidden[2] = Tensor<double>::zeros(t_out.per_layer_hidden[2].shape());
  t_mod.per_layer_attention_scores[0] =
      Tensor<double>::zeros(t_out.per_layer_attention_scores[0].shape());
  t_mod.per_layer_attention_scores[2] =
      Tensor<double>::zeros(t_out.per_layer_attention_scores[2].shape());
  auto loss2 = recursive_alignment_loss(s_out, t_mod, batch, cfg, none, sd.heads, true);
  CHECK(loss2.total.item() == doctest::Approx(loss.total.item()).epsilon(1e-12));

  CHECK_THROWS_AS(recursive_alignment_loss(s_out, t_out, batch, cfg, none, sd.heads, false),
                  ConfigError);
}

TEST_CASE("grad check: output-alignment objective end to end") {
  auto d = toy_desc(16, 6, 2, 2, 2);
  auto teacher = EncoderModel<double>::build(d, 85);
  auto student = EncoderModel<double>::build(d, 86);
  auto batch = toy_batch(1, 4, 16, 87);

  ModelOutputs<double> t_out = run_forward(teacher, batch, false);
  auto cfg = DistillationConfig::output_alignment_defaults();
  std::vector<Tensor<double>> leaves;
  for (auto& p : student.params()) leaves.push_back(p.tensor);
  auto fn = [&] {
    auto s_out = run_forward(student, batch, false);
    return output_alignment_loss(s_out, t_out, batch, cfg).total;
  };
  CHECK(grad_check_adaptive(fn, leaves) < 1e-5);
}

TEST_CASE("grad check: layer-to-layer objective end to end") {
  auto td = toy_desc(16, 8, 2, 2, 2);
  auto sd = toy_desc(16, 6, 1, 2, 2);
  auto teacher = EncoderModel<double>::build(td, 95);
  auto student = EncoderModel<double>::build(sd, 96);
  auto projections = make_projections<double>(sd, td, 97);
  auto batch = toy_batch(1, 4, 16, 98);

  ModelOutputs<double> t_out = run_forward(teacher, batch, true);
  auto cfg = DistillationConfig::layer_to_layer_defaults(1);
  std::vector<Tensor<double>> leaves;
  for (auto& p : student.params()) leaves.push_back(p.tensor);
  for (auto& p : projections.params()) leaves.push_back(p.tensor);
  auto fn = [&] {
    auto s_out = run_forward(student, batch, true);
    return layer_to_layer_loss(s_out, t_out, batch, cfg, projections, sd.heads).total;
  };
  CHECK(grad_check_adaptive(fn, leaves) < 1e-5);
}

TEST_CASE("recursive objective halves its loss over 200 steps on a fixed batch") {
  auto td = toy_desc(20, 16, 4, 2, 2);
  ArchitectureDescriptor rd = toy_desc(20, 16, 1, 2, 2);
  rd.recursive = true;
  rd.recursion_depth = 2;
  rd.adapter_bottleneck = 8;
  auto teacher = EncoderModel<double>::build(td, 201);
  auto student = EncoderModel<double>::build(rd, 202);
  auto batch = toy_batch(4, 8, 20, 203);

  Projections<double> projections;  // equal widths
  std::vector<NamedParam<double>> params = student.params();
  AdamWConfig ocfg;
  ocfg.weight_decay = 1e-4;
  AdamW<double> optimizer(params, ocfg);
  auto cfg = DistillationConfig::layer_to_layer_defaults(2);

  std::vector<double> losses;
  std::vector<double> att_components;
  for (int step = 0; step < 200; ++step) {
    optimizer.zero_grad();
    Tape<double> tape;
    ModelOutputs<double> t_out;
    {
      TapePause<double> frozen;
      t_out = run_forward(teacher, batch, true);
    }
    auto s_out = run_forward(student, batch, true);
    auto loss = recursive_alignment_loss(s_out, t_out, batch, cfg, projections, rd.heads, true);
    backward(loss.total);
    optimizer.step(5e-4);
    losses.push_back(loss.total.item());
    att_components.push_back(loss.component("att"));
  }
  CHECK(losses.back() < 0.5 * losses.front());

  // the per-layer attention error also falls in smoothed average
  auto window_mean = [&](const std::vector<double>& v, std::size_t begin) {
    double acc = 0;
    for (std::size_t i = begin; i < begin + 20; ++i) acc += v[i];
    return acc / 20.0;
  };
  CHECK(window_mean(att_components, 180) < window_mean(att_components, 0));
}
