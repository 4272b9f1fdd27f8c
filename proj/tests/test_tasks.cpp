#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <map>
#include <set>

#include "clt/datasets.hpp"
#include "clt/metrics.hpp"
#include "clt/rng.hpp"

using namespace clt;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
  std::string path = std::string("/tmp/") + name;
  std::ofstream out(path);
  out << content;
  return path;
}

std::vector<std::string> random_bio(Rng& rng, int len, const std::vector<std::string>& classes) {
  std::vector<std::string> out;
  bool inside = false;
  std::string cls;
  for (int i = 0; i < len; ++i) {
    double u = rng.uniform();
    if (!inside) {
      if (u < 0.35) {
        cls = classes[static_cast<std::size_t>(rng.uniform_int(
            static_cast<std::int64_t>(classes.size())))];
        out.push_back("B-" + cls);
        inside = true;
      } else {
        out.push_back("O");
      }
    } else {
      if (u < 0.4) {
        out.push_back("I-" + cls);
      } else if (u < 0.6) {
        cls = classes[static_cast<std::size_t>(rng.uniform_int(
            static_cast<std::int64_t>(classes.size())))];
        out.push_back("B-" + cls);
      } else {
        out.push_back("O");
        inside = false;
      }
    }
  }
  return out;
}

// exhaustive scan: every maximal [i, j) window whose tags form one entity
std::set<Span> brute_force_spans(const std::vector<std::string>& labels) {
  std::set<Span> out;
  const int n = static_cast<int>(labels.size());
  for (int i = 0; i < n; ++i) {
    if (labels[static_cast<std::size_t>(i)].rfind("B-", 0) != 0) continue;
    std::string cls = labels[static_cast<std::size_t>(i)].substr(2);
    int j = i + 1;
    while (j < n && labels[static_cast<std::size_t>(j)] == "I-" + cls) ++j;
    out.insert(Span{i, j, cls});
  }
  return out;
}

}  // namespace

TEST_CASE("spans_from_bio basics") {
  auto s1 = spans_from_bio({"B-PR", "I-PR", "O"});
  REQUIRE(s1.size() == 1);
  CHECK(s1[0] == Span{0, 2, "PR"});

  auto s2 = spans_from_bio({"B-PR", "B-PR"});
  REQUIRE(s2.size() == 2);
  CHECK(s2[0] == Span{0, 1, "PR"});
  CHECK(s2[1] == Span{1, 2, "PR"});
}

TEST_CASE("spans_from_bio equals the exhaustive scan on random sequences") {
  Rng rng(5);
  const std::vector<std::string> classes{"PR", "TR", "TE"};
  for (int trial = 0; trial < 300; ++trial) {
    auto labels = random_bio(rng, 20, classes);
    auto got = spans_from_bio(labels);
    std::set<Span> got_set(got.begin(), got.end());
    CHECK(got_set == brute_force_spans(labels));
    CHECK(got.size() == got_set.size());
  }
}

TEST_CASE("bio round trip") {
  Rng rng(7);
  const std::vector<std::string> classes{"A", "B"};
  for (int trial = 0; trial < 200; ++trial) {
    auto labels = random_bio(rng, 15, classes);
    auto spans = spans_from_bio(labels);
    auto rebuilt = bio_from_spans(spans, 15);
    auto spans2 = spans_from_bio(rebuilt);
    CHECK(spans == spans2);
  }
}

TEST_CASE("exact_f1 basics") {
  std::vector<std::vector<Span>> gold{{{0, 2, "PR"}}};
  auto perfect = exact_f1(gold, gold);
  CHECK(perfect.precision == 1.0);
  CHECK(perfect.recall == 1.0);
  CHECK(perfect.f1 == 1.0);

  std::vector<std::vector<Span>> off{{{0, 1, "PR"}}};
  auto miss = exact_f1(gold, off);
  CHECK(miss.precision == 0.0);
  CHECK(miss.recall == 0.0);
  CHECK(miss.f1 == 0.0);
}

TEST_CASE("exact_f1 equals a brute-force set oracle and swaps p/r under exchange") {
  Rng rng(11);
  const std::vector<std::string> classes{"PR", "TE"};
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::vector<Span>> gold, pred;
    std::int64_t tp = 0, ng = 0, np = 0;
    for (int s = 0; s < 4; ++s) {
      auto g = brute_force_spans(random_bio(rng, 12, classes));
      auto p = brute_force_spans(random_bio(rng, 12, classes));
      for (const auto& sp : p)
        if (g.count(sp)) ++tp;
      ng += static_cast<std::int64_t>(g.size());
      np += static_cast<std::int64_t>(p.size());
      gold.emplace_back(g.begin(), g.end());
      pred.emplace_back(p.begin(), p.end());
    }
    auto scores = exact_f1(gold, pred);
    const double p_expect = np ? static_cast<double>(tp) / static_cast<double>(np) : 0.0;
    const double r_expect = ng ? static_cast<double>(tp) / static_cast<double>(ng) : 0.0;
    CHECK(scores.precision == doctest::Approx(p_expect));
    CHECK(scores.recall == doctest::Approx(r_expect));

    auto swapped = exact_f1(pred, gold);
    CHECK(swapped.precision == doctest::Approx(scores.recall));
    CHECK(swapped.recall == doctest::Approx(scores.precision));
    CHECK(swapped.f1 == doctest::Approx(scores.f1));
  }
}

TEST_CASE("classification metrics basics") {
  std::vector<std::string> gold{"a", "b", "c", "a"};
  CHECK(classification_score(gold, gold, MetricScheme::accuracy) == 1.0);
  CHECK(classification_score(gold, gold, MetricScheme::micro_f1) == 1.0);
  CHECK(classification_score(gold, gold, MetricScheme::macro_f1) == 1.0);

  // single-class gold, perfect predictions
  std::vector<std::string> ones{"x", "x", "x"};
  CHECK(classification_score(ones, ones, MetricScheme::macro_f1) == 1.0);
}

TEST_CASE("macro f1 matches a hand-computed 3-class example") {
  // 6 items, 2 errors
  std::vector<std::string> gold{"a", "a", "b", "b", "c", "c"};
  std::vector<std::string> pred{"a", "b", "b", "b", "c", "a"};
  // class a: tp=1 fp=1 fn=1 -> p=r=0.5, f1=0.5
  // class b: tp=2 fp=1 fn=0 -> p=2/3, r=1, f1=0.8
  // class c: tp=1 fp=0 fn=1 -> p=1, r=0.5, f1=2/3
  const double expected = (0.5 + 0.8 + 2.0 / 3.0) / 3.0;
  CHECK(classification_score(gold, pred, MetricScheme::macro_f1) == doctest::Approx(expected));
}

TEST_CASE("accuracy equals micro f1 on random single-label data") {
  Rng rng(13);
  const std::vector<std::string> classes{"x", "y", "z"};
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::string> gold, pred;
    for (int i = 0; i < 30; ++i) {
      gold.push_back(classes[static_cast<std::size_t>(rng.uniform_int(3))]);
      pred.push_back(classes[static_cast<std::size_t>(rng.uniform_int(3))]);
    }
    CHECK(classification_score(gold, pred, MetricScheme::accuracy) ==
          doctest::Approx(classification_score(gold, pred, MetricScheme::micro_f1)));
  }
}

TEST_CASE("confusion matrix rows are gold, columns predicted") {
  std::vector<std::string> order{"a", "b"};
  auto perfect = confusion_matrix({"a", "b", "a"}, {"a", "b", "a"}, order);
  CHECK(perfect[0][0] == 2);
  CHECK(perfect[1][1] == 1);
  CHECK(perfect[0][1] == 0);

  auto collapsed = confusion_matrix({"a", "b", "b"}, {"a", "a", "a"}, order);
  CHECK(collapsed[0][0] == 1);
  CHECK(collapsed[1][0] == 2);
  CHECK(collapsed[0][1] + collapsed[1][1] == 0);

  CHECK_THROWS_AS(confusion_matrix({"q"}, {"a"}, order), ValueError);
}

TEST_CASE("confusion matrix row sums equal gold class counts on random data") {
  Rng rng(17);
  const std::vector<std::string> order{"a", "b", "c"};
  std::vector<std::string> gold, pred;
  std::map<std::string, std::int64_t> counts;
  for (int i = 0; i < 500; ++i) {
    gold.push_back(order[static_cast<std::size_t>(rng.uniform_int(3))]);
    pred.push_back(order[static_cast<std::size_t>(rng.uniform_int(3))]);
    counts[gold.back()]++;
  }
  auto m = confusion_matrix(gold, pred, order);
  for (std::size_t r = 0; r < order.size(); ++r) {
    std::int64_t row = 0;
    for (auto v : m[r]) row += v;
    CHECK(row == counts[order[r]]);
  }
}

TEST_CASE("corner case mining basics and oracle") {
  std::vector<std::vector<std::string>> unanimous{{"A"}, {"A"}, {"A"}};
  CHECK(mine_corner_cases(unanimous).empty());

  std::vector<std::vector<std::string>> split{{"A"}, {"A"}, {"B"}};
  CHECK(mine_corner_cases(split) == std::vector<std::size_t>{0});

  Rng rng(23);
  const std::vector<std::string> labels{"x", "y", "z"};
  std::vector<std::vector<std::string>> preds(3, std::vector<std::string>(1000));
  for (int m = 0; m < 3; ++m)
    for (int i = 0; i < 1000; ++i)
      preds[static_cast<std::size_t>(m)][static_cast<std::size_t>(i)] =
          labels[static_cast<std::size_t>(rng.uniform_int(3))];
  auto got = mine_corner_cases(preds);
  std::vector<std::size_t> expected;
  for (std::size_t i = 0; i < 1000; ++i) {
    std::set<std::string> distinct{preds[0][i], preds[1][i], preds[2][i]};
    if (distinct.size() >= 2) expected.push_back(i);
  }
  CHECK(got == expected);

  // invariance under model reordering
  std::vector<std::vector<std::string>> reordered{preds[2], preds[0], preds[1]};
  CHECK(mine_corner_cases(reordered) == got);

  CHECK_THROWS_AS(mine_corner_cases({preds[0]}), ValueError);
  std::vector<std::vector<std::string>> ragged{preds[0], {"x"}};
  CHECK_THROWS_AS(mine_corner_cases(ragged), ValueError);
}

TEST_CASE("conll loader parses, validates, and repairs") {
  const std::vector<std::string> labels{"O", "B-PR", "I-PR", "B-TR", "I-TR"};
  auto ok = write_temp("toy.conll",
                       "the\tO\npatient\tB-PR\nfell\tO\n\nx\tB-TR\ny\tI-TR\n\n");
  auto data = load_conll(ok, labels);
  REQUIRE(data.sentences.size() == 2);
  CHECK(data.sentences[0].tokens.size() == 3);
  CHECK(data.sentences[1].tokens.size() == 2);
  CHECK(data.warnings.empty());

  auto dangling = write_temp("dangling.conll", "a\tO\nb\tI-PR\nc\tI-TR\n\n");
  auto repaired = load_conll(dangling, labels);
  CHECK(repaired.sentences[0].labels[1] == "B-PR");
  CHECK(repaired.sentences[0].labels[2] == "B-TR");
  CHECK(repaired.warnings.size() == 2);

  auto bad = write_temp("bad.conll", "a\tO\nb\tB-XX\n\n");
  CHECK_THROWS_WITH_AS(load_conll(bad, labels), doctest::Contains("line 2"), ValueError);
}

TEST_CASE("blue re preprocessing reproduces the reference rows verbatim") {
  auto span_of = [](const std::string& text, const std::string& piece, ConceptKind kind) {
    auto at = text.find(piece);
    REQUIRE(at != std::string::npos);
    return ConceptSpan{at, at + piece.size(), kind};
  };

  {
    std::string raw =
        "was discharged to home to be followed medically for coronary artery disease following "
        "two failed bypass graft procedure";
    ReExample ex{raw, span_of(raw, "coronary artery disease", ConceptKind::treatment),
                 span_of(raw, "two failed bypass graft procedure", ConceptKind::problem), "TrWP"};
    CHECK(blue_re_preprocess(ex) ==
          "was discharged to home to be followed medically for @treatment$ following @problem$");
  }
  {
    std::string raw = "She has an elevated cholesterol controlled with Zocor";
    ReExample ex{raw, span_of(raw, "elevated cholesterol", ConceptKind::problem),
                 span_of(raw, "Zocor", ConceptKind::treatment), "TrIP"};
    CHECK(blue_re_preprocess(ex) == "She has an @problem$ controlled with @treatment$");
  }
  {
    std::string raw = "Bactrim could be a cause of these abnormalities";
    ReExample ex{raw, span_of(raw, "Bactrim", ConceptKind::treatment),
                 span_of(raw, "these abnormalities", ConceptKind::problem), "TrCP"};
    CHECK(blue_re_preprocess(ex) == "@treatment$ could be a cause of @problem$");
  }
  {
    std::string raw = "A lung biopsy was performed , revealing chorio carcinoma";
    ReExample ex{raw, span_of(raw, "lung biopsy", ConceptKind::test),
                 span_of(raw, "chorio carcinoma", ConceptKind::problem), "TeRP"};
    CHECK(blue_re_preprocess(ex) == "A @test$ was performed , revealing @problem$");
  }
}

TEST_CASE("blue re handles spans given in either order and whole-text spans") {
  std::string raw = "aspirin helps headache";
  ReExample reversed{raw,
                     {14, 22, ConceptKind::problem},
                     {0, 7, ConceptKind::treatment},
                     "TrIP"};
  CHECK(blue_re_preprocess(reversed) == "@treatment$ helps @problem$");

  ReExample whole{"aspirin headache",
                  {0, 7, ConceptKind::treatment},
                  {8, 16, ConceptKind::problem},
                  "TrAP"};
  CHECK(blue_re_preprocess(whole) == "@treatment$ @problem$");

  ReExample overlap{"abcdef", {0, 4, ConceptKind::problem}, {2, 6, ConceptKind::test}, "PIP"};
  CHECK_THROWS_WITH_AS(blue_re_preprocess(overlap), doctest::Contains("overlap"), ValueError);
}

TEST_CASE("pair and cls loaders validate labels") {
  auto pairs = write_temp("pairs.tsv",
                          "sentence1\tsentence2\tlabel\n"
                          "p sat\th sat\tentailment\n"
                          "p one\th two\tcontradiction\n");
  auto pd = load_pairs_tsv(pairs);
  CHECK(pd.examples.size() == 2);
  CHECK(pd.label_set.size() == 3);

  auto badpairs = write_temp("badpairs.tsv", "sentence1\tsentence2\tlabel\na\tb\tmaybe\n");
  CHECK_THROWS_AS(load_pairs_tsv(badpairs), ValueError);

  auto cls = write_temp("cls.tsv", "text\tlabel\nlung ca\tMalignancy\ndvt\tNo Malignancy\n");
  auto cd = load_cls_tsv(cls);
  CHECK(cd.examples.size() == 2);
  CHECK(cd.label_set == std::vector<std::string>{"Malignancy", "No Malignancy"});
}

TEST_CASE("ner batch encoding puts labels on first subwords only") {
  auto vocab = Vocabulary::from_tokens({"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "head",
                                        "##ache", "aspirin", "helps"});
  NerDataset nd;
  nd.label_set = {"O", "B-PR", "I-PR"};
  nd.sentences.push_back({{"aspirin", "helps", "headache"}, {"O", "O", "B-PR"}});
  auto task = task_from_ner(nd);
  auto batch = encode_task_batch(task, {0}, vocab, 10);

  // layout: [CLS] aspirin helps head ##ache [SEP] pad...
  CHECK(batch.input.ids[0] == vocab.cls_id());
  CHECK(batch.input.ids[1] == vocab.find("aspirin"));
  CHECK(batch.input.ids[3] == vocab.find("head"));
  CHECK(batch.input.ids[4] == vocab.find("##ache"));
  CHECK(batch.labels[0] == kIgnoreIndex);       // [CLS]
  CHECK(batch.labels[1] == 0);                  // O
  CHECK(batch.labels[3] == 1);                  // B-PR on first subword
  CHECK(batch.labels[4] == kIgnoreIndex);       // continuation
  CHECK(batch.labels[5] == kIgnoreIndex);       // [SEP]
  CHECK(batch.token_positions[0] == std::vector<std::int64_t>{1, 2, 3});
}

TEST_CASE("predictions tsv round trip") {
  std::vector<std::string> labels{"a", "b", "a"};
  auto path = std::string("/tmp/preds.tsv");
  write_predictions_tsv(path, labels);
  CHECK(load_predictions_tsv(path) == labels);
}
