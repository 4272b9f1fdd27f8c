#include "clt/datasets.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "clt/tokenizer.hpp"

namespace clt {

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == '\t') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

std::string entity_class(const std::string& tag) {
  return tag.size() > 2 ? tag.substr(2) : std::string();
}

}  // namespace

NerDataset load_conll(const std::string& path, const std::vector<std::string>& label_set) {
  std::ifstream in(path);
  if (!in) throw IoError("conll: cannot open " + path);
  std::set<std::string> known(label_set.begin(), label_set.end());

  NerDataset data;
  data.label_set = label_set;
  NerSentence current;
  std::string line;
  int lineno = 0;
  auto flush = [&] {
    if (!current.tokens.empty()) {
      data.sentences.push_back(std::move(current));
      current = {};
    }
  };
  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(line);
    if (line.empty()) {
      flush();
      continue;
    }
    auto cols = split_tabs(line);
    if (cols.size() != 2 || cols[0].empty()) {
      throw ValueError("conll: expected token<TAB>label at line " + std::to_string(lineno));
    }
    if (!known.count(cols[1])) {
      throw ValueError("conll: unknown label '" + cols[1] + "' at line " + std::to_string(lineno));
    }
    current.tokens.push_back(cols[0]);
    current.labels.push_back(cols[1]);
  }
  flush();

  // repair: I-X without a preceding B-X/I-X of the same class becomes B-X
  for (std::size_t s = 0; s < data.sentences.size(); ++s) {
    auto& labels = data.sentences[s].labels;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i].rfind("I-", 0) != 0) continue;
      const bool continues = i > 0 && labels[i - 1] != "O" &&
                             entity_class(labels[i - 1]) == entity_class(labels[i]);
      if (!continues) {
        std::string repaired = "B-" + entity_class(labels[i]);
        data.warnings.push_back("sentence " + std::to_string(s + 1) + ", token " +
                                std::to_string(i + 1) + ": dangling " + labels[i] +
                                " repaired to " + repaired);
        labels[i] = std::move(repaired);
      }
    }
  }
  return data;
}

std::vector<std::string> load_label_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("labels: cannot open " + path);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    line = strip_cr(line);
    if (!line.empty()) out.push_back(line);
  }
  if (out.empty()) throw ValueError("labels: " + path + " is empty");
  return out;
}

ConceptKind concept_kind_from_name(const std::string& name) {
  if (name == "problem") return ConceptKind::problem;
  if (name == "treatment") return ConceptKind::treatment;
  if (name == "test") return ConceptKind::test;
  throw ValueError("unknown concept kind '" + name + "'");
}

const char* concept_kind_tag(ConceptKind kind) {
  switch (kind) {
    case ConceptKind::problem: return "@problem$";
    case ConceptKind::treatment: return "@treatment$";
    case ConceptKind::test: return "@test$";
  }
  return "?";
}

std::string blue_re_preprocess(const ReExample& ex) {
  const ConceptSpan* a = &ex.first;
  const ConceptSpan* b = &ex.second;
  if (a->start > b->start) std::swap(a, b);
  if (a->end > b->start) {
    throw ValueError("re: concept spans overlap at bytes [" + std::to_string(a->start) + ", " +
                     std::to_string(a->end) + ") and [" + std::to_string(b->start) + ", " +
                     std::to_string(b->end) + ")");
  }
  if (b->end > ex.text.size() || a->start > a->end || b->start > b->end) {
    throw ValueError("re: concept span outside text bounds");
  }
  std::string out;
  out += ex.text.substr(0, a->start);
  out += concept_kind_tag(a->kind);
  out += ex.text.substr(a->end, b->start - a->end);
  out += concept_kind_tag(b->kind);
  out += ex.text.substr(b->end);
  return out;
}

ReDataset load_re_tsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("re: cannot open " + path);
  ReDataset data;
  std::set<std::string> labels;
  std::string line;
  int lineno = 0;
  bool header = true;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(line);
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    auto cols = split_tabs(line);
    if (cols.size() != 8) {
      throw ValueError("re: expected 8 tab-separated columns at line " + std::to_string(lineno));
    }
    ReExample ex;
    ex.text = cols[0];
    try {
      ex.first = {static_cast<std::size_t>(std::stoull(cols[1])),
                  static_cast<std::size_t>(std::stoull(cols[2])), concept_kind_from_name(cols[3])};
      ex.second = {static_cast<std::size_t>(std::stoull(cols[4])),
                   static_cast<std::size_t>(std::stoull(cols[5])), concept_kind_from_name(cols[6])};
    } catch (const std::invalid_argument&) {
      throw ValueError("re: malformed span offsets at line " + std::to_string(lineno));
    }
    ex.label = cols[7];
    labels.insert(ex.label);
    data.examples.push_back(std::move(ex));
  }
  data.label_set.assign(labels.begin(), labels.end());
  return data;
}

PairDataset load_pairs_tsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("pairs: cannot open " + path);
  PairDataset data;
  data.label_set = nli_labels();
  std::set<std::string> known(data.label_set.begin(), data.label_set.end());
  std::string line;
  int lineno = 0;
  bool header = true;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(line);
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    auto cols = split_tabs(line);
    if (cols.size() != 3) {
      throw ValueError("pairs: expected 3 tab-separated columns at line " + std::to_string(lineno));
    }
    if (!known.count(cols[2])) {
      throw ValueError("pairs: label '" + cols[2] + "' at line " + std::to_string(lineno) +
                       " is not one of entailment/contradiction/neutral");
    }
    data.examples.push_back({cols[0], cols[1], cols[2]});
  }
  return data;
}

ClsDataset load_cls_tsv(const std::string& path, std::vector<std::string> label_set) {
  std::ifstream in(path);
  if (!in) throw IoError("cls: cannot open " + path);
  ClsDataset data;
  std::set<std::string> known(label_set.begin(), label_set.end());
  std::set<std::string> seen;
  std::string line;
  int lineno = 0;
  bool header = true;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(line);
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    auto cols = split_tabs(line);
    if (cols.size() != 2) {
      throw ValueError("cls: expected 2 tab-separated columns at line " + std::to_string(lineno));
    }
    if (!label_set.empty() && !known.count(cols[1])) {
      throw ValueError("cls: label '" + cols[1] + "' at line " + std::to_string(lineno) +
                       " is not in the configured set");
    }
    seen.insert(cols[1]);
    data.examples.push_back({cols[0], cols[1]});
  }
  data.label_set = label_set.empty() ? std::vector<std::string>(seen.begin(), seen.end())
                                     : std::move(label_set);
  return data;
}

TaskKind task_kind_from_name(const std::string& name) {
  if (name == "ner") return TaskKind::ner;
  if (name == "re") return TaskKind::re;
  if (name == "nli") return TaskKind::nli;
  if (name == "cls") return TaskKind::cls;
  throw ConfigError("unknown task '" + name + "' (expected ner, re, nli, or cls)");
}

const char* task_kind_name(TaskKind kind) {
  switch (kind) {
    case TaskKind::ner: return "ner";
    case TaskKind::re: return "re";
    case TaskKind::nli: return "nli";
    case TaskKind::cls: return "cls";
  }
  return "?";
}

namespace {

std::int32_t label_index(const std::vector<std::string>& labels, const std::string& label) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == label) return static_cast<std::int32_t>(i);
  }
  throw ValueError("task: label '" + label + "' missing from the label set");
}

}  // namespace

TaskData task_from_ner(const NerDataset& data) {
  TaskData out;
  out.task = TaskKind::ner;
  out.head_kind = HeadKind::token_classification;
  out.labels = data.label_set;
  out.sentences = data.sentences;
  return out;
}

TaskData task_from_re(const ReDataset& data) {
  TaskData out;
  out.task = TaskKind::re;
  out.head_kind = HeadKind::sequence_classification;
  out.labels = data.label_set;
  for (const auto& ex : data.examples) {
    out.texts.push_back({blue_re_preprocess(ex), ""});
    out.label_ids.push_back(label_index(out.labels, ex.label));
  }
  return out;
}

TaskData task_from_pairs(const PairDataset& data) {
  TaskData out;
  out.task = TaskKind::nli;
  out.head_kind = HeadKind::sentence_pair_classification;
  out.labels = data.label_set;
  for (const auto& ex : data.examples) {
    out.texts.push_back({ex.sentence1, ex.sentence2});
    out.label_ids.push_back(label_index(out.labels, ex.label));
  }
  return out;
}

TaskData task_from_cls(const ClsDataset& data) {
  TaskData out;
  out.task = TaskKind::cls;
  out.head_kind = HeadKind::sequence_classification;
  out.labels = data.label_set;
  for (const auto& ex : data.examples) {
    out.texts.push_back({ex.text, ""});
    out.label_ids.push_back(label_index(out.labels, ex.label));
  }
  return out;
}

TaskBatch encode_task_batch(const TaskData& data, const std::vector<std::size_t>& indices,
                            const Vocabulary& vocab, int max_len, bool lowercase) {
  TaskBatch batch;
  batch.input.batch = static_cast<std::int64_t>(indices.size());
  batch.input.len = max_len;

  for (std::size_t idx : indices) {
    if (data.head_kind == HeadKind::token_classification) {
      const NerSentence& sent = data.sentences.at(idx);
      std::vector<std::string> pieces;
      std::vector<std::int64_t> first_positions(sent.tokens.size(), -1);
      std::vector<std::int32_t> piece_labels;
      for (std::size_t t = 0; t < sent.tokens.size(); ++t) {
        std::string word = sent.tokens[t];
        if (lowercase) {
          for (char& c : word) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        }
        auto sub = wordpiece_word(word, vocab);
        for (std::size_t p = 0; p < sub.size(); ++p) {
          const std::size_t encoded_pos = 1 + pieces.size();  // after [CLS]
          if (p == 0 && encoded_pos + 1 < static_cast<std::size_t>(max_len)) {
            first_positions[t] = static_cast<std::int64_t>(encoded_pos);
          }
          piece_labels.push_back(
              p == 0 ? label_index(data.labels, sent.labels[t]) : kIgnoreIndex);
          pieces.push_back(sub[p]);
        }
      }
      EncodedSequence seq = encode(pieces, nullptr, vocab, max_len);
      // labels aligned to the encoded layout: [CLS] pieces... [SEP] pad...
      std::vector<std::int32_t> row(static_cast<std::size_t>(max_len), kIgnoreIndex);
      const std::size_t kept = std::min(piece_labels.size(), static_cast<std::size_t>(max_len - 2));
      for (std::size_t p = 0; p < kept; ++p) row[p + 1] = piece_labels[p];
      for (std::size_t t = 0; t < first_positions.size(); ++t) {
        if (first_positions[t] >= max_len - 1) first_positions[t] = -1;
      }
      batch.input.ids.insert(batch.input.ids.end(), seq.ids.begin(), seq.ids.end());
      batch.input.attention_mask.insert(batch.input.attention_mask.end(),
                                        seq.attention_mask.begin(), seq.attention_mask.end());
      batch.input.segment_ids.insert(batch.input.segment_ids.end(), seq.segment_ids.begin(),
                                     seq.segment_ids.end());
      batch.labels.insert(batch.labels.end(), row.begin(), row.end());
      batch.token_positions.push_back(std::move(first_positions));
    } else {
      const auto& [text_a, text_b] = data.texts.at(idx);
      auto tokens_a = tokenize(text_a, vocab, lowercase);
      EncodedSequence seq;
      if (text_b.empty()) {
        seq = encode(tokens_a, nullptr, vocab, max_len);
      } else {
        auto tokens_b = tokenize(text_b, vocab, lowercase);
        seq = encode(tokens_a, &tokens_b, vocab, max_len);
      }
      batch.input.ids.insert(batch.input.ids.end(), seq.ids.begin(), seq.ids.end());
      batch.input.attention_mask.insert(batch.input.attention_mask.end(),
                                        seq.attention_mask.begin(), seq.attention_mask.end());
      batch.input.segment_ids.insert(batch.input.segment_ids.end(), seq.segment_ids.begin(),
                                     seq.segment_ids.end());
      batch.labels.push_back(data.label_ids.at(idx));
    }
  }
  return batch;
}

void write_predictions_tsv(const std::string& path, const std::vector<std::string>& labels) {
  std::ofstream out(path);
  if (!out) throw IoError("predictions: cannot write " + path);
  for (std::size_t i = 0; i < labels.size(); ++i) out << i << "\t" << labels[i] << "\n";
}

std::vector<std::string> load_predictions_tsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("predictions: cannot open " + path);
  std::vector<std::string> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(line);
    if (line.empty()) continue;
    auto cols = split_tabs(line);
    if (cols.size() != 2) {
      throw ValueError("predictions: expected index<TAB>label at line " + std::to_string(lineno));
    }
    out.push_back(cols[1]);
  }
  return out;
}

}  // namespace clt
