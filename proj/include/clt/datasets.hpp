#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "clt/encode.hpp"
#include "clt/model.hpp"
#include "clt/vocab.hpp"

namespace clt {

// ---------------------------------------------------------------------------
// token classification (BIO-tagged sentences)
// ---------------------------------------------------------------------------

struct NerSentence {
  std::vector<std::string> tokens;
  std::vector<std::string> labels;
};

struct NerDataset {
  std::vector<NerSentence> sentences;
  std::vector<std::string> label_set;   // full BIO inventory, including "O"
  std::vector<std::string> warnings;    // repair notes from loading
};

// token<TAB>label lines with blank-line sentence separators; a dangling I-X
// is repaired to B-X with a warning; labels outside the set are an error
// naming the line
NerDataset load_conll(const std::string& path, const std::vector<std::string>& label_set);

// one label per line
std::vector<std::string> load_label_file(const std::string& path);

// ---------------------------------------------------------------------------
// relation extraction as tagged-sentence classification
// ---------------------------------------------------------------------------

enum class ConceptKind { problem, treatment, test };

ConceptKind concept_kind_from_name(const std::string& name);
const char* concept_kind_tag(ConceptKind kind);  // "@problem$" etc.

struct ConceptSpan {
  std::size_t start = 0;  // byte offsets, end exclusive
  std::size_t end = 0;
  ConceptKind kind = ConceptKind::problem;
};

struct ReExample {
  std::string text;
  ConceptSpan first;
  ConceptSpan second;
  std::string label;
};

// replaces each concept span with its kind tag, leftmost first; spans must
// not overlap and must lie within the text
std::string blue_re_preprocess(const ReExample& ex);

struct ReDataset {
  std::vector<ReExample> examples;
  std::vector<std::string> label_set;
};

// TSV columns: text, start1, end1, kind1, start2, end2, kind2, label
ReDataset load_re_tsv(const std::string& path);

// ---------------------------------------------------------------------------
// sentence pairs and single-text classification
// ---------------------------------------------------------------------------

struct PairExample {
  std::string sentence1;
  std::string sentence2;
  std::string label;
};

inline const std::vector<std::string>& nli_labels() {
  static const std::vector<std::string> kLabels{"entailment", "contradiction", "neutral"};
  return kLabels;
}

struct PairDataset {
  std::vector<PairExample> examples;
  std::vector<std::string> label_set;
};

// TSV with header: sentence1, sentence2, label; labels fixed to the
// three-way inference set
PairDataset load_pairs_tsv(const std::string& path);

struct ClsExample {
  std::string text;
  std::string label;
};

struct ClsDataset {
  std::vector<ClsExample> examples;
  std::vector<std::string> label_set;
};

// TSV with header: text, label. The label set is the given inventory, or
// the sorted distinct labels of the file when none is supplied.
ClsDataset load_cls_tsv(const std::string& path, std::vector<std::string> label_set = {});

// ---------------------------------------------------------------------------
// unified task view
// ---------------------------------------------------------------------------

enum class TaskKind { ner, re, nli, cls };

TaskKind task_kind_from_name(const std::string& name);
const char* task_kind_name(TaskKind kind);

struct TaskData {
  TaskKind task = TaskKind::cls;
  HeadKind head_kind = HeadKind::sequence_classification;
  std::vector<std::string> labels;

  // token-level view
  std::vector<NerSentence> sentences;

  // sequence-level view; second text empty for single-sentence tasks
  std::vector<std::array<std::string, 2>> texts;
  std::vector<std::int32_t> label_ids;

  std::size_t size() const {
    return head_kind == HeadKind::token_classification ? sentences.size() : texts.size();
  }
};

TaskData task_from_ner(const NerDataset& data);
TaskData task_from_re(const ReDataset& data);
TaskData task_from_pairs(const PairDataset& data);
TaskData task_from_cls(const ClsDataset& data);

// ---------------------------------------------------------------------------
// batching
// ---------------------------------------------------------------------------

struct TaskBatch {
  ModelInput input;
  // [B] for sequence tasks; [B, L] with ignore-index on continuations,
  // specials, and padding for token tasks
  std::vector<std::int32_t> labels;
  // per example, the encoded position of each original token's first
  // subword (-1 when truncated away); used to read token predictions back
  std::vector<std::vector<std::int64_t>> token_positions;
};

// Subword policy: the first subword carries the token's label, continuations
// are ignore-index.
TaskBatch encode_task_batch(const TaskData& data, const std::vector<std::size_t>& indices,
                            const Vocabulary& vocab, int max_len, bool lowercase = false);

// predictions written as: index<TAB>label
void write_predictions_tsv(const std::string& path, const std::vector<std::string>& labels);
std::vector<std::string> load_predictions_tsv(const std::string& path);

}  // namespace clt
