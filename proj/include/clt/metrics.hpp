#pragma once

#include <cstdint>
#include <string>
#include <tuple>
#include <vector>

#include "clt/common.hpp"

namespace clt {

// entity span over token positions, end exclusive
struct Span {
  std::int64_t start = 0;
  std::int64_t end = 0;
  std::string label;

  bool operator==(const Span& o) const = default;
  bool operator<(const Span& o) const {
    return std::tie(start, end, label) < std::tie(o.start, o.end, o.label);
  }
};

// maximal spans of a BIO sequence; a dangling I-X opens a new span, matching
// the loader's repair rule
std::vector<Span> spans_from_bio(const std::vector<std::string>& labels);

std::vector<std::string> bio_from_spans(const std::vector<Span>& spans, std::int64_t length);

struct PrfScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// micro-aggregated entity-level scores over a corpus; a predicted span
// counts only when (start, end, label) matches a gold span exactly
PrfScores exact_f1(const std::vector<std::vector<Span>>& gold,
                   const std::vector<std::vector<Span>>& pred);

enum class MetricScheme { accuracy, micro_f1, macro_f1 };

MetricScheme metric_scheme_from_name(const std::string& name);
const char* metric_scheme_name(MetricScheme scheme);

// accuracy = fraction equal; micro-F1 sums per-class TP/FP/FN over
// instances; macro-F1 averages per-class F1 over the classes present in
// gold or predictions (a class predicted but never gold scores 0)
double classification_score(const std::vector<std::string>& gold,
                            const std::vector<std::string>& pred, MetricScheme scheme);

// rows = gold, columns = predicted
std::vector<std::vector<std::int64_t>> confusion_matrix(const std::vector<std::string>& gold,
                                                        const std::vector<std::string>& pred,
                                                        const std::vector<std::string>& label_order);

std::string format_confusion_matrix(const std::vector<std::vector<std::int64_t>>& matrix,
                                    const std::vector<std::string>& label_order);

// indices where at least min_distinct distinct labels appear among the
// models' predictions; invariant under reordering of the model list
std::vector<std::size_t> mine_corner_cases(const std::vector<std::vector<std::string>>& predictions,
                                           int min_distinct = 2);

// flat report records with fixed keys {task, metric, value, n}
struct MetricsReport {
  struct Record {
    std::string task;
    std::string metric;
    double value = 0.0;
    std::int64_t n = 0;
  };
  std::vector<Record> records;

  void add(const std::string& task, const std::string& metric, double value, std::int64_t n) {
    records.push_back({task, metric, value, n});
  }
  double value_of(const std::string& metric) const;
  std::string serialize() const;
};

}  // namespace clt
