#include "clt/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

namespace clt {

std::vector<Span> spans_from_bio(const std::vector<std::string>& labels) {
  std::vector<Span> spans;
  Span current;
  bool open = false;
  auto close = [&](std::int64_t end) {
    if (open) {
      current.end = end;
      spans.push_back(current);
      open = false;
    }
  };
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(labels.size()); ++i) {
    const std::string& tag = labels[static_cast<std::size_t>(i)];
    if (tag == "O" || tag.empty()) {
      close(i);
    } else if (tag.size() > 2 && tag[1] == '-' && (tag[0] == 'B' || tag[0] == 'I')) {
      const std::string cls = tag.substr(2);
      if (tag[0] == 'B' || !open || current.label != cls) {
        close(i);
        current = Span{i, i, cls};
        open = true;
      }
      // I- continuing the open span of the same class extends it
    } else {
      throw ValueError("spans_from_bio: malformed tag '" + tag + "' at position " +
                       std::to_string(i));
    }
  }
  close(static_cast<std::int64_t>(labels.size()));
  return spans;
}

std::vector<std::string> bio_from_spans(const std::vector<Span>& spans, std::int64_t length) {
  std::vector<std::string> labels(static_cast<std::size_t>(length), "O");
  for (const Span& s : spans) {
    if (s.start < 0 || s.end > length || s.start >= s.end) {
      throw ValueError("bio_from_spans: span [" + std::to_string(s.start) + ", " +
                       std::to_string(s.end) + ") outside sequence of length " +
                       std::to_string(length));
    }
    labels[static_cast<std::size_t>(s.start)] = "B-" + s.label;
    for (std::int64_t i = s.start + 1; i < s.end; ++i)
      labels[static_cast<std::size_t>(i)] = "I-" + s.label;
  }
  return labels;
}

PrfScores exact_f1(const std::vector<std::vector<Span>>& gold,
                   const std::vector<std::vector<Span>>& pred) {
  if (gold.size() != pred.size()) {
    throw ValueError("exact_f1: " + std::to_string(gold.size()) + " gold sentences vs " +
                     std::to_string(pred.size()) + " predicted");
  }
  std::int64_t tp = 0, fp = 0, fn = 0;
  for (std::size_t s = 0; s < gold.size(); ++s) {
    std::set<Span> g(gold[s].begin(), gold[s].end());
    std::set<Span> p(pred[s].begin(), pred[s].end());
    for (const Span& sp : p) {
      if (g.count(sp))
        ++tp;
      else
        ++fp;
    }
    for (const Span& sp : g) {
      if (!p.count(sp)) ++fn;
    }
  }
  PrfScores out;
  out.precision = (tp + fp) ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  out.recall = (tp + fn) ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  out.f1 = (out.precision + out.recall > 0.0)
               ? 2.0 * out.precision * out.recall / (out.precision + out.recall)
               : 0.0;
  return out;
}

MetricScheme metric_scheme_from_name(const std::string& name) {
  if (name == "accuracy") return MetricScheme::accuracy;
  if (name == "micro_f1") return MetricScheme::micro_f1;
  if (name == "macro_f1") return MetricScheme::macro_f1;
  throw ConfigError("unknown metric scheme '" + name + "'");
}

const char* metric_scheme_name(MetricScheme scheme) {
  switch (scheme) {
    case MetricScheme::accuracy: return "accuracy";
    case MetricScheme::micro_f1: return "micro_f1";
    case MetricScheme::macro_f1: return "macro_f1";
  }
  return "?";
}

double classification_score(const std::vector<std::string>& gold,
                            const std::vector<std::string>& pred, MetricScheme scheme) {
  if (gold.size() != pred.size()) {
    throw ValueError("classification_score: " + std::to_string(gold.size()) + " gold labels vs " +
                     std::to_string(pred.size()) + " predicted");
  }
  if (gold.empty()) throw ValueError("classification_score: empty inputs");
  if (scheme == MetricScheme::accuracy) {
    std::int64_t correct = 0;
    for (std::size_t i = 0; i < gold.size(); ++i)
      if (gold[i] == pred[i]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(gold.size());
  }

  std::map<std::string, std::array<std::int64_t, 3>> counts;  // tp, fp, fn per class
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i] == pred[i]) {
      counts[gold[i]][0]++;
    } else {
      counts[pred[i]][1]++;
      counts[gold[i]][2]++;
    }
  }
  if (scheme == MetricScheme::micro_f1) {
    std::int64_t tp = 0, fp = 0, fn = 0;
    for (const auto& [cls, c] : counts) {
      tp += c[0];
      fp += c[1];
      fn += c[2];
    }
    const double p = (tp + fp) ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    const double r = (tp + fn) ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    return (p + r > 0.0) ? 2.0 * p * r / (p + r) : 0.0;
  }
  // macro: unweighted mean over classes present in gold or predictions
  double acc = 0.0;
  for (const auto& [cls, c] : counts) {
    const double p = (c[0] + c[1]) ? static_cast<double>(c[0]) / static_cast<double>(c[0] + c[1]) : 0.0;
    const double r = (c[0] + c[2]) ? static_cast<double>(c[0]) / static_cast<double>(c[0] + c[2]) : 0.0;
    acc += (p + r > 0.0) ? 2.0 * p * r / (p + r) : 0.0;
  }
  return acc / static_cast<double>(counts.size());
}

std::vector<std::vector<std::int64_t>> confusion_matrix(
    const std::vector<std::string>& gold, const std::vector<std::string>& pred,
    const std::vector<std::string>& label_order) {
  if (gold.size() != pred.size()) {
    throw ValueError("confusion_matrix: label list lengths differ");
  }
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < label_order.size(); ++i) index[label_order[i]] = i;
  std::vector<std::vector<std::int64_t>> m(label_order.size(),
                                           std::vector<std::int64_t>(label_order.size(), 0));
  for (std::size_t i = 0; i < gold.size(); ++i) {
    auto g = index.find(gold[i]);
    auto p = index.find(pred[i]);
    if (g == index.end()) throw ValueError("confusion_matrix: unknown gold label '" + gold[i] + "'");
    if (p == index.end()) throw ValueError("confusion_matrix: unknown predicted label '" + pred[i] + "'");
    m[g->second][p->second]++;
  }
  return m;
}

std::string format_confusion_matrix(const std::vector<std::vector<std::int64_t>>& matrix,
                                    const std::vector<std::string>& label_order) {
  std::size_t width = 8;
  for (const auto& l : label_order) width = std::max(width, l.size() + 2);
  std::ostringstream os;
  os << std::string(width, ' ');
  for (const auto& l : label_order) {
    os << l << std::string(width - l.size(), ' ');
  }
  os << "\n";
  for (std::size_t r = 0; r < matrix.size(); ++r) {
    os << label_order[r] << std::string(width - label_order[r].size(), ' ');
    for (std::size_t c = 0; c < matrix[r].size(); ++c) {
      std::string v = std::to_string(matrix[r][c]);
      os << v << std::string(width - v.size(), ' ');
    }
    os << "\n";
  }
  return os.str();
}

std::vector<std::size_t> mine_corner_cases(const std::vector<std::vector<std::string>>& predictions,
                                           int min_distinct) {
  if (predictions.size() < 2) {
    throw ValueError("mine_corner_cases: need at least 2 prediction sets, got " +
                     std::to_string(predictions.size()));
  }
  if (min_distinct < 2) throw ValueError("mine_corner_cases: min_distinct must be >= 2");
  const std::size_t n = predictions.front().size();
  for (const auto& p : predictions) {
    if (p.size() != n) {
      throw ValueError("mine_corner_cases: prediction sets disagree on size (" +
                       std::to_string(p.size()) + " vs " + std::to_string(n) + ")");
    }
  }
  std::vector<std::size_t> out;
  std::set<std::string> distinct;
  for (std::size_t i = 0; i < n; ++i) {
    distinct.clear();
    for (const auto& p : predictions) distinct.insert(p[i]);
    if (static_cast<int>(distinct.size()) >= min_distinct) out.push_back(i);
  }
  return out;
}

double MetricsReport::value_of(const std::string& metric) const {
  for (const auto& r : records)
    if (r.metric == metric) return r.value;
  throw ValueError("metrics report: no record for metric '" + metric + "'");
}

std::string MetricsReport::serialize() const {
  std::ostringstream os;
  char buf[64];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof(buf), "%.6f", r.value);
    os << "task=" << r.task << " metric=" << r.metric << " value=" << buf << " n=" << r.n << "\n";
  }
  return os.str();
}

}  // namespace clt
