#include "clt/profiler.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "clt/ops.hpp"

namespace clt {

std::uint64_t analytic_macs(const ArchitectureDescriptor& desc, std::int64_t seq_len) {
  desc.validate();
  if (seq_len < 1) throw ValueError("profiler: seq_len must be >= 1");
  const std::uint64_t L = static_cast<std::uint64_t>(seq_len);
  const std::uint64_t h = static_cast<std::uint64_t>(desc.hidden);
  const std::uint64_t E = static_cast<std::uint64_t>(desc.embed_dim());
  const std::uint64_t X = h * static_cast<std::uint64_t>(desc.mlp_expansion);
  const std::uint64_t V = static_cast<std::uint64_t>(desc.vocab_size);

  std::uint64_t total = 0;
  if (desc.factorized()) total += L * E * h;

  std::uint64_t per_layer = 4 * L * h * h;  // q, k, v, attention output
  per_layer += 2 * L * L * h;               // scores and value mixing over all heads
  per_layer += 2 * L * h * X;               // feed-forward
  if (desc.recursive && desc.adapter_bottleneck > 0) {
    per_layer += 4 * L * h * static_cast<std::uint64_t>(desc.adapter_bottleneck);
  }
  total += per_layer * static_cast<std::uint64_t>(desc.effective_depth());

  if (desc.use_pooler) total += h * h;
  if (desc.with_mlm_head) {
    const std::uint64_t D = desc.factorized() ? E : h;
    total += L * h * D + L * D * V;
  }
  return total;
}

double analytic_gmacs(const ArchitectureDescriptor& desc, std::int64_t seq_len) {
  return static_cast<double>(analytic_macs(desc, seq_len)) * 1e-9;
}

namespace {

ModelInput probe_input(std::int64_t seq_len, std::int64_t batch) {
  ModelInput in;
  in.batch = batch;
  in.len = seq_len;
  in.ids.assign(static_cast<std::size_t>(batch * seq_len), 0);
  in.attention_mask.assign(static_cast<std::size_t>(batch * seq_len), 1);
  return in;
}

}  // namespace

std::uint64_t measured_macs(const EncoderModel<float>& model, std::int64_t seq_len) {
  ModelInput in = probe_input(seq_len, 1);
  macs::Scope scope;
  model.forward(in);
  return scope.value();
}

LatencyStats measure_latency(const EncoderModel<float>& model, std::int64_t seq_len,
                             std::int64_t batch, int warmup_runs, int measured_runs) {
  if (measured_runs < 2) throw ValueError("profiler: measured_runs must be >= 2");
  ModelInput in = probe_input(seq_len, batch);
  for (int i = 0; i < warmup_runs; ++i) model.forward(in);
  std::vector<double> samples;
  samples.reserve(static_cast<std::size_t>(measured_runs));
  for (int i = 0; i < measured_runs; ++i) {
    const auto begin = std::chrono::steady_clock::now();
    model.forward(in);
    const auto end = std::chrono::steady_clock::now();
    samples.push_back(std::chrono::duration<double, std::milli>(end - begin).count());
  }
  LatencyStats out;
  out.runs = measured_runs;
  for (double s : samples) out.mean_ms += s;
  out.mean_ms /= static_cast<double>(measured_runs);
  double acc = 0.0;
  for (double s : samples) acc += (s - out.mean_ms) * (s - out.mean_ms);
  out.std_ms = std::sqrt(acc / static_cast<double>(measured_runs - 1));
  return out;
}

std::int64_t deployable_params(const ArchitectureDescriptor& desc) {
  return desc.declared_params > 0 ? desc.declared_params : count_parameters(desc);
}

std::int64_t size_bytes_for_params(std::int64_t params) {
  return params * 4;
}

double size_mib_for_params(std::int64_t params) {
  return static_cast<double>(size_bytes_for_params(params)) / static_cast<double>(1 << 20);
}

double model_size_mib(const ArchitectureDescriptor& desc) {
  return size_mib_for_params(deployable_params(desc));
}

EfficiencyRecord profile_descriptor(const ArchitectureDescriptor& desc, std::int64_t seq_len) {
  EfficiencyRecord rec;
  rec.model = desc.name;
  rec.params = deployable_params(desc);
  rec.size_mib = model_size_mib(desc);
  rec.gmacs = analytic_gmacs(desc, seq_len);
  return rec;
}

namespace {

// best = minimum; joint marks within 2% of the best
std::vector<bool> best_marks(const std::vector<double>& values) {
  std::vector<bool> marks(values.size(), false);
  double best = std::numeric_limits<double>::infinity();
  for (double v : values) {
    if (!std::isnan(v)) best = std::min(best, v);
  }
  if (!std::isfinite(best)) return marks;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isnan(values[i]) && values[i] <= best * 1.02) marks[i] = true;
  }
  return marks;
}

std::string fmt(double v, const char* spec) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

}  // namespace

std::string emit_efficiency_table(const std::vector<EfficiencyRecord>& records) {
  if (records.empty()) throw ValueError("profiler: no records to tabulate");
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::string> names;
  std::vector<std::string> lat_cells, gm_cells, sz_cells;
  std::vector<double> lat_values, gm_values, sz_values;
  for (const auto& r : records) {
    names.push_back(r.model);
    if (r.has_latency()) {
      lat_cells.push_back(fmt(r.latency_ms_mean, "%.2f") + " +- " + fmt(r.latency_ms_std, "%.2f"));
      lat_values.push_back(r.latency_ms_mean);
    } else {
      lat_cells.push_back("-");
      lat_values.push_back(nan);
    }
    if (r.has_gmacs()) {
      gm_cells.push_back(fmt(r.gmacs, "%.3f"));
      gm_values.push_back(r.gmacs);
    } else {
      gm_cells.push_back("-");
      gm_values.push_back(nan);
    }
    sz_cells.push_back(fmt(r.size_mib, "%.1f"));
    sz_values.push_back(r.size_mib);
  }
  const auto lat_marks = best_marks(lat_values);
  const auto gm_marks = best_marks(gm_values);
  const auto sz_marks = best_marks(sz_values);

  std::size_t name_w = 5;
  for (const auto& n : names) name_w = std::max(name_w, n.size());
  auto pad = [](const std::string& s, std::size_t w) {
    return s + std::string(w > s.size() ? w - s.size() : 1, ' ');
  };
  std::ostringstream os;
  os << pad("Model", name_w + 2) << pad("Params", 12) << pad("Latency (ms)", 18)
     << pad("GMACs", 12) << "Size (MiB)\n";
  for (std::size_t i = 0; i < records.size(); ++i) {
    os << pad(names[i], name_w + 2);
    os << pad(std::to_string(records[i].params), 12);
    os << pad(lat_cells[i] + (lat_marks[i] ? " *" : ""), 18);
    os << pad(gm_cells[i] + (gm_marks[i] ? " *" : ""), 12);
    os << sz_cells[i] + (sz_marks[i] ? " *" : "");
    os << "\n";
  }
  os << "\n* best per column (less is better); entries within 2% share the mark\n";
  return os.str();
}

std::string efficiency_records_jsonl(const std::vector<EfficiencyRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    nlohmann::json j;
    j["model"] = r.model;
    j["params"] = r.params;
    j["size_mib"] = r.size_mib;
    if (r.has_gmacs()) j["gmacs"] = r.gmacs;
    if (r.has_latency()) {
      j["latency_ms_mean"] = r.latency_ms_mean;
      j["latency_ms_std"] = r.latency_ms_std;
    }
    out += j.dump();
    out += "\n";
  }
  return out;
}

}  // namespace clt
