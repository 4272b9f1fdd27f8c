#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "clt/descriptor.hpp"
#include "clt/model.hpp"

namespace clt {

// multiply-accumulate count of one forward pass at batch 1, term for term
// the kernels the encoder forward launches:
//   embedding projection (E < h):      L*E*h
//   per effective layer:
//     q/k/v and output projections:    4 * L*h*h
//     attention scores + value mixing: 2 * heads * L*L * (h/heads)
//     feed-forward in + out:           2 * L*h*(h*expansion)
//     adapter pair (recursive, A > 0): 4 * L*h*A
//   pooler (if enabled):               h*h
//   MLM head (if enabled):             L*h*D + L*D*V, D = E when factorized else h
// Embedding lookups, norms, softmax, and activations launch no
// multiply-accumulate kernels and contribute nothing.
std::uint64_t analytic_macs(const ArchitectureDescriptor& desc, std::int64_t seq_len);

double analytic_gmacs(const ArchitectureDescriptor& desc, std::int64_t seq_len);

// instrumentation counterpart: builds nothing, counts the MACs an actual
// forward pass reports through the kernel counter
std::uint64_t measured_macs(const EncoderModel<float>& model, std::int64_t seq_len);

struct LatencyStats {
  double mean_ms = 0.0;
  double std_ms = 0.0;  // sample standard deviation
  int runs = 0;
};

// wall-clock per forward after warmup; run single-threaded and exclusively
LatencyStats measure_latency(const EncoderModel<float>& model, std::int64_t seq_len,
                             std::int64_t batch, int warmup_runs, int measured_runs);

std::int64_t deployable_params(const ArchitectureDescriptor& desc);
std::int64_t size_bytes_for_params(std::int64_t params);  // 4 bytes per parameter
double size_mib_for_params(std::int64_t params);
double model_size_mib(const ArchitectureDescriptor& desc);

struct EfficiencyRecord {
  std::string model;
  std::int64_t params = 0;
  double gmacs = -1.0;            // negative = not available
  double latency_ms_mean = -1.0;  // negative = not measured
  double latency_ms_std = 0.0;
  double size_mib = 0.0;

  bool has_gmacs() const { return gmacs >= 0.0; }
  bool has_latency() const { return latency_ms_mean >= 0.0; }
};

EfficiencyRecord profile_descriptor(const ArchitectureDescriptor& desc, std::int64_t seq_len);

// aligned text table; the best entry per metric column is marked with '*',
// and entries within 2% of the best share the mark
std::string emit_efficiency_table(const std::vector<EfficiencyRecord>& records);

// machine-readable companion, one JSON record per line
std::string efficiency_records_jsonl(const std::vector<EfficiencyRecord>& records);

}  // namespace clt
