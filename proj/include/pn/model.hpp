#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pn/attention.hpp"
#include "pn/graph.hpp"

namespace pn {

enum class Activation { none, relu };
enum class Variant { v1, v2 };
enum class Scheme { local_to_global, local_and_global };
enum class Stage { warmup, full };

struct ModelConfig {
  int input_dim = 0;
  int hidden_dim = 64;
  int local_layers = 2;   // L1
  int global_layers = 1;  // L2
  int heads = 8;
  int classes = 2;
  double dropout = 0.0;
  Activation activation = Activation::none;
  Variant variant = Variant::v1;
  LocalKind local_kind = LocalKind::gat;
  Scheme scheme = Scheme::local_to_global;

  void validate() const;  // throws on invalid combinations
};

struct PolynormerModel {
  ModelConfig config;
  Matrix input_w;  // input_dim x hidden
  std::vector<LocalLayerParams> local;
  std::vector<GlobalLayerParams> global;
  std::vector<MixedLayerParams> mixed;  // used by the local_and_global scheme
  Matrix head_w;  // hidden x classes
  /// Cached spectral gate carrier (n x 1); present iff variant == v2.
  std::optional<Matrix> gate_carrier;

  /// Visits every trainable tensor in a fixed order. The same order defines
  /// optimizer state alignment and checkpoint layout.
  void for_each_param(const std::function<void(const std::string&, Matrix&)>& fn);
  void for_each_param(const std::function<void(const std::string&, const Matrix&)>& fn) const;
  std::int64_t parameter_count() const;
};

PolynormerModel init_model(const ModelConfig& cfg, std::uint64_t seed);

/// Computes and caches the Fiedler carrier for a v2 model on this graph.
void attach_gate_carrier(PolynormerModel& model, const Graph& g);

struct ForwardOptions {
  Stage stage = Stage::full;
  bool training = false;
  Rng* dropout_rng = nullptr;  // required when training with dropout > 0
};

/// Instrumentation output for the accumulation property and score export.
struct ForwardTrace {
  Value x_local;
  std::vector<Value> local_outputs;
  std::vector<Value> global_inputs;  // representation entering each global layer
};

/// Parameter leaves bound to one tape, mirroring the model structure.
struct BoundModel {
  Value input_w;
  std::vector<LocalLayerValues> local;
  std::vector<GlobalLayerValues> global;
  std::vector<MixedLayerValues> mixed;
  Value head_w;
};

BoundModel bind_model(Tape& t, const PolynormerModel& m);

/// Full forward pass to logits (n x classes). `carrier_rows` optionally
/// restricts the cached v2 carrier to a node subset (mini-batch parts).
Value model_forward(Tape& t, const PolynormerModel& m, const BoundModel& bound,
                    const GraphContext& ctx, const Matrix& features, const ForwardOptions& opt,
                    ForwardTrace* trace = nullptr,
                    const std::vector<int>* carrier_rows = nullptr);

/// Convenience: fresh tape, no gradients wanted.
Matrix forward_logits(const PolynormerModel& m, const Dataset& data, Stage stage);

struct WlProbeResult {
  Matrix outputs_a;  // n x 1, sorted ascending
  Matrix outputs_b;
  bool distinguishable = false;
  double max_sorted_diff = 0.0;
};

/// Random-walk expressivity probe: L rounds of X <- (A D^-1 X) .* (X + b)
/// from all-ones features, with b = beta (v1) or b = beta * fiedler (v2).
/// Graphs are compared through their sorted node outputs.
WlProbeResult wl_probe(const Graph& a, const Graph& b, int rounds, double beta, Variant variant);

// Checkpoint container: magic PNCK, little-endian, strict schema.
void save_checkpoint(const PolynormerModel& m, const std::string& path);
PolynormerModel load_checkpoint(const std::string& path);

}  // namespace pn
