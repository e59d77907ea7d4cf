#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "grimp/nn.hpp"
#include "grimp/rng.hpp"
#include "grimp/tensor.hpp"

namespace grimp {

enum class VariableKind { continuous, binary };

const char* to_string(VariableKind kind);
VariableKind parse_variable_kind(const std::string& s);

// Encoder input for missing cells.
inline double fill_value(VariableKind kind) { return kind == VariableKind::binary ? 0.5 : 0.0; }

// Partition of the D variables into M >= 2 groups.
struct GroupSpec {
  std::vector<std::vector<std::size_t>> groups;
  std::vector<std::string> group_names;
  std::vector<VariableKind> kinds;  // per variable

  std::size_t num_vars() const { return kinds.size(); }
  std::size_t num_groups() const { return groups.size(); }
  // Every group is a single variable.
  bool variable_wise() const;
  // Throws ContractError when the groups are not a partition of 0..D-1 or M < 2.
  void validate() const;

  // One singleton group per variable, in variable order.
  static GroupSpec singletons(std::vector<VariableKind> kinds, std::vector<std::string> names = {});
};

// A rectangular block of rows. Missing cells hold NaN and are flagged 0 in
// `observed`.
struct Batch {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;
  std::vector<unsigned char> observed;

  double value(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  bool is_observed(std::size_t r, std::size_t c) const { return observed[r * cols + c] != 0; }
};

struct ModelConfig {
  std::size_t latent_dim = 256;
  std::size_t hidden_dim = 0;  // 0 means "same as latent_dim"
  std::size_t iterations = 3;  // message passing rounds T
  double sigma_z = 1.0;
  double sigma_x = 0.1414213562373095;  // sqrt(0.02)
  double log_std_min = -7.0;
  double log_std_max = 2.0;
  // With M == D, share one encoder and one width-1 readout across variables.
  bool share_singleton_nets = true;

  std::size_t hidden() const { return hidden_dim == 0 ? latent_dim : hidden_dim; }
};

// Encoder and decoder weights.
struct ModelParams {
  ModelConfig config;
  bool backward_enabled = false;
  std::vector<GaussianHeadMlp> encoders;  // one per group, or one shared
  PairMlp mlp_forward;
  PairMlp mlp_backward;
  Mlp mlp_e2n;
  std::vector<Mlp> readouts;  // one per group, or one shared

  static ModelParams create(const GroupSpec& spec, const ModelConfig& config, Rng& rng);
  bool shared_nets() const { return encoders.size() == 1 && readouts.size() == 1; }
  // Fresh weights for the backward-message network.
  void reset_backward(Rng& rng);

  // Every weight with a stable name, in a fixed order.
  std::vector<NamedTensor> named_parameters() const;
  // Parameters the optimizer should update in the current mode; the backward
  // network only once backward messages are enabled.
  std::vector<Tensor> trainable() const;
  // Throws ContractError when the weights do not fit `spec`.
  void check_compatible(const GroupSpec& spec) const;
};

// Node latents are stored as (B * M) x latent rows; row b * M + m is group m
// of sample b.
struct LatentState {
  std::size_t batch = 0;
  std::size_t num_groups = 0;
  Tensor z;
  Tensor mean;
  Tensor log_std;
};

// Fill missing cells with the per-kind constant. NaN in an observed cell is a
// DataError.
Tensor fill_missing(const Batch& x, std::span<const unsigned char> input_mask, const GroupSpec& spec);

// Per-group Gaussian encoder. `input_mask` selects the cells the encoder may
// see (defaults to x.observed). With rng == nullptr the zero-noise latent
// z = mean is returned.
LatentState encode(const Batch& x, std::span<const unsigned char> input_mask, const GroupSpec& spec,
                   const ModelParams& params, Rng* rng);
LatentState encode(const Batch& x, const GroupSpec& spec, const ModelParams& params, Rng* rng);
// Same from an already filled B x D tensor.
LatentState encode_filled(const Tensor& filled, const GroupSpec& spec, const ModelParams& params,
                          Rng* rng);
// Reparametrised draw z = mean + exp(log_std) * eps with caller-supplied eps.
Tensor reparametrize(const Tensor& mean, const Tensor& log_std, std::span<const double> eps);

// T rounds of node-to-edge / edge-to-node updates weighted by `graph`
// (M x M, zero diagonal). Returns the final node states in the same layout.
Tensor message_pass(const Tensor& z, std::size_t batch, const Tensor& graph,
                    const ModelParams& params);
// Single round, exposed for tests.
Tensor message_pass_step(const Tensor& z, std::size_t batch, const Tensor& graph,
                         const ModelParams& params);

// Per-group read-out scattered back to the original variable order (B x D).
// Binary columns hold logits.
Tensor readout(const Tensor& z_final, std::size_t batch, const GroupSpec& spec,
               const ModelParams& params);

// readout(message_pass(z)): the likelihood parameters f(Z, G).
Tensor decode(const LatentState& state, const Tensor& graph, const GroupSpec& spec,
              const ModelParams& params);

// Likelihood means: identity for continuous columns, sigmoid for binary ones.
std::vector<double> predictive_mean(const Tensor& decoded, const GroupSpec& spec);

}  // namespace grimp
