#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "grimp/data.hpp"
#include "grimp/graph.hpp"
#include "grimp/model.hpp"
#include "grimp/rng.hpp"
#include "grimp/tensor.hpp"

namespace grimp {

enum class MaskingPolicy { uniform_fraction, none };

const char* to_string(MaskingPolicy p);
MaskingPolicy parse_masking_policy(const std::string& s);

struct TrainConfig {
  std::size_t epochs = 300;
  std::size_t batch_size = 100;
  double learning_rate = 1e-3;
  double lambda_dag = 100.0;
  // Share of stage-one epochs trained with the DAG penalty switched off.
  double lambda_warmup = 0.1;
  double tau = 0.5;
  double stage_split = 0.5;
  MaskingPolicy masking = MaskingPolicy::uniform_fraction;
  std::uint64_t seed = 0;
  std::size_t mc_samples_train = 1;
  // Global gradient-norm clip; 0 disables.
  double clip_norm = 100.0;

  void validate() const;
  std::size_t stage_one_epochs() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  int stage = 1;
  double neg_elbo = 0.0;
  double recon = 0.0;
  double kl_z = 0.0;
  double kl_g = 0.0;
  double dag_penalty = 0.0;
  double seconds = 0.0;
};

struct TrainTrace {
  std::vector<EpochRecord> records;
  bool aborted = false;
  std::string diagnostic;

  // "epoch,neg_elbo,recon,kl_z,kl_g,dag_penalty,seconds"
  std::string to_csv() const;
};

// KL(N(mean, exp(log_std)^2) || N(0, sigma_z^2)), summed over all entries.
Tensor gaussian_kl(const Tensor& mean, const Tensor& log_std, double sigma_z);

// Sum over cells with target_mask = 1 of log N(x | x_hat, sigma_x^2) for
// continuous columns and log Bernoulli(x | sigmoid(x_hat)) for binary ones.
Tensor log_likelihood(const Batch& x, std::span<const unsigned char> target_mask, const Tensor& x_hat,
                      const std::vector<VariableKind>& kinds, double sigma_x);

struct MaskPair {
  std::vector<unsigned char> input;   // cells the encoder sees
  std::vector<unsigned char> target;  // cells the likelihood scores
};

// uniform_fraction draws a drop rate per row from U(0, 1) and hides each
// observed cell of the row with that probability. Targets stay the observed set.
MaskPair apply_mask(const Batch& x, Rng& rng, MaskingPolicy policy);
// Same with an explicit per-row drop rate.
MaskPair apply_mask_fraction(const Batch& x, double drop_fraction, Rng& rng);

struct ElboTerms {
  Tensor elbo;
  Tensor recon;
  Tensor kl_z;
  Tensor kl_g;
  Tensor graph_sample;  // the soft graph used by the decoder
};

// Monte-Carlo ELBO of one batch: reparametrised Z and one soft graph per
// sample, closed-form KLs. KL_G is multiplied by `kl_g_weight`.
ElboTerms elbo(const Batch& x, const MaskPair& masks, const GroupSpec& spec, const ModelParams& model,
               const GraphPosterior& graph, const TrainConfig& config, double kl_g_weight, Rng& rng);

struct LossTerms {
  Tensor loss;
  ElboTerms elbo;
  Tensor penalty;
};

// -ELBO + lambda * R(G) with R evaluated on the ELBO's soft graph sample.
LossTerms training_loss(const Batch& x, const MaskPair& masks, const GroupSpec& spec,
                        const ModelParams& model, const GraphPosterior& graph, const TrainConfig& config,
                        double lambda, double kl_g_weight, Rng& rng);

// 0 during the warm-up share of stage one, lambda_dag afterwards.
double lambda_schedule(std::size_t epoch, const TrainConfig& config);

class Adam {
 public:
  struct Options {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  Adam() = default;
  explicit Adam(Options opts) : opts_(opts) {}

  // One update of every tensor in `params` from its current grad. Tensors
  // without a grad buffer are skipped. Moments are tracked per tensor.
  void step(const std::vector<Tensor>& params, double lr);
  std::size_t steps_taken(const Tensor& t) const;

 private:
  struct Moments {
    std::shared_ptr<detail::Node> owner;  // pins the address used as key
    std::vector<double> m, v;
    std::size_t t = 0;
  };
  Options opts_;
  std::unordered_map<const detail::Node*, Moments> state_;
};

// Scales the grads so their joint L2 norm is at most max_norm. Returns the
// norm before clipping.
double clip_grad_norm(const std::vector<Tensor>& params, double max_norm);

struct FitCallbacks {
  // Called after each epoch with its record.
  std::function<void(const EpochRecord&)> on_epoch;
};

// Two-stage training. Stage one learns everything except the backward
// network; stage two freezes the graph logits, re-initialises and enables the
// backward network and keeps training the rest. A non-finite loss stops
// training and marks the trace as aborted.
TrainTrace fit(const Dataset& data, const GroupSpec& spec, ModelParams& model, GraphPosterior& graph,
               const TrainConfig& config, const FitCallbacks& callbacks = {});

}  // namespace grimp
