//
// SPDX-License-Identifier: Apache-2.0
//

#ifndef FLEXIFLOW_TRAINING_H_
#define FLEXIFLOW_TRAINING_H_

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "flexiflow/batch.h"
#include "flexiflow/checkpoint.h"
#include "flexiflow/config.h"
#include "flexiflow/data_io.h"
#include "flexiflow/losses.h"
#include "flexiflow/net.h"
#include "flexiflow/rng.h"

namespace flexiflow {

/// Noisy state at a per-molecule t ~ Beta (or `force_t`): zero-CoM Gaussian
/// priors for x and y, linear interpolation with sigma noise re-centered,
/// uniform categorical priors mixed in by cat_interp. `t` of the result
/// holds the times.
MolBatch make_noisy_batch(const MolBatch &target, const InterpolantConfig &icfg,
                          const ModelConfig &mcfg, Rng &rng,
                          std::optional<double> force_t = {});

/// Adam with L2 weight decay folded into the gradient.
class Adam {
public:
  Adam(std::vector<torch::Tensor> params, double beta1, double beta2, double eps,
       double weight_decay);
  void step(double lr);

  std::vector<torch::Tensor> params, m, v;
  long steps = 0;

private:
  double beta1_, beta2_, eps_, weight_decay_;
};

/// shadow <- decay * shadow + (1 - decay) * params.
class Ema {
public:
  explicit Ema(const std::vector<torch::Tensor> &params);
  void update(const std::vector<torch::Tensor> &params, double decay);

  std::vector<torch::Tensor> shadow;
};

/// Shuffles tuple indices and packs them greedily into batches whose atom
/// total stays within `budget` (a single larger tuple gets its own batch).
std::vector<std::vector<std::size_t>> atom_budget_batches(
    const std::vector<TrainingTuple> &tuples, int budget, Rng &rng);

struct StepRecord {
  long iteration = 0;
  int epoch = 0;
  double lr = 0.0;
  std::map<std::string, double> losses;
};

/// Training loop state. The dataset must outlive the trainer. Randomness is
/// derived from (seed, iteration) and (seed, epoch), so resuming from a
/// checkpoint continues the same trajectory.
class Trainer {
public:
  Trainer(TrainConfig cfg, const Dataset &ds);

  void resume(const Checkpoint &ckpt);
  Checkpoint checkpoint() const;

  /// One optimizer step on the next batch. Throws DivergenceError naming the
  /// offending loss component.
  StepRecord step();
  bool done() const;
  /// Steps until done, writing JSON lines to `log` and checkpoints to
  /// cfg.out_dir when it is non-empty.
  void run(std::ostream *log = nullptr);

  FlexiFlowNet &net() { return net_; }
  /// A network carrying the EMA weights.
  FlexiFlowNet ema_network() const;
  const TrainConfig &config() const { return cfg_; }
  long iteration() const { return iteration_; }
  const std::vector<TrainingTuple> &tuples() const { return tuples_; }

private:
  const std::vector<std::size_t> &current_batch();

  TrainConfig cfg_;
  const Dataset &ds_;
  std::vector<TrainingTuple> tuples_;
  torch::ScalarType dtype_;
  FlexiFlowNet net_{ nullptr };
  std::unique_ptr<Adam> adam_;
  std::unique_ptr<Ema> ema_;
  long iteration_ = 0;
  int epoch_ = 0;
  long cursor_ = 0;
  std::vector<std::vector<std::size_t>> plan_;
  int plan_epoch_ = -1;
};

}  // namespace flexiflow

#endif  // FLEXIFLOW_TRAINING_H_
