#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pnc/dataset.hpp"
#include "pnc/model.hpp"

namespace pnc {

struct TrainConfig {
  float lr = 1e-4f;
  float lambda = 0.2f;  // weight of the l1 penalty on the regression head
  int batch_size = 64;
  int64_t steps = 1000;
  uint64_t seed = 1;
  float beta1 = 0.9f;
  float beta2 = 0.99f;
  float adam_eps = 1e-8f;
  int64_t checkpoint_every = 0;  // 0 = no checkpoints
  std::string checkpoint_prefix;

  void validate() const;
};

struct LossTracePoint {
  int64_t step;
  double loss;     // data term
  double penalty;  // lambda * ||w_r||_1
};

// Raised when the training loss stops being finite.
struct TrainAbort : std::runtime_error {
  int64_t step;
  TrainAbort(int64_t s, const std::string& msg) : std::runtime_error(msg), step(s) {}
};

struct TrainResult {
  PredNetWeights weights;
  std::vector<LossTracePoint> trace;
};

// Stage 1: minimize loss(objective) + lambda * |head weights|_1 with Adam.
// The penalty applies to the regression head only. Training runs BN in train
// mode; aborts with the step index if the loss goes non-finite.
TrainResult train_stage1(const PatchDataset& dataset, Objective objective,
                         const PredNetConfig& model_config, const TrainConfig& config);

struct StageOneResult {
  PredNetWeights weights_l1;
  PredNetWeights weights_l2;
  PredNetWeights weights_linf;
  std::vector<LossTracePoint> trace_l1, trace_l2, trace_linf;
};

StageOneResult train_stage1_all(const PatchDataset& dataset,
                                const PredNetConfig& model_config,
                                const TrainConfig& config);

// One refinement sample: the three stage-1 predictions and the true value.
struct RefineSample {
  float p1, p2, pinf;
  float target;
};

// Runs the frozen stage-1 nets in eval mode over a dataset tagged S'.
// Rejects datasets tagged S: stage 2 must not reuse stage-1 data.
std::vector<RefineSample> build_refine_dataset(const StageOneResult& stage1,
                                               const PatchDataset& dataset_s_prime);

struct RefineTrainResult {
  RefineNetWeights weights;
  std::vector<LossTracePoint> trace;
};

// Stage 2: Adam on the l1 loss of the fused prediction, no sparsity penalty.
// Starts from the exact pass-through of the first input plus a small seeded
// perturbation, so the fused net begins at PredNet-l1 quality.
RefineTrainResult train_stage2(const std::vector<RefineSample>& refine_dataset,
                               const TrainConfig& config);

void write_loss_trace_csv(const std::vector<LossTracePoint>& trace,
                          const std::string& path);

}  // namespace pnc
