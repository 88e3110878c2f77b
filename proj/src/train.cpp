#include "pnc/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>

#include <nlohmann/json.hpp>

namespace pnc {

void TrainConfig::validate() const {
  if (lr <= 0.0f) throw std::invalid_argument("train config: lr must be positive");
  if (lambda < 0.0f) throw std::invalid_argument("train config: lambda must be >= 0");
  if (batch_size < 1 || steps < 1)
    throw std::invalid_argument("train config: batch_size and steps must be >= 1");
}

namespace {

std::vector<AdamState> make_optimizer(const std::vector<Tensor*>& params,
                                      const TrainConfig& cfg) {
  std::vector<AdamState> states;
  states.reserve(params.size());
  for (const Tensor* t : params) {
    AdamState s(t->numel());
    s.beta1 = cfg.beta1;
    s.beta2 = cfg.beta2;
    s.eps = cfg.adam_eps;
    s.lr = cfg.lr;
    states.push_back(std::move(s));
  }
  return states;
}

void write_checkpoint_sidecar(const std::string& weights_path, int64_t step,
                              const std::string& objective, uint64_t dataset_seed,
                              double loss, double penalty,
                              const std::string& trace_path) {
  nlohmann::json meta{{"step", step},
                      {"objective", objective},
                      {"dataset_seed", dataset_seed},
                      {"loss", loss},
                      {"penalty", penalty},
                      {"loss_trace", trace_path}};
  std::ofstream out(weights_path + ".json");
  out << meta.dump(2) << "\n";
}

}  // namespace

void write_loss_trace_csv(const std::vector<LossTracePoint>& trace,
                          const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "step,loss,penalty\n";
  out.precision(10);
  for (const auto& p : trace) out << p.step << ',' << p.loss << ',' << p.penalty << '\n';
}

TrainResult train_stage1(const PatchDataset& dataset, Objective objective,
                         const PredNetConfig& model_config, const TrainConfig& config) {
  config.validate();
  if (dataset.tag() != SourceTag::S)
    throw std::invalid_argument("train_stage1: dataset must be tagged S");
  if (dataset.size() == 0) throw std::invalid_argument("train_stage1: empty dataset");
  if (dataset.context_size() != model_config.context_size)
    throw std::invalid_argument("train_stage1: dataset context size mismatch");

  PredNetConfig cfg = model_config;
  cfg.objective = objective;
  TrainResult result;
  result.weights = init_weights(cfg, config.seed);
  PredNetWeights& w = result.weights;

  std::vector<Tensor*> params = w.parameters();
  std::vector<std::string> names = w.parameter_names();
  std::vector<AdamState> opt = make_optimizer(params, config);
  const size_t head_index = params.size() - 2;  // head.w

  std::mt19937 batch_rng(static_cast<uint32_t>(config.seed ^ (config.seed >> 32)) ^
                         0xba7c4e5du);
  std::vector<int64_t> indices(config.batch_size);
  Tensor contexts, targets;
  result.trace.reserve(config.steps);

  for (int64_t step = 1; step <= config.steps; ++step) {
    for (auto& i : indices)
      i = uniform_index(batch_rng, static_cast<uint32_t>(dataset.size()));
    dataset.gather(indices, contexts, targets);

    PredNetTape tape;
    Tensor pred = prednet_forward(w, contexts, BnMode::Train, &tape);
    Tensor residual({config.batch_size, 1});
    for (int b = 0; b < config.batch_size; ++b) residual[b] = pred[b] - targets[b];

    LossResult data = loss(residual, objective);
    LossResult head_pen = l1_penalty(w.head_w);
    const double penalty = config.lambda * head_pen.value;
    if (!std::isfinite(data.value) || !std::isfinite(penalty))
      throw TrainAbort(step, "training loss became non-finite at step " +
                                 std::to_string(step));
    result.trace.push_back({step, data.value, penalty});

    PredNetGrads grads = prednet_backward(w, tape, data.grad);
    if (config.lambda > 0.0f) {
      std::vector<float>& gw = grads.tensors[head_index].values();
      const float* pg = head_pen.grad.data();
      for (size_t i = 0; i < gw.size(); ++i) gw[i] += config.lambda * pg[i];
    }
    for (size_t i = 0; i < params.size(); ++i)
      adam_step(*params[i], grads.tensors[i].values(), opt[i], names[i]);

    if (config.checkpoint_every > 0 && step % config.checkpoint_every == 0 &&
        !config.checkpoint_prefix.empty()) {
      const std::string path =
          config.checkpoint_prefix + "_step" + std::to_string(step) + ".pnw";
      save_weights(w, path);
      write_checkpoint_sidecar(path, step, objective_name(objective), dataset.seed(),
                               data.value, penalty, "");
    }
  }
  return result;
}

StageOneResult train_stage1_all(const PatchDataset& dataset,
                                const PredNetConfig& model_config,
                                const TrainConfig& config) {
  StageOneResult out;
  TrainResult r1 = train_stage1(dataset, Objective::L1, model_config, config);
  TrainResult r2 = train_stage1(dataset, Objective::L2, model_config, config);
  TrainResult r8 = train_stage1(dataset, Objective::Lp8, model_config, config);
  out.weights_l1 = std::move(r1.weights);
  out.weights_l2 = std::move(r2.weights);
  out.weights_linf = std::move(r8.weights);
  out.trace_l1 = std::move(r1.trace);
  out.trace_l2 = std::move(r2.trace);
  out.trace_linf = std::move(r8.trace);
  return out;
}

std::vector<RefineSample> build_refine_dataset(const StageOneResult& stage1,
                                               const PatchDataset& dataset) {
  if (dataset.tag() != SourceTag::SPrime)
    throw std::invalid_argument(
        "build_refine_dataset: dataset must be tagged S' (disjoint from stage 1)");
  if (!stage1.weights_l1.config.same_architecture(stage1.weights_l2.config) ||
      !stage1.weights_l1.config.same_architecture(stage1.weights_linf.config))
    throw std::invalid_argument("build_refine_dataset: stage-1 configs differ");
  if (dataset.context_size() != stage1.weights_l1.config.context_size)
    throw std::invalid_argument("build_refine_dataset: context size mismatch");

  const int cs = dataset.context_size();
  const int64_t win = static_cast<int64_t>(cs) * cs;
  constexpr int kChunk = 256;
  std::vector<RefineSample> out(dataset.size());

  for (int64_t base = 0; base < dataset.size(); base += kChunk) {
    const int B = static_cast<int>(std::min<int64_t>(kChunk, dataset.size() - base));
    Tensor contexts({B, 1, cs, cs});
    float* cp = contexts.data();
    for (int b = 0; b < B; ++b)
      std::copy(dataset.context(base + b), dataset.context(base + b) + win,
                cp + b * win);
    Tensor p1 = prednet_forward_eval(stage1.weights_l1, contexts);
    Tensor p2 = prednet_forward_eval(stage1.weights_l2, contexts);
    Tensor p8 = prednet_forward_eval(stage1.weights_linf, contexts);
    for (int b = 0; b < B; ++b)
      out[base + b] = {p1[b], p2[b], p8[b], dataset.target(base + b)};
  }
  return out;
}

RefineTrainResult train_stage2(const std::vector<RefineSample>& refine_dataset,
                               const TrainConfig& config) {
  config.validate();
  if (refine_dataset.empty())
    throw std::invalid_argument("train_stage2: empty refine dataset");

  RefineTrainResult result;
  result.weights = identity_refine_weights();
  {
    // small seeded perturbation so the unused units break symmetry
    RefineNetWeights noise = init_refine_weights(config.seed);
    auto wp = result.weights.parameters();
    auto np = noise.parameters();
    for (size_t i = 0; i < wp.size(); ++i)
      for (int64_t j = 0; j < wp[i]->numel(); ++j)
        (*wp[i])[j] += 0.01f * (*np[i])[j];
  }
  RefineNetWeights& w = result.weights;

  std::vector<Tensor*> params = w.parameters();
  std::vector<std::string> names = w.parameter_names();
  std::vector<AdamState> opt = make_optimizer(params, config);

  std::mt19937 batch_rng(static_cast<uint32_t>(config.seed ^ (config.seed >> 32)) ^
                         0x2ef1d9a3u);
  result.trace.reserve(config.steps);

  for (int64_t step = 1; step <= config.steps; ++step) {
    Tensor triples({config.batch_size, 3});
    Tensor targets({config.batch_size, 1});
    for (int b = 0; b < config.batch_size; ++b) {
      const RefineSample& s =
          refine_dataset[uniform_index(batch_rng,
                                       static_cast<uint32_t>(refine_dataset.size()))];
      triples.at2(b, 0) = s.p1;
      triples.at2(b, 1) = s.p2;
      triples.at2(b, 2) = s.pinf;
      targets[b] = s.target;
    }

    RefineTape tape;
    Tensor pred = refine_forward_batch(w, triples, &tape);
    Tensor residual({config.batch_size, 1});
    for (int b = 0; b < config.batch_size; ++b) residual[b] = pred[b] - targets[b];

    LossResult data = loss(residual, Objective::L1);  // stage 2 minimizes l1
    if (!std::isfinite(data.value))
      throw TrainAbort(step, "refinement loss became non-finite at step " +
                                 std::to_string(step));
    result.trace.push_back({step, data.value, 0.0});

    RefineGrads grads = refine_backward(w, tape, data.grad);
    for (size_t i = 0; i < params.size(); ++i)
      adam_step(*params[i], grads.tensors[i].values(), opt[i], names[i]);
  }
  return result;
}

}  // namespace pnc
