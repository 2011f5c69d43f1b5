#pragma once

#include <functional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "skillrouter/corpus/types.hpp"
#include "skillrouter/evaluation/metrics.hpp"
#include "skillrouter/numeric/adam.hpp"
#include "skillrouter/numeric/tape.hpp"
#include "skillrouter/personalization/model.hpp"

namespace skillrouter::training {

using evaluation::ProfileIndex;
using personalization::Model;
using personalization::PersonalizationMode;
using personalization::Tokens;
using personalization::Variant;

enum class NegativeSampling { kExact, kSampled };

struct TrainConfig {
  Variant variant = Variant::kMultiTask;
  PersonalizationMode mode = PersonalizationMode::kNone;
  encoder::EncoderConfig encoder;
  int embedding_dim = 200;
  int min_word_count = 2;
  int epochs = 10;
  int batch_size = 32;
  numeric::AdamConfig adam;
  NegativeSampling negatives = NegativeSampling::kExact;
  int sampled_q = 8;
  // Binary variant: negatives drawn per positive for each skill's classifier.
  int binary_negative_ratio = 3;
  double dropout = 0.0;  // hook only; must stay 0
  std::uint64_t seed = 1;

  personalization::ModelSpec model_spec() const;
  void validate() const;
};

struct LossBreakdown {
  double positive = 0.0;
  double negative = 0.0;
  double total = 0.0;
};

// -log p for the true domain's IND probability.
double positive_loss(double p_ind);
// -(1/|p_ood|) sum log p_OOD over the negative domains.
double negative_loss(const std::vector<double>& p_ood);
// sum_j w_j (-log p_OOD_j); the weighted form used for sampled negatives.
double weighted_negative_loss(const std::vector<double>& p_ood, const std::vector<double>& weights);

// Negative-domain selection per training sample. Exact mode returns every
// other domain with weight 1/(k-1). Sampled(q) mode draws without
// replacement, half from "confusable" domains (those sharing a command
// token with the sample) and half from the rest, and weights each draw by
// its inverse inclusion probability so that the weighted sum is an
// unbiased estimate of the exact mean.
class NegativeSampler {
 public:
  NegativeSampler(std::size_t num_skills, std::vector<std::set<std::string>> skill_tokens,
                  NegativeSampling mode, int q);

  struct Draw {
    std::vector<int> negatives;
    std::vector<double> weights;
  };
  Draw draw(int positive, const Tokens& tokens, numeric::Rng& rng) const;

  // Other domains that share at least one token with `tokens`.
  std::vector<int> confusable(int positive, const Tokens& tokens) const;

  // Token sets per skill from labeled training instances.
  static std::vector<std::set<std::string>> skill_tokens(const Model& model,
                                                         const std::vector<corpus::Instance>& data);

 private:
  std::size_t k_;
  std::vector<std::set<std::string>> tokens_;
  NegativeSampling mode_;
  int q_;
};

struct Batch {
  std::vector<Tokens> utterances;
  std::vector<int> labels;
  std::vector<std::vector<int>> enabled;
  std::vector<NegativeSampler::Draw> negatives;
};

// Rows [begin, end) of `order` over the resolved set.
Batch build_batch(const evaluation::LabeledSet& set, const std::vector<std::size_t>& order,
                  std::size_t begin, std::size_t end, const NegativeSampler& sampler, numeric::Rng& rng);

// Records the multitask graph for one batch on `tape`; returns the loss
// node. Frozen parameters (trainable=false) contribute no gradient.
numeric::Var multitask_graph(numeric::Tape& tape, Model& model, const Batch& batch);
// Same graph from precomputed utterance vectors (one row per batch sample);
// batch.utterances is ignored.
numeric::Var multitask_graph(numeric::Tape& tape, Model& model, numeric::Var h_bar, const Batch& batch);

// Single affine map h_bar -> k logits followed by softmax.
numeric::Tensor multiclass_forward(const numeric::Tensor& h_bar, const numeric::Tensor& w,
                                   const numeric::Tensor& b);

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double val_top1 = 0.0;
  double seconds = 0.0;  // training pass only
};
nlohmann::ordered_json to_json(const EpochMetrics& m);

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

struct TrainResult {
  Model model;
  std::vector<EpochMetrics> metrics;
};

// Builds the vocabulary from the training tokens and initializes a model.
Model init_model(const std::vector<corpus::Instance>& train, const std::vector<std::string>& skills,
                 const TrainConfig& cfg);

// Trains `model` in place for cfg.epochs epochs and reports per-epoch
// metrics. Validation top-1 uses the full skill scope.
std::vector<EpochMetrics> fit(Model& model, const std::vector<corpus::Instance>& train,
                              const std::vector<corpus::Instance>& validation,
                              const ProfileIndex& profiles, const TrainConfig& cfg,
                              const EpochCallback& on_epoch = {});

TrainResult train(const std::vector<corpus::Instance>& train_set,
                  const std::vector<corpus::Instance>& validation, const std::vector<std::string>& skills,
                  const ProfileIndex& profiles, const TrainConfig& cfg, const EpochCallback& on_epoch = {});

}  // namespace skillrouter::training
