#pragma once

#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "skillrouter/training/train.hpp"

namespace skillrouter::bootstrap {

using numeric::Tensor;
using personalization::Model;
using personalization::Tokens;
using training::ProfileIndex;

// Mean encoded utterance vector of one domain's samples.
Tensor domain_average(const Model& model, const std::vector<Tokens>& utterances);

struct Projection {
  Tensor u;  // [m x m]
  double lambda = 0.0;
  double residual = 0.0;  // Frobenius norm of U H - E
};

// Ridge least squares U = E H^T (H H^T + lambda I)^-1 over pairs
// (h_avg[j], e[j]). Solved in the dual form E (H^T H + lambda I)^-1 H^T
// when there are no more pairs than dimensions, which at lambda = 0 gives
// the minimum-norm exact fit. Throws when lambda = 0 and the system is
// singular.
Projection learn_projection(const std::vector<Tensor>& h_avg, const std::vector<Tensor>& e, double lambda);
double projection_residual(const Tensor& u, const std::vector<Tensor>& h_avg, const std::vector<Tensor>& e);

// U h_avg.
Tensor init_new_embedding(const Tensor& u, const Tensor& h_avg);

struct ExpandConfig {
  training::TrainConfig train;  // epochs, batch size, Adam, negative sampling, seed
  double ridge = -1.0;          // < 0 selects 1e-3 * m
  std::size_t old_sample = 2000;  // cached old-domain utterances used as negatives
  bool freeze_new_embedding = false;
  double coverage_warning = 0.95;
};

struct ExpandReport {
  std::vector<std::string> new_skills;
  std::map<std::string, double> coverage;  // vocabulary token-type coverage per new skill
  std::vector<std::string> warnings;
  double projection_residual = 0.0;
  double ridge = 0.0;
  double encode_seconds = 0.0;
  double projection_seconds = 0.0;
  std::vector<training::EpochMetrics> epochs;

  double seconds_per_epoch() const;
  nlohmann::ordered_json to_json() const;
};

// Adds `new_skills` to a multitask model with the encoder, existing heads
// and existing embeddings frozen. Each new embedding (attention modes) is
// initialized by projecting its domain average through U learned on the
// existing domains; the new heads (and embeddings unless frozen) are then
// trained on cached utterance vectors of the new samples plus a fixed
// sample of old-domain utterances.
ExpandReport expand(Model& model, const std::vector<corpus::Instance>& old_train,
                    const std::vector<corpus::Instance>& new_train, const std::vector<std::string>& new_skills,
                    const ProfileIndex& profiles, const std::vector<corpus::Instance>& validation,
                    const ExpandConfig& cfg, const training::EpochCallback& on_epoch = {});

// Full retrain on the union of old and new data.
training::TrainResult refresh(const std::vector<corpus::Instance>& old_train,
                              const std::vector<corpus::Instance>& new_train,
                              const std::vector<corpus::Instance>& validation,
                              const std::vector<std::string>& skills, const ProfileIndex& profiles,
                              const training::TrainConfig& cfg, const training::EpochCallback& on_epoch = {});

struct TimingReport {
  std::string mode;  // expand | refresh
  double seconds_per_epoch = 0.0;
  int epochs = 0;
  double final_top1 = 0.0;
  nlohmann::ordered_json to_json() const;
};

}  // namespace skillrouter::bootstrap
