#include "skillrouter/bootstrap/bootstrap.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "skillrouter/encoder/encoder.hpp"
#include "skillrouter/evaluation/metrics.hpp"
#include "skillrouter/numeric/kernels.hpp"

namespace skillrouter::bootstrap {

using numeric::Rng;
using numeric::Tape;
using numeric::Var;

namespace {

using Clock = std::chrono::steady_clock;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Columns are the given vectors.
Eigen::MatrixXd columns(const std::vector<Tensor>& vs, std::size_t m) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(vs.size()));
  for (std::size_t j = 0; j < vs.size(); ++j) {
    if (vs[j].size() != m) throw numeric::ShapeError("projection: vector " + std::to_string(j) + " has size " +
                                                     std::to_string(vs[j].size()) + ", expected " + std::to_string(m));
    out.col(static_cast<Eigen::Index>(j)) = Eigen::Map<const Eigen::VectorXd>(vs[j].ptr(), static_cast<Eigen::Index>(m));
  }
  return out;
}

Eigen::Map<const RowMatrix> as_matrix(const Tensor& t) {
  return {t.ptr(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}

Eigen::MatrixXd solve_spd(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double lambda) {
  if (lambda > 0.0) return a.llt().solve(b);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
  if (!lu.isInvertible()) {
    throw std::invalid_argument("projection: singular system with ridge 0 (rank " + std::to_string(lu.rank()) +
                                " of " + std::to_string(a.rows()) + "); use a positive ridge");
  }
  return lu.solve(b);
}

}  // namespace

Tensor domain_average(const Model& model, const std::vector<Tokens>& utterances) {
  if (utterances.empty()) throw std::invalid_argument("domain_average: no samples");
  const Tensor h = encoder::encode_h_bar(model.shared_encoder(), model.params, utterances);
  Tensor out({h.cols()});
  for (std::size_t i = 0; i < h.rows(); ++i) {
    for (std::size_t d = 0; d < h.cols(); ++d) out[d] += h.at(i, d);
  }
  for (auto& x : out.data()) x /= static_cast<double>(h.rows());
  return out;
}

Projection learn_projection(const std::vector<Tensor>& h_avg, const std::vector<Tensor>& e, double lambda) {
  if (h_avg.empty()) throw std::invalid_argument("projection: no pairs");
  if (h_avg.size() != e.size()) throw std::invalid_argument("projection: one embedding per average vector");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("projection: ridge must be >= 0");
  const std::size_t m = h_avg[0].size();
  const Eigen::MatrixXd h = columns(h_avg, m);
  const Eigen::MatrixXd em = columns(e, m);
  const auto n = h.cols();
  const auto md = static_cast<Eigen::Index>(m);
  Eigen::MatrixXd u;
  if (n <= md) {
    const Eigen::MatrixXd gram = h.transpose() * h + lambda * Eigen::MatrixXd::Identity(n, n);
    u = em * solve_spd(gram, h.transpose(), lambda);
  } else {
    const Eigen::MatrixXd gram = h * h.transpose() + lambda * Eigen::MatrixXd::Identity(md, md);
    // U gram = E H^T and gram is symmetric, so U^T = gram^-1 H E^T.
    u = solve_spd(gram, h * em.transpose(), lambda).transpose();
  }
  Projection out;
  out.u = Tensor({m, m});
  Eigen::Map<RowMatrix>(out.u.ptr(), md, md) = u;
  out.lambda = lambda;
  out.residual = (u * h - em).norm();
  return out;
}

double projection_residual(const Tensor& u, const std::vector<Tensor>& h_avg, const std::vector<Tensor>& e) {
  if (h_avg.size() != e.size() || h_avg.empty()) throw std::invalid_argument("projection: mismatched pairs");
  const std::size_t m = u.rows();
  return (as_matrix(u) * columns(h_avg, m) - columns(e, m)).norm();
}

Tensor init_new_embedding(const Tensor& u, const Tensor& h_avg) {
  if (u.rank() != 2 || u.cols() != h_avg.size()) {
    throw numeric::ShapeError("init_new_embedding: U " + u.shape_string() + " and h_avg " + h_avg.shape_string());
  }
  Tensor out({u.rows()});
  Eigen::Map<Eigen::VectorXd>(out.ptr(), static_cast<Eigen::Index>(u.rows())) =
      as_matrix(u) * Eigen::Map<const Eigen::VectorXd>(h_avg.ptr(), static_cast<Eigen::Index>(h_avg.size()));
  return out;
}

double ExpandReport::seconds_per_epoch() const {
  if (epochs.empty()) return 0.0;
  double s = 0.0;
  for (const auto& e : epochs) s += e.seconds;
  return s / static_cast<double>(epochs.size());
}

nlohmann::ordered_json ExpandReport::to_json() const {
  nlohmann::ordered_json j;
  j["new_skills"] = new_skills;
  j["coverage"] = coverage;
  j["warnings"] = warnings;
  j["ridge"] = ridge;
  j["projection_residual"] = projection_residual;
  j["encode_seconds"] = encode_seconds;
  j["projection_seconds"] = projection_seconds;
  j["seconds_per_epoch"] = seconds_per_epoch();
  j["epochs"] = nlohmann::ordered_json::array();
  for (const auto& e : epochs) j["epochs"].push_back(training::to_json(e));
  return j;
}

ExpandReport expand(Model& model, const std::vector<corpus::Instance>& old_train,
                    const std::vector<corpus::Instance>& new_train, const std::vector<std::string>& new_skills,
                    const ProfileIndex& profiles, const std::vector<corpus::Instance>& validation,
                    const ExpandConfig& cfg, const training::EpochCallback& on_epoch) {
  cfg.train.validate();
  if (model.spec.variant != personalization::Variant::kMultiTask) {
    throw std::invalid_argument("expand: only multitask models can be expanded");
  }
  if (new_skills.empty()) throw std::invalid_argument("expand: no new skills");
  if (old_train.empty()) throw std::invalid_argument("expand: no old-domain training data");
  {
    std::set<std::string> seen;
    for (const auto& s : new_skills) {
      if (model.skill_index(s) >= 0) throw std::invalid_argument("expand: skill '" + s + "' already exists");
      if (!seen.insert(s).second) throw std::invalid_argument("expand: skill '" + s + "' listed twice");
    }
    for (const auto& inst : new_train) {
      if (!seen.count(inst.skill_id)) {
        throw std::invalid_argument("expand: new-domain instance " + inst.id + " is labeled '" + inst.skill_id +
                                    "', which is not a new skill");
      }
    }
  }
  const bool attention = personalization::uses_attention(model.spec.mode);
  const std::size_t m = model.shared_encoder().config().output_dim();
  ExpandReport report;
  report.new_skills = new_skills;
  report.ridge = cfg.ridge < 0.0 ? 1e-3 * static_cast<double>(m) : cfg.ridge;

  std::map<std::string, std::vector<std::size_t>> new_rows;
  std::vector<Tokens> new_utts;
  for (std::size_t i = 0; i < new_train.size(); ++i) {
    new_rows[new_train[i].skill_id].push_back(i);
    new_utts.push_back(new_train[i].tokens);
  }
  for (const auto& s : new_skills) {
    std::vector<Tokens> corpus;
    for (std::size_t i : new_rows[s]) corpus.push_back(new_train[i].tokens);
    if (corpus.empty()) throw std::invalid_argument("expand: no training samples for new skill '" + s + "'");
    report.coverage[s] = encoder::vocab_coverage(corpus, model.vocab);
    if (report.coverage[s] < cfg.coverage_warning) {
      std::ostringstream os;
      os << "vocabulary covers " << report.coverage[s] << " of the word types of new skill '" << s
         << "' (below " << cfg.coverage_warning << ")";
      report.warnings.push_back(os.str());
    }
  }

  // Utterance vectors from the frozen encoder.
  const auto t_encode = Clock::now();
  Rng rng = Rng(cfg.train.seed).fork(0x657870ULL);
  std::vector<std::size_t> cache(old_train.size());
  std::iota(cache.begin(), cache.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(cache));
  cache.resize(std::min(cache.size(), cfg.old_sample));
  std::sort(cache.begin(), cache.end());
  std::vector<Tokens> old_utts;
  if (attention) {
    for (const auto& inst : old_train) old_utts.push_back(inst.tokens);
  } else {
    for (std::size_t i : cache) old_utts.push_back(old_train[i].tokens);
  }
  const auto enc = model.shared_encoder();
  const Tensor h_old = encoder::encode_h_bar(enc, model.params, old_utts);
  const Tensor h_new = encoder::encode_h_bar(enc, model.params, new_utts);
  report.encode_seconds = seconds_since(t_encode);

  // Projection from old domain averages to old embeddings.
  std::map<std::string, Tensor> new_embedding;
  if (attention) {
    const auto t_proj = Clock::now();
    auto average = [&](const Tensor& h, const std::vector<std::size_t>& rows) {
      Tensor avg({m});
      for (std::size_t i : rows) numeric::kernels::axpy(1.0, h.row(i), avg.ptr(), m);
      for (auto& x : avg.data()) x /= static_cast<double>(rows.size());
      return avg;
    };
    std::map<std::string, std::vector<std::size_t>> old_rows;
    for (std::size_t i = 0; i < old_train.size(); ++i) old_rows[old_train[i].skill_id].push_back(i);
    std::vector<Tensor> hs, es;
    for (const auto& s : model.skills) {
      auto it = old_rows.find(s);
      if (it == old_rows.end()) continue;
      hs.push_back(average(h_old, it->second));
      es.push_back(model.params.at(Model::embedding_path(s)).value);
    }
    if (hs.empty()) throw std::invalid_argument("expand: old training data covers no existing skill");
    const auto proj = learn_projection(hs, es, report.ridge);
    report.projection_residual = proj.residual;
    for (const auto& s : new_skills) {
      new_embedding[s] = init_new_embedding(proj.u, average(h_new, new_rows[s]));
      bool zero = true;
      for (double x : new_embedding[s].data()) zero = zero && x == 0.0;
      if (zero) report.warnings.push_back("projected embedding of '" + s + "' is zero");
    }
    report.projection_seconds = seconds_since(t_proj);
  }

  for (std::size_t i = 0; i < new_skills.size(); ++i) {
    Rng skill_rng = Rng(cfg.train.seed).fork(0x6e6577ULL + i);
    model.add_skill(new_skills[i], skill_rng);
    if (attention) model.params.at(Model::embedding_path(new_skills[i])).value = new_embedding[new_skills[i]];
  }
  model.params.set_trainable(false);
  for (const auto& s : new_skills) {
    model.params.at(Model::head_w_path(s)).trainable = true;
    model.params.at(Model::head_b_path(s)).trainable = true;
    if (attention && !cfg.freeze_new_embedding) model.params.at(Model::embedding_path(s)).trainable = true;
  }

  // Training rows: every new-domain sample plus the cached old sample.
  std::vector<corpus::Instance> rows_inst;
  Tensor h_rows({new_train.size() + cache.size(), m});
  for (std::size_t i = 0; i < new_train.size(); ++i) {
    rows_inst.push_back(new_train[i]);
    std::copy_n(h_new.row(i), m, h_rows.row(i));
  }
  for (std::size_t c = 0; c < cache.size(); ++c) {
    rows_inst.push_back(old_train[cache[c]]);
    std::copy_n(h_old.row(attention ? cache[c] : c), m, h_rows.row(new_train.size() + c));
  }
  const auto set = evaluation::resolve(model, rows_inst, profiles);
  std::vector<corpus::Instance> all_train = old_train;
  all_train.insert(all_train.end(), new_train.begin(), new_train.end());
  const training::NegativeSampler sampler(model.size(), training::NegativeSampler::skill_tokens(model, all_train),
                                          cfg.train.negatives, cfg.train.sampled_q);
  const auto val = evaluation::resolve(model, validation, profiles);
  numeric::Adam adam(cfg.train.adam);
  long step = 0;
  const auto bs = static_cast<std::size_t>(cfg.train.batch_size);
  try {
    for (int epoch = 1; epoch <= cfg.train.epochs; ++epoch) {
      training::EpochMetrics metrics;
      metrics.epoch = epoch;
      const auto t0 = Clock::now();
      std::vector<std::size_t> order(set.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      rng.shuffle(std::span<std::size_t>(order));
      double total = 0.0;
      std::size_t batches = 0;
      for (std::size_t begin = 0; begin < order.size(); begin += bs) {
        const std::size_t end = std::min(order.size(), begin + bs);
        const auto batch = training::build_batch(set, order, begin, end, sampler, rng);
        Tensor hb({end - begin, m});
        for (std::size_t r = begin; r < end; ++r) std::copy_n(h_rows.row(order[r]), m, hb.row(r - begin));
        Tape tape;
        const Var loss = training::multitask_graph(tape, model, tape.constant(std::move(hb)), batch);
        const double v = tape.value(loss)[0];
        if (!std::isfinite(v)) {
          std::ostringstream os;
          os << "expand diverged at epoch " << epoch << ", batch " << batches << ": loss=" << v;
          throw training::DivergenceError(os.str());
        }
        tape.backward(loss);
        adam.step(model.params, ++step);
        total += v;
        ++batches;
      }
      metrics.train_loss = batches == 0 ? 0.0 : total / static_cast<double>(batches);
      metrics.seconds = seconds_since(t0);
      metrics.val_top1 =
          val.size() == 0 ? std::numeric_limits<double>::quiet_NaN()
                          : evaluation::top_n_accuracy(model, val, personalization::Scope::kFull, {1}).accuracy[0];
      report.epochs.push_back(metrics);
      if (on_epoch) on_epoch(metrics);
    }
  } catch (const numeric::NonFiniteError& e) {
    model.params.set_trainable(true);
    throw training::DivergenceError(std::string("expand diverged: ") + e.what());
  } catch (...) {
    model.params.set_trainable(true);
    throw;
  }
  model.params.set_trainable(true);
  return report;
}

training::TrainResult refresh(const std::vector<corpus::Instance>& old_train,
                              const std::vector<corpus::Instance>& new_train,
                              const std::vector<corpus::Instance>& validation,
                              const std::vector<std::string>& skills, const ProfileIndex& profiles,
                              const training::TrainConfig& cfg, const training::EpochCallback& on_epoch) {
  std::vector<corpus::Instance> all = old_train;
  all.insert(all.end(), new_train.begin(), new_train.end());
  return training::train(all, validation, skills, profiles, cfg, on_epoch);
}

nlohmann::ordered_json TimingReport::to_json() const {
  nlohmann::ordered_json j;
  j["mode"] = mode;
  j["seconds_per_epoch"] = seconds_per_epoch;
  j["epochs"] = epochs;
  j["final_top1"] = final_top1;
  return j;
}

}  // namespace skillrouter::bootstrap
