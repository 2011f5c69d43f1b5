#include "skillrouter/training/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "skillrouter/numeric/activations.hpp"
#include "skillrouter/numeric/kernels.hpp"

namespace skillrouter::training {

using numeric::HeadPair;
using numeric::MultitaskTarget;
using numeric::ParamRef;
using numeric::Rng;
using numeric::Tape;
using numeric::Tensor;
using numeric::Var;
using personalization::uses_attention;
using personalization::uses_flag;

personalization::ModelSpec TrainConfig::model_spec() const {
  personalization::ModelSpec spec;
  spec.variant = variant;
  spec.mode = mode;
  spec.encoder = encoder;
  spec.embedding_dim = embedding_dim;
  return spec;
}

void TrainConfig::validate() const {
  model_spec().validate();
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (min_word_count < 1) throw std::invalid_argument("min word count must be >= 1");
  if (!(adam.lr > 0.0) || !(adam.beta1 >= 0.0 && adam.beta1 < 1.0) ||
      !(adam.beta2 >= 0.0 && adam.beta2 < 1.0) || !(adam.eps > 0.0)) {
    throw std::invalid_argument("invalid Adam settings");
  }
  if (sampled_q < 1) throw std::invalid_argument("sampled negative count q must be >= 1");
  if (binary_negative_ratio < 1) throw std::invalid_argument("binary negative ratio must be >= 1");
  if (dropout != 0.0) throw std::invalid_argument("dropout is not supported; leave it at 0");
}

double positive_loss(double p_ind) {
  if (!(p_ind > 0.0 && p_ind <= 1.0)) throw std::invalid_argument("positive_loss: p must be in (0, 1]");
  return -std::log(p_ind);
}

double negative_loss(const std::vector<double>& p_ood) {
  if (p_ood.empty()) throw std::invalid_argument("negative_loss: no negative domains");
  // Running mean: equal terms reproduce the positive loss bit for bit.
  double mean = 0.0;
  for (std::size_t j = 0; j < p_ood.size(); ++j) mean += (positive_loss(p_ood[j]) - mean) / static_cast<double>(j + 1);
  return mean;
}

double weighted_negative_loss(const std::vector<double>& p_ood, const std::vector<double>& weights) {
  if (p_ood.size() != weights.size()) throw std::invalid_argument("negative_loss: one weight per domain");
  double sum = 0.0;
  for (std::size_t j = 0; j < p_ood.size(); ++j) {
    if (!(p_ood[j] > 0.0 && p_ood[j] <= 1.0)) throw std::invalid_argument("negative_loss: p must be in (0, 1]");
    sum -= weights[j] * std::log(p_ood[j]);
  }
  return sum;
}

NegativeSampler::NegativeSampler(std::size_t num_skills, std::vector<std::set<std::string>> skill_tokens,
                                 NegativeSampling mode, int q)
    : k_(num_skills), tokens_(std::move(skill_tokens)), mode_(mode), q_(q) {
  if (num_skills == 0) throw std::invalid_argument("negative sampler: no skills");
  if (tokens_.size() != k_) throw std::invalid_argument("negative sampler: one token set per skill");
  if (q < 1) throw std::invalid_argument("negative sampler: q must be >= 1");
}

std::vector<int> NegativeSampler::confusable(int positive, const Tokens& tokens) const {
  std::vector<int> out;
  for (std::size_t j = 0; j < k_; ++j) {
    if (static_cast<int>(j) == positive) continue;
    const auto& vocab = tokens_[j];
    if (std::any_of(tokens.begin(), tokens.end(), [&](const std::string& t) { return vocab.count(t) > 0; })) {
      out.push_back(static_cast<int>(j));
    }
  }
  return out;
}

NegativeSampler::Draw NegativeSampler::draw(int positive, const Tokens& tokens, Rng& rng) const {
  Draw d;
  if (k_ < 2) return d;
  const double denom = static_cast<double>(k_ - 1);
  if (mode_ == NegativeSampling::kExact || static_cast<std::size_t>(q_) >= k_ - 1) {
    for (std::size_t j = 0; j < k_; ++j) {
      if (static_cast<int>(j) != positive) d.negatives.push_back(static_cast<int>(j));
    }
    d.weights.assign(d.negatives.size(), 1.0 / denom);
    return d;
  }
  std::vector<int> conf = confusable(positive, tokens);
  std::vector<int> rest;
  {
    std::vector<char> in_conf(k_, 0);
    for (int j : conf) in_conf[static_cast<std::size_t>(j)] = 1;
    for (std::size_t j = 0; j < k_; ++j) {
      if (static_cast<int>(j) != positive && !in_conf[j]) rest.push_back(static_cast<int>(j));
    }
  }
  const std::size_t q = static_cast<std::size_t>(q_);
  std::size_t n_conf = std::min(conf.size(), (q + 1) / 2);
  const std::size_t n_rest = std::min(rest.size(), q - n_conf);
  n_conf = std::min(conf.size(), q - n_rest);
  auto take = [&](std::vector<int>& pool, std::size_t n) {
    // Partial Fisher-Yates: the first n entries are a uniform draw without replacement.
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
      std::swap(pool[i], pool[j]);
      d.negatives.push_back(pool[i]);
      d.weights.push_back(static_cast<double>(pool.size()) / (static_cast<double>(n) * denom));
    }
  };
  take(conf, n_conf);
  take(rest, n_rest);
  return d;
}

std::vector<std::set<std::string>> NegativeSampler::skill_tokens(const Model& model,
                                                                 const std::vector<corpus::Instance>& data) {
  std::vector<std::set<std::string>> out(model.size());
  for (const auto& inst : data) {
    const int j = model.skill_index(inst.skill_id);
    if (j >= 0) out[static_cast<std::size_t>(j)].insert(inst.tokens.begin(), inst.tokens.end());
  }
  return out;
}

Batch build_batch(const evaluation::LabeledSet& set, const std::vector<std::size_t>& order,
                  std::size_t begin, std::size_t end, const NegativeSampler& sampler, Rng& rng) {
  if (begin >= end || end > order.size()) throw std::invalid_argument("build_batch: empty or out-of-range slice");
  Batch b;
  for (std::size_t r = begin; r < end; ++r) {
    const std::size_t i = order[r];
    b.utterances.push_back(set.utterances[i]);
    b.labels.push_back(set.labels[i]);
    b.enabled.push_back(set.enabled[i]);
    b.negatives.push_back(sampler.draw(set.labels[i], set.utterances[i], rng));
  }
  return b;
}

Var multitask_graph(Tape& tape, Model& model, const Batch& batch) {
  const auto enc = model.shared_encoder();
  return multitask_graph(tape, model, enc.encode(tape, enc.refs(model.params), batch.utterances).h_bar, batch);
}

Var multitask_graph(Tape& tape, Model& model, Var h_bar, const Batch& batch) {
  auto& store = model.params;
  const auto mode = model.spec.mode;
  Var features = h_bar;
  if (uses_attention(mode)) {
    std::vector<ParamRef> embs;
    for (const auto& s : model.skills) embs.push_back(store.ref(Model::embedding_path(s)));
    const Var parts[] = {h_bar, tape.attend(h_bar, embs, batch.enabled)};
    features = tape.concat_cols(parts);
  }
  std::vector<ParamRef> ws, bs;
  for (const auto& s : model.skills) {
    ws.push_back(store.ref(Model::head_w_path(s)));
    bs.push_back(store.ref(Model::head_b_path(s)));
  }
  std::vector<HeadPair> pairs;
  std::vector<MultitaskTarget> targets;
  std::vector<char> on(model.size(), 0);
  for (std::size_t i = 0; i < batch.labels.size(); ++i) {
    for (int j : batch.enabled[i]) on[static_cast<std::size_t>(j)] = 1;
    auto pair_for = [&](int head) {
      pairs.push_back({static_cast<int>(i), head, on[static_cast<std::size_t>(head)] ? 1.0 : 0.0});
      return static_cast<int>(pairs.size()) - 1;
    };
    MultitaskTarget t;
    t.positive_pair = pair_for(batch.labels[i]);
    for (int j : batch.negatives[i].negatives) t.negative_pairs.push_back(pair_for(j));
    t.negative_weights = batch.negatives[i].weights;
    targets.push_back(std::move(t));
    for (int j : batch.enabled[i]) on[static_cast<std::size_t>(j)] = 0;
  }
  const Var z = tape.selu(tape.heads(features, ws, bs, pairs, uses_flag(mode)));
  return tape.multitask_loss(z, targets);
}

Tensor multiclass_forward(const Tensor& h_bar, const Tensor& w, const Tensor& b) {
  if (w.rank() != 2 || w.cols() != h_bar.size() || b.size() != w.rows()) {
    throw numeric::ShapeError("multiclass_forward: W " + w.shape_string() + ", b " + b.shape_string() +
                              " do not fit h_bar of width " + std::to_string(h_bar.size()));
  }
  std::vector<double> logits(w.rows());
  for (std::size_t k = 0; k < w.rows(); ++k) {
    logits[k] = b[k] + numeric::kernels::dot(w.row(k), h_bar.ptr(), h_bar.size());
  }
  return Tensor::vector(numeric::softmax(logits));
}

nlohmann::ordered_json to_json(const EpochMetrics& m) {
  nlohmann::ordered_json j;
  j["epoch"] = m.epoch;
  j["train_loss"] = m.train_loss;
  if (std::isfinite(m.val_top1)) {
    j["val_top1"] = m.val_top1;
  } else {
    j["val_top1"] = nullptr;
  }
  j["seconds"] = m.seconds;
  return j;
}

Model init_model(const std::vector<corpus::Instance>& train, const std::vector<std::string>& skills,
                 const TrainConfig& cfg) {
  cfg.validate();
  std::vector<Tokens> corpus;
  corpus.reserve(train.size());
  for (const auto& inst : train) corpus.push_back(inst.tokens);
  return Model::create(cfg.model_spec(), skills, encoder::WordVocab::build(corpus, cfg.min_word_count),
                       cfg.seed);
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

[[noreturn]] void diverged(int epoch, std::size_t batch, const std::string& what) {
  std::ostringstream os;
  os << "training diverged at epoch " << epoch << ", batch " << batch << ": " << what
     << " (try a smaller learning rate)";
  throw DivergenceError(os.str());
}

double step_loss(Tape& tape, Var loss, int epoch, std::size_t batch) {
  const double v = tape.value(loss)[0];
  if (!std::isfinite(v)) {
    const auto parts = tape.loss_parts(loss);
    std::ostringstream os;
    os << "loss=" << v << " positive=" << parts.positive << " negative=" << parts.negative;
    diverged(epoch, batch, os.str());
  }
  tape.backward(loss);
  return v;
}

std::vector<std::size_t> shuffled(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(order));
  return order;
}

// One epoch of the shared-encoder variants; returns the mean batch loss.
double shared_epoch(Model& model, const evaluation::LabeledSet& set, const NegativeSampler& sampler,
                    const TrainConfig& cfg, numeric::Adam& adam, long& step, Rng& rng, int epoch) {
  const auto order = shuffled(set.size(), rng);
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  double total = 0.0;
  std::size_t batches = 0;
  for (std::size_t begin = 0; begin < order.size(); begin += bs) {
    const std::size_t end = std::min(order.size(), begin + bs);
    Tape tape;
    Var loss;
    try {
      if (model.spec.variant == Variant::kMultiTask) {
        loss = multitask_graph(tape, model, build_batch(set, order, begin, end, sampler, rng));
      } else {
        std::vector<Tokens> utts;
        std::vector<int> labels;
        for (std::size_t r = begin; r < end; ++r) {
          utts.push_back(set.utterances[order[r]]);
          labels.push_back(set.labels[order[r]]);
        }
        const auto enc = model.shared_encoder();
        const Var h_bar = enc.encode(tape, enc.refs(model.params), utts).h_bar;
        const ParamRef b = model.params.ref("multiclass/b");
        loss = tape.softmax_xent(tape.affine(h_bar, model.params.ref("multiclass/W"), &b), labels);
      }
    } catch (const numeric::NonFiniteError& e) {
      diverged(epoch, batches, e.what());
    }
    total += step_loss(tape, loss, epoch, batches);
    adam.step(model.params, ++step);
    ++batches;
  }
  return batches == 0 ? 0.0 : total / static_cast<double>(batches);
}

struct BinaryState {
  std::map<std::string, numeric::Adam> adam;
  std::map<std::string, long> steps;
};

// One epoch of the per-skill classifiers: each sees its positives and
// binary_negative_ratio times as many sampled negatives.
double binary_epoch(Model& model, const evaluation::LabeledSet& set, const TrainConfig& cfg,
                    BinaryState& state, Rng& rng, int epoch) {
  std::vector<std::vector<std::size_t>> by_skill(model.size());
  for (std::size_t i = 0; i < set.size(); ++i) by_skill[static_cast<std::size_t>(set.labels[i])].push_back(i);
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  double total = 0.0;
  std::size_t batches = 0;
  for (std::size_t j = 0; j < model.size(); ++j) {
    const auto& skill = model.skills[j];
    const auto& pos = by_skill[j];
    if (pos.empty()) continue;
    std::vector<std::size_t> others;
    for (std::size_t i = 0; i < set.size(); ++i) {
      if (static_cast<std::size_t>(set.labels[i]) != j) others.push_back(i);
    }
    const std::size_t n_neg = std::min(others.size(), pos.size() * static_cast<std::size_t>(cfg.binary_negative_ratio));
    for (std::size_t i = 0; i < n_neg; ++i) {
      std::swap(others[i], others[i + static_cast<std::size_t>(rng.below(others.size() - i))]);
    }
    std::vector<std::pair<std::size_t, int>> rows;
    for (std::size_t i : pos) rows.emplace_back(i, 1);
    for (std::size_t i = 0; i < n_neg; ++i) rows.emplace_back(others[i], 0);
    rng.shuffle(std::span<std::pair<std::size_t, int>>(rows));

    model.params.set_trainable(false);
    for (const auto& p : model.skill_param_paths(skill)) model.params.at(p).trainable = true;
    auto& adam = state.adam.try_emplace(skill, cfg.adam).first->second;
    long& step = state.steps[skill];
    const auto enc = model.binary_encoder(skill);
    for (std::size_t begin = 0; begin < rows.size(); begin += bs) {
      const std::size_t end = std::min(rows.size(), begin + bs);
      std::vector<Tokens> utts;
      std::vector<int> labels;
      for (std::size_t r = begin; r < end; ++r) {
        utts.push_back(set.utterances[rows[r].first]);
        labels.push_back(rows[r].second);
      }
      Tape tape;
      Var loss;
      try {
        const Var h_bar = enc.encode(tape, enc.refs(model.params), utts).h_bar;
        const ParamRef b = model.params.ref("binary/" + skill + "/b");
        loss = tape.two_way_xent(tape.selu(tape.affine(h_bar, model.params.ref("binary/" + skill + "/W"), &b)),
                                 labels);
      } catch (const numeric::NonFiniteError& e) {
        diverged(epoch, batches, e.what());
      }
      total += step_loss(tape, loss, epoch, batches);
      adam.step(model.params, ++step);
      ++batches;
    }
  }
  model.params.set_trainable(true);
  return batches == 0 ? 0.0 : total / static_cast<double>(batches);
}

}  // namespace

std::vector<EpochMetrics> fit(Model& model, const std::vector<corpus::Instance>& train,
                              const std::vector<corpus::Instance>& validation, const ProfileIndex& profiles,
                              const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (train.empty() && cfg.epochs > 0) throw std::invalid_argument("train: empty training set");
  const auto set = evaluation::resolve(model, train, profiles);
  const auto val = evaluation::resolve(model, validation, profiles);
  const NegativeSampler sampler(model.size(), NegativeSampler::skill_tokens(model, train), cfg.negatives,
                                cfg.sampled_q);
  numeric::Adam adam(cfg.adam);
  BinaryState binary;
  long step = 0;
  Rng order_rng = Rng(cfg.seed).fork(0x7472616eULL);
  std::vector<EpochMetrics> out;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    EpochMetrics m;
    m.epoch = epoch;
    const auto t0 = Clock::now();
    m.train_loss = model.spec.variant == Variant::kBinary
                       ? binary_epoch(model, set, cfg, binary, order_rng, epoch)
                       : shared_epoch(model, set, sampler, cfg, adam, step, order_rng, epoch);
    m.seconds = seconds_since(t0);
    m.val_top1 = val.size() == 0
                     ? std::numeric_limits<double>::quiet_NaN()
                     : evaluation::top_n_accuracy(model, val, personalization::Scope::kFull, {1}).accuracy[0];
    out.push_back(m);
    if (on_epoch) on_epoch(m);
  }
  return out;
}

TrainResult train(const std::vector<corpus::Instance>& train_set, const std::vector<corpus::Instance>& validation,
                  const std::vector<std::string>& skills, const ProfileIndex& profiles, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  TrainResult r{init_model(train_set, skills, cfg), {}};
  r.metrics = fit(r.model, train_set, validation, profiles, cfg, on_epoch);
  return r;
}

}  // namespace skillrouter::training
