#include <cmath>

#include "doctest.h"
#include "gradcheck.hpp"
#include "skillrouter/numeric/activations.hpp"
#include "skillrouter/numeric/kernels.hpp"
#include "skillrouter/synth/world.hpp"
#include "skillrouter/training/train.hpp"
#include "skillrouter/weak/pipeline.hpp"

using namespace skillrouter;
using namespace skillrouter::training;
using numeric::Rng;
using numeric::Tape;
using numeric::Tensor;

namespace {

const encoder::EncoderConfig kSmall{3, 2, 4, 3};

TrainConfig small_config(PersonalizationMode mode = PersonalizationMode::kNone) {
  TrainConfig cfg;
  cfg.mode = mode;
  cfg.encoder = kSmall;
  cfg.embedding_dim = static_cast<int>(kSmall.output_dim());
  cfg.min_word_count = 1;
  cfg.batch_size = 8;
  return cfg;
}

std::vector<std::string> skill_ids(int k) {
  std::vector<std::string> ids;
  for (int i = 0; i < k; ++i) ids.push_back("skill" + std::to_string(i));
  return ids;
}

// Skill j's commands all contain the word "w<j>", so the toy set is separable.
std::vector<corpus::Instance> toy_set(int k, int per_skill, std::uint64_t seed) {
  Rng rng(seed);
  const std::vector<std::string> filler = {"get", "me", "a", "the", "now"};
  std::vector<corpus::Instance> out;
  for (int j = 0; j < k; ++j) {
    for (int i = 0; i < per_skill; ++i) {
      corpus::Instance inst;
      inst.id = "i" + std::to_string(j) + "_" + std::to_string(i);
      inst.user_id = "u" + std::to_string(i % 4);
      inst.skill_id = "skill" + std::to_string(j);
      inst.tokens = {filler[rng.below(filler.size())], "w" + std::to_string(j)};
      if (rng.bernoulli(0.5)) inst.tokens.push_back(filler[rng.below(filler.size())]);
      out.push_back(inst);
    }
  }
  return out;
}

ProfileIndex toy_profiles(int k) {
  ProfileIndex p;
  for (int u = 0; u < 4; ++u) {
    for (int j = 0; j < k; ++j) {
      if ((j + u) % 2 == 0) p["u" + std::to_string(u)].push_back("skill" + std::to_string(j));
    }
  }
  return p;
}

Batch exact_batch(const Model& model, const std::vector<corpus::Instance>& data, const ProfileIndex& profiles) {
  const auto set = evaluation::resolve(model, data, profiles);
  NegativeSampler sampler(model.size(), NegativeSampler::skill_tokens(model, data), NegativeSampling::kExact, 8);
  std::vector<std::size_t> order(set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(3);
  return build_batch(set, order, 0, order.size(), sampler, rng);
}

}  // namespace

TEST_CASE("loss examples") {
  CHECK(positive_loss(1.0 - 1e-12) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(positive_loss(0.5) == doctest::Approx(std::log(2.0)));
  CHECK(positive_loss(std::exp(-1.0)) == doctest::Approx(1.0));
  CHECK(negative_loss({0.5}) == doctest::Approx(std::log(2.0)));
  CHECK(negative_loss({1.0 - 1e-12, 1.0 - 1e-12}) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(negative_loss({0.5, 0.5, 0.5}) == doctest::Approx(std::log(2.0)));
  CHECK_THROWS_AS(negative_loss({}), std::invalid_argument);
  CHECK_THROWS_AS(positive_loss(0.0), std::invalid_argument);
}

TEST_CASE("loss balancing: equal probabilities give equal terms at every k") {
  Rng rng(1);
  for (int c = 0; c < 1000; ++c) {
    const double p = rng.uniform(0.01, 0.99);
    const std::size_t k = 2 + rng.below(60);
    REQUIRE(negative_loss(std::vector<double>(k - 1, p)) == positive_loss(p));
  }
}

TEST_CASE("negative sampler") {
  const std::vector<std::set<std::string>> tokens = {{"a", "b"}, {"a"}, {"c"}, {"b", "d"}, {"e"}, {"f"}};
  SUBCASE("k=2 always returns the other domain") {
    Rng rng(1);
    for (auto mode : {NegativeSampling::kExact, NegativeSampling::kSampled}) {
      NegativeSampler s(2, {{"a"}, {"b"}}, mode, 1);
      auto d = s.draw(0, {"a"}, rng);
      CHECK(d.negatives == std::vector<int>{1});
      CHECK(d.weights == std::vector<double>{1.0});
    }
  }
  SUBCASE("exact mode returns all k-1 others") {
    NegativeSampler s(6, tokens, NegativeSampling::kExact, 2);
    Rng rng(1);
    for (int pos = 0; pos < 6; ++pos) {
      auto d = s.draw(pos, {"a"}, rng);
      CHECK(d.negatives.size() == 5);
      CHECK(std::find(d.negatives.begin(), d.negatives.end(), pos) == d.negatives.end());
    }
  }
  SUBCASE("confusable domains share a token") {
    NegativeSampler s(6, tokens, NegativeSampling::kSampled, 2);
    CHECK(s.confusable(0, {"a", "d"}) == std::vector<int>{1, 3});
    CHECK(s.confusable(2, {"zz"}).empty());
  }
  SUBCASE("sampled draws are distinct, exclude the positive and favour confusable domains") {
    NegativeSampler s(6, tokens, NegativeSampling::kSampled, 2);
    Rng rng(2);
    for (int c = 0; c < 1000; ++c) {
      auto d = s.draw(0, {"a", "d"}, rng);
      REQUIRE(d.negatives.size() == 2);
      REQUIRE(d.negatives[0] != d.negatives[1]);
      REQUIRE((d.negatives[0] == 1 || d.negatives[0] == 3));
      REQUIRE(d.negatives[1] != 0);
    }
  }
  SUBCASE("weighted sampled loss is an unbiased estimate of the exact negative loss") {
    const std::size_t k = 12;
    std::vector<std::set<std::string>> tk(k);
    for (std::size_t j = 0; j < k; ++j) tk[j] = {"t" + std::to_string(j % 5)};
    NegativeSampler s(k, tk, NegativeSampling::kSampled, 4);
    std::vector<double> p_ood(k);
    Rng rng(3);
    for (auto& p : p_ood) p = rng.uniform(0.05, 0.95);
    const int positive = 0;
    const Tokens sample = {"t0", "t2"};
    std::vector<double> all;
    for (std::size_t j = 1; j < k; ++j) all.push_back(p_ood[j]);
    const double exact = negative_loss(all);
    double mean = 0.0;
    const int reps = 10000;
    for (int r = 0; r < reps; ++r) {
      auto d = s.draw(positive, sample, rng);
      std::vector<double> picked;
      for (int j : d.negatives) picked.push_back(p_ood[static_cast<std::size_t>(j)]);
      mean += weighted_negative_loss(picked, d.weights);
    }
    mean /= reps;
    CHECK(std::abs(mean - exact) / exact < 0.01);
  }
}

TEST_CASE("sampled(8) negatives on an overlapping synthetic world mostly share a token") {
  synth::WorldConfig wc;
  wc.num_skills = 20;
  wc.num_categories = 4;
  wc.num_users = 40;
  wc.utterances_per_skill = 60;
  wc.commands_per_category = 30;
  const auto world = synth::generate_world(wc);
  const auto data = weak::build_weak_dataset(world.log, world.patterns, world.registry, {}).instances;
  REQUIRE(data.size() > 200);
  auto cfg = small_config();
  auto model = init_model(data, world.registry.ids(), cfg);
  NegativeSampler s(model.size(), NegativeSampler::skill_tokens(model, data), NegativeSampling::kSampled, 8);
  Rng rng(4);
  std::size_t shared = 0, total = 0;
  for (const auto& inst : data) {
    const int pos = model.skill_index(inst.skill_id);
    auto d = s.draw(pos, inst.tokens, rng);
    const auto conf = s.confusable(pos, inst.tokens);
    for (int j : d.negatives) {
      ++total;
      shared += std::find(conf.begin(), conf.end(), j) != conf.end();
    }
  }
  MESSAGE("confusable share " << static_cast<double>(shared) / static_cast<double>(total));
  CHECK(static_cast<double>(shared) / static_cast<double>(total) >= 0.4);
}

TEST_CASE("multitask gradients match finite differences in every mode") {
  const auto data = toy_set(4, 3, 1);
  const auto profiles = toy_profiles(4);
  for (auto mode : {PersonalizationMode::kNone, PersonalizationMode::kOneBit, PersonalizationMode::kAttention,
                    PersonalizationMode::kOneBitAndAttention}) {
    CAPTURE(personalization::to_string(mode));
    auto model = init_model(data, skill_ids(4), small_config(mode));
    for (auto& [path, p] : model.params) {
      for (auto& x : p.value.data()) x *= 5.0;
    }
    const auto batch = exact_batch(model, data, profiles);
    auto r = testing::gradient_check(model.params, model.params.paths(), [&](bool backward) {
      Tape tape;
      auto loss = multitask_graph(tape, model, batch);
      if (backward) tape.backward(loss);
      return tape.value(loss)[0];
    }, 6);
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("multiclass and binary losses match finite differences") {
  Rng rng(5);
  numeric::ParamStore store;
  store.add("W", Tensor({4, 6}));
  store.add("b", Tensor({4}));
  store.add("x", Tensor({3, 6}));
  for (auto& [path, p] : store) {
    for (auto& x : p.value.data()) x = rng.uniform(-1.5, 1.5);
  }
  const std::vector<int> rows = {0, 1, 2}, classes = {0, 3, 2}, labels = {1, 0, 1};
  auto run = [&](bool binary) -> std::function<double(bool)> {
    return [&, binary](bool backward) {
      Tape tape;
      const auto b = store.ref("b");
      const auto z = tape.affine(tape.gather(store.ref("x"), rows), store.ref("W"), &b);
      auto loss = binary ? tape.two_way_xent(tape.selu(z), labels) : tape.softmax_xent(z, classes);
      if (backward) tape.backward(loss);
      return tape.value(loss)[0];
    };
  };
  CHECK(testing::gradient_check(store, store.paths(), run(false)).max_rel_error < 1e-6);
  store.at("W").value = Tensor({2, 6});
  store.at("b").value = Tensor({2});
  store.at("W").grad = Tensor({2, 6});
  store.at("b").grad = Tensor({2});
  for (auto& x : store.at("W").value.data()) x = rng.uniform(-1.5, 1.5);
  CHECK(testing::gradient_check(store, store.paths(), run(true)).max_rel_error < 1e-6);
}

TEST_CASE("gradient flow: true head only from the positive term, other heads only from the negative term") {
  const auto data = toy_set(3, 2, 2);
  const auto profiles = toy_profiles(3);
  auto model = init_model(data, skill_ids(3), small_config(PersonalizationMode::kOneBit));
  auto batch = exact_batch(model, data, profiles);
  batch.utterances.resize(1);
  batch.labels.resize(1);
  batch.enabled.resize(1);
  batch.negatives.resize(1);
  const std::string true_head = Model::head_w_path(model.skills[static_cast<std::size_t>(batch.labels[0])]);
  auto grads = [&](const Batch& b) {
    model.params.zero_grad();
    Tape tape;
    tape.backward(multitask_graph(tape, model, b));
    std::map<std::string, Tensor> out;
    for (const auto& s : model.skills) out[s] = model.params.at(Model::head_w_path(s)).grad;
    return out;
  };
  const auto full = grads(batch);
  auto positive_only = batch;
  positive_only.negatives[0] = {};
  const auto pos = grads(positive_only);
  for (const auto& s : model.skills) {
    if (Model::head_w_path(s) == true_head) {
      CHECK(full.at(s) == pos.at(s));
      CHECK(numeric::kernels::dot(full.at(s).ptr(), full.at(s).ptr(), full.at(s).size()) > 0.0);
    } else {
      for (double g : pos.at(s).data()) REQUIRE(g == 0.0);
      CHECK(numeric::kernels::dot(full.at(s).ptr(), full.at(s).ptr(), full.at(s).size()) > 0.0);
    }
  }
}

TEST_CASE("frozen parameters receive no gradient") {
  const auto data = toy_set(3, 2, 2);
  auto model = init_model(data, skill_ids(3), small_config());
  for (const auto& p : model.shared_encoder().param_paths()) model.params.at(p).trainable = false;
  Tape tape;
  tape.backward(multitask_graph(tape, model, exact_batch(model, data, toy_profiles(3))));
  for (const auto& p : model.shared_encoder().param_paths()) {
    for (double g : model.params.at(p).grad.data()) REQUIRE(g == 0.0);
  }
}

TEST_CASE("multiclass_forward") {
  CHECK(multiclass_forward(Tensor::vector({1, 2}), Tensor({1, 2}), Tensor({1}))[0] == 1.0);
  auto uniform = multiclass_forward(Tensor::vector({1, 2, 3}), Tensor({4, 3}), Tensor({4}));
  for (double p : uniform.data()) CHECK(p == doctest::Approx(0.25));
  Rng rng(6);
  Tensor h({5}), w({3, 5}), b({3});
  for (auto* t : {&h, &w, &b}) {
    for (auto& x : t->data()) x = rng.uniform(-1, 1);
  }
  std::vector<double> z(3), e(3);
  double sum = 0.0;
  for (int k = 0; k < 3; ++k) {
    z[k] = b[k];
    for (int d = 0; d < 5; ++d) z[k] += w.at(k, d) * h[d];
    e[k] = std::exp(z[k]);
    sum += e[k];
  }
  auto p = multiclass_forward(h, w, b);
  for (int k = 0; k < 3; ++k) CHECK(p[k] == doctest::Approx(e[k] / sum).epsilon(1e-12));
  CHECK_THROWS_AS(multiclass_forward(h, Tensor({3, 4}), b), numeric::ShapeError);
}

TEST_CASE("zero epochs leave the initialization untouched") {
  const auto data = toy_set(3, 4, 3);
  auto cfg = small_config();
  cfg.epochs = 0;
  auto init = init_model(data, skill_ids(3), cfg);
  auto r = train(data, {}, skill_ids(3), toy_profiles(3), cfg);
  CHECK(r.metrics.empty());
  CHECK(r.model.params.values_equal(init.params));
}

TEST_CASE("training is deterministic per seed") {
  const auto data = toy_set(3, 6, 4);
  for (auto variant : {Variant::kMultiTask, Variant::kMultiClass, Variant::kBinary}) {
    auto cfg = small_config(variant == Variant::kMultiTask ? PersonalizationMode::kOneBitAndAttention
                                                           : PersonalizationMode::kNone);
    cfg.variant = variant;
    cfg.epochs = 2;
    cfg.negatives = NegativeSampling::kSampled;
    cfg.sampled_q = 1;
    auto a = train(data, data, skill_ids(3), toy_profiles(3), cfg);
    auto b = train(data, data, skill_ids(3), toy_profiles(3), cfg);
    CHECK(a.model.params.values_equal(b.model.params));
    CHECK(a.metrics[1].train_loss == b.metrics[1].train_loss);
    cfg.seed = 2;
    auto c = train(data, data, skill_ids(3), toy_profiles(3), cfg);
    CHECK_FALSE(a.model.params.values_equal(c.model.params));
  }
}

TEST_CASE("single skill on separable data converges below 0.01 within 50 epochs") {
  const auto data = toy_set(1, 32, 5);
  auto cfg = small_config();
  cfg.epochs = 50;
  cfg.adam.lr = 1e-2;
  auto r = train(data, {}, skill_ids(1), {}, cfg);
  MESSAGE("final loss " << r.metrics.back().train_loss);
  CHECK(r.metrics.back().train_loss < 0.01);
  CHECK(std::isnan(r.metrics.back().val_top1));
}

TEST_CASE("training loss decreases on a separable toy set") {
  const auto data = toy_set(4, 24, 6);
  for (auto variant : {Variant::kMultiTask, Variant::kMultiClass, Variant::kBinary}) {
    CAPTURE(personalization::to_string(variant));
    auto cfg = small_config(variant == Variant::kMultiTask ? PersonalizationMode::kAttention
                                                           : PersonalizationMode::kNone);
    cfg.variant = variant;
    cfg.epochs = 11;
    cfg.adam.lr = 1e-2;
    auto r = train(data, data, skill_ids(4), toy_profiles(4), cfg);
    int decreases = 0;
    for (std::size_t e = 1; e < r.metrics.size(); ++e) decreases += r.metrics[e].train_loss < r.metrics[e - 1].train_loss;
    CHECK(decreases >= 8);
    CHECK(r.metrics.back().val_top1 == 1.0);
  }
}

TEST_CASE("epoch metrics serialize") {
  EpochMetrics m{3, 0.5, 0.75, 1.25};
  auto j = to_json(m);
  CHECK(j["epoch"] == 3);
  CHECK(j["val_top1"] == 0.75);
  m.val_top1 = std::nan("");
  CHECK(to_json(m)["val_top1"].is_null());
}

TEST_CASE("config validation and divergence") {
  auto cfg = small_config();
  cfg.dropout = 0.1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = small_config(PersonalizationMode::kAttention);
  cfg.variant = Variant::kMultiClass;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  const auto data = toy_set(2, 4, 7);
  auto model = init_model(data, skill_ids(2), small_config());
  model.params.at(Model::head_w_path("skill0")).value[0] = std::nan("");
  CHECK_THROWS_AS(fit(model, data, {}, {}, small_config()), DivergenceError);
}
