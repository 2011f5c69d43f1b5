#include "skillrouter/personalization/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "skillrouter/numeric/activations.hpp"
#include "skillrouter/numeric/kernels.hpp"
#include "skillrouter/numeric/tape.hpp"

namespace skillrouter::personalization {

using numeric::ParamRef;
using numeric::Tape;
using numeric::Tensor;
using numeric::Var;

std::string to_string(PersonalizationMode mode) {
  switch (mode) {
    case PersonalizationMode::kNone: return "none";
    case PersonalizationMode::kOneBit: return "one_bit";
    case PersonalizationMode::kAttention: return "attention";
    case PersonalizationMode::kOneBitAndAttention: return "one_bit_and_attention";
  }
  return "none";
}

std::string to_string(Variant variant) {
  switch (variant) {
    case Variant::kBinary: return "binary";
    case Variant::kMultiClass: return "multiclass";
    case Variant::kMultiTask: return "multitask";
  }
  return "multitask";
}

PersonalizationMode parse_mode(const std::string& s) {
  for (auto m : {PersonalizationMode::kNone, PersonalizationMode::kOneBit,
                 PersonalizationMode::kAttention, PersonalizationMode::kOneBitAndAttention}) {
    if (to_string(m) == s) return m;
  }
  throw std::invalid_argument("unknown personalization mode '" + s + "'");
}

Variant parse_variant(const std::string& s) {
  for (auto v : {Variant::kBinary, Variant::kMultiClass, Variant::kMultiTask}) {
    if (to_string(v) == s) return v;
  }
  throw std::invalid_argument("unknown model variant '" + s + "'");
}

std::size_t ModelSpec::feature_dim() const {
  return encoder.output_dim() + (uses_attention(mode) ? static_cast<std::size_t>(embedding_dim) : 0);
}

void ModelSpec::validate() const {
  encoder.validate();
  if (variant != Variant::kMultiTask && mode != PersonalizationMode::kNone) {
    throw std::invalid_argument("personalization requires the multitask variant");
  }
  if (uses_attention(mode) && static_cast<std::size_t>(embedding_dim) != encoder.output_dim()) {
    throw std::invalid_argument("embedding dim " + std::to_string(embedding_dim) +
                                " must equal the encoder output width " +
                                std::to_string(encoder.output_dim()));
  }
}

Model Model::create(ModelSpec spec, std::vector<std::string> skills, encoder::WordVocab vocab,
                    std::uint64_t seed) {
  spec.validate();
  if (skills.empty()) throw std::invalid_argument("model needs at least one skill");
  Model model;
  model.spec = spec;
  model.vocab = std::move(vocab);
  numeric::Rng rng(seed);
  const std::size_t h = spec.encoder.output_dim();
  switch (spec.variant) {
    case Variant::kMultiTask: {
      model.shared_encoder().init_params(model.params, rng);
      for (const auto& s : skills) model.add_skill(s, rng);
      break;
    }
    case Variant::kMultiClass: {
      for (std::size_t i = 0; i < skills.size(); ++i) {
        for (std::size_t j = 0; j < i; ++j) {
          if (skills[i] == skills[j]) throw std::invalid_argument("duplicate skill " + skills[i]);
        }
      }
      model.skills = skills;
      model.shared_encoder().init_params(model.params, rng);
      Tensor w({skills.size(), h});
      numeric::init_uniform(w, rng, 0.1);
      model.params.add("multiclass/W", std::move(w));
      model.params.add("multiclass/b", Tensor({skills.size()}));
      break;
    }
    case Variant::kBinary: {
      for (const auto& s : skills) {
        if (model.skill_index(s) >= 0) throw std::invalid_argument("duplicate skill " + s);
        model.skills.push_back(s);
        numeric::Rng skill_rng = rng.fork(model.skills.size());
        model.binary_encoder(s).init_params(model.params, skill_rng);
        Tensor w({2, h});
        numeric::init_uniform(w, skill_rng, 0.1);
        model.params.add("binary/" + s + "/W", std::move(w));
        model.params.add("binary/" + s + "/b", Tensor({2}));
      }
      break;
    }
  }
  return model;
}

int Model::skill_index(const std::string& skill_id) const {
  auto it = std::find(skills.begin(), skills.end(), skill_id);
  return it == skills.end() ? -1 : static_cast<int>(it - skills.begin());
}

encoder::Encoder Model::shared_encoder() const { return encoder::Encoder(spec.encoder, vocab, "enc"); }

encoder::Encoder Model::binary_encoder(const std::string& skill_id) const {
  return encoder::Encoder(spec.encoder, vocab, "binary/" + skill_id + "/enc");
}

std::string Model::embedding_path(const std::string& skill_id) { return "domain/" + skill_id + "/emb"; }
std::string Model::head_w_path(const std::string& skill_id) { return "head/" + skill_id + "/W"; }
std::string Model::head_b_path(const std::string& skill_id) { return "head/" + skill_id + "/b"; }

void Model::add_skill(const std::string& skill_id, numeric::Rng& rng) {
  if (spec.variant != Variant::kMultiTask) {
    throw std::invalid_argument("only multitask models accept new skills");
  }
  if (skill_id.empty()) throw std::invalid_argument("empty skill id");
  if (skill_index(skill_id) >= 0) throw std::invalid_argument("skill '" + skill_id + "' already exists");
  if (uses_attention(spec.mode)) {
    Tensor e({static_cast<std::size_t>(spec.embedding_dim)});
    numeric::init_uniform(e, rng, 0.1);
    params.add(embedding_path(skill_id), std::move(e));
  }
  Tensor w({2, spec.feature_dim() + (uses_flag(spec.mode) ? 1 : 0)});
  numeric::init_uniform(w, rng, 0.1);
  params.add(head_w_path(skill_id), std::move(w));
  params.add(head_b_path(skill_id), Tensor({2}));
  skills.push_back(skill_id);
}

std::vector<std::string> Model::skill_param_paths(const std::string& skill_id) const {
  std::vector<std::string> out;
  if (spec.variant == Variant::kMultiTask) {
    if (uses_attention(spec.mode)) out.push_back(embedding_path(skill_id));
    out.push_back(head_w_path(skill_id));
    out.push_back(head_b_path(skill_id));
  } else if (spec.variant == Variant::kBinary) {
    for (const auto& p : binary_encoder(skill_id).param_paths()) out.push_back(p);
    out.push_back("binary/" + skill_id + "/W");
    out.push_back("binary/" + skill_id + "/b");
  }
  return out;
}

std::vector<int> enabled_indices(const Model& model, const std::vector<std::string>& enabled) {
  std::vector<int> out;
  out.reserve(enabled.size());
  for (const auto& s : enabled) {
    const int i = model.skill_index(s);
    if (i < 0) throw std::invalid_argument("profile names unknown skill '" + s + "'");
    out.push_back(i);
  }
  return out;
}

AttentionResult attend(const Tensor& h_bar, const std::vector<const Tensor*>& embeddings) {
  if (embeddings.empty()) throw std::invalid_argument("attend: empty enabled list");
  const std::size_t m = h_bar.size();
  std::vector<double> scores;
  for (const Tensor* e : embeddings) {
    if (e->size() != m) throw numeric::ShapeError("attend: embedding width mismatch");
    scores.push_back(numeric::kernels::dot(h_bar.ptr(), e->ptr(), m));
  }
  AttentionResult out{numeric::softmax(scores), Tensor({m})};
  for (std::size_t j = 0; j < embeddings.size(); ++j) {
    numeric::kernels::axpy(out.weights[j], embeddings[j]->ptr(), out.context.ptr(), m);
  }
  return out;
}

Tensor build_features(const Tensor& h_bar, PersonalizationMode mode, const Tensor* context,
                      bool enabled) {
  std::vector<double> z(h_bar.ptr(), h_bar.ptr() + h_bar.size());
  if (uses_attention(mode)) {
    if (context == nullptr || context->size() != h_bar.size()) {
      throw numeric::ShapeError("build_features: attention context missing or mis-sized");
    }
    z.insert(z.end(), context->ptr(), context->ptr() + context->size());
  }
  if (uses_flag(mode)) z.push_back(enabled ? 1.0 : 0.0);
  return Tensor::vector(std::move(z));
}

Tensor head_forward(const Tensor& z_bar, const Tensor& w, const Tensor& b) {
  if (w.rank() != 2 || w.rows() != 2 || w.cols() != z_bar.size() || b.size() != 2) {
    throw numeric::ShapeError("head_forward: W " + w.shape_string() + " and b " + b.shape_string() +
                              " do not fit features of width " + std::to_string(z_bar.size()));
  }
  Tensor out({2});
  for (std::size_t k = 0; k < 2; ++k) {
    out[k] = numeric::selu(b[k] + numeric::kernels::dot(w.row(k), z_bar.ptr(), z_bar.size()));
  }
  return out;
}

double domain_probability(const Tensor& z) {
  if (z.size() != 2) throw numeric::ShapeError("domain_probability: expected two outputs");
  return numeric::sigmoid(z[0] - z[1]);
}

namespace {

void score_multitask(const Model& model, const std::vector<Tokens>& chunk,
                     const std::vector<std::vector<int>>& enabled, std::size_t row0, ScoreTable& out) {
  const auto& store = model.params;
  const auto enc = model.shared_encoder();
  const PersonalizationMode mode = model.spec.mode;
  const std::size_t k = model.size();
  Tape tape;
  const Var h_bar = enc.encode(tape, enc.frozen_refs(store), chunk).h_bar;
  Var features = h_bar;
  if (uses_attention(mode)) {
    std::vector<ParamRef> embs;
    for (const auto& s : model.skills) embs.push_back(store.cref(Model::embedding_path(s)));
    const Var ctx = tape.attend(h_bar, embs, enabled);
    for (std::size_t i = 0; i < chunk.size(); ++i) out.attention[row0 + i] = tape.attention_weights(ctx)[i];
    const Var parts[] = {h_bar, ctx};
    features = tape.concat_cols(parts);
  }
  std::vector<ParamRef> ws, bs;
  for (const auto& s : model.skills) {
    ws.push_back(store.cref(Model::head_w_path(s)));
    bs.push_back(store.cref(Model::head_b_path(s)));
  }
  std::vector<numeric::HeadPair> pairs;
  pairs.reserve(chunk.size() * k);
  for (std::size_t i = 0; i < chunk.size(); ++i) {
    std::vector<char> on(k, 0);
    for (int j : enabled[i]) on[static_cast<std::size_t>(j)] = 1;
    for (std::size_t j = 0; j < k; ++j) {
      pairs.push_back({static_cast<int>(i), static_cast<int>(j), on[j] ? 1.0 : 0.0});
    }
  }
  const Tensor& z = tape.value(tape.selu(tape.heads(features, ws, bs, pairs, uses_flag(mode))));
  for (std::size_t q = 0; q < pairs.size(); ++q) {
    out.p.at(row0 + static_cast<std::size_t>(pairs[q].sample), static_cast<std::size_t>(pairs[q].head)) =
        numeric::sigmoid(z.at(q, 0) - z.at(q, 1));
  }
}

void score_multiclass(const Model& model, const std::vector<Tokens>& chunk, std::size_t row0,
                      ScoreTable& out) {
  const auto enc = model.shared_encoder();
  Tape tape;
  const Var h_bar = enc.encode(tape, enc.frozen_refs(model.params), chunk).h_bar;
  const ParamRef b = model.params.cref("multiclass/b");
  const Tensor& logits = tape.value(tape.affine(h_bar, model.params.cref("multiclass/W"), &b));
  for (std::size_t i = 0; i < chunk.size(); ++i) {
    auto p = numeric::softmax(std::span<const double>(logits.row(i), logits.cols()));
    std::copy(p.begin(), p.end(), out.p.row(row0 + i));
  }
}

void score_binary(const Model& model, const std::vector<Tokens>& chunk, std::size_t row0,
                  ScoreTable& out) {
  for (std::size_t j = 0; j < model.size(); ++j) {
    const auto& s = model.skills[j];
    const auto enc = model.binary_encoder(s);
    Tape tape;
    const Var h_bar = enc.encode(tape, enc.frozen_refs(model.params), chunk).h_bar;
    const ParamRef b = model.params.cref("binary/" + s + "/b");
    const Tensor& z =
        tape.value(tape.selu(tape.affine(h_bar, model.params.cref("binary/" + s + "/W"), &b)));
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      out.p.at(row0 + i, j) = numeric::sigmoid(z.at(i, 0) - z.at(i, 1));
    }
  }
}

}  // namespace

ScoreTable score(const Model& model, const std::vector<Tokens>& utterances,
                 const std::vector<std::vector<int>>& enabled, std::size_t chunk) {
  if (enabled.size() != utterances.size()) {
    throw std::invalid_argument("score: one enabled list per utterance required");
  }
  if (chunk == 0) throw std::invalid_argument("score: chunk must be positive");
  ScoreTable out;
  out.p = Tensor({utterances.size(), model.size()});
  if (uses_attention(model.spec.mode)) out.attention.resize(utterances.size());
  for (std::size_t begin = 0; begin < utterances.size(); begin += chunk) {
    const std::size_t end = std::min(utterances.size(), begin + chunk);
    const std::vector<Tokens> part(utterances.begin() + static_cast<long>(begin),
                                   utterances.begin() + static_cast<long>(end));
    switch (model.spec.variant) {
      case Variant::kMultiTask: {
        const std::vector<std::vector<int>> lists(enabled.begin() + static_cast<long>(begin),
                                                  enabled.begin() + static_cast<long>(end));
        score_multitask(model, part, lists, begin, out);
        break;
      }
      case Variant::kMultiClass: score_multiclass(model, part, begin, out); break;
      case Variant::kBinary: score_binary(model, part, begin, out); break;
    }
  }
  return out;
}

std::vector<Ranked> rank(const Model& model, const double* scores, const std::vector<int>& enabled,
                         Scope scope, std::size_t top_n) {
  std::vector<int> candidates;
  if (scope == Scope::kEnabled && !enabled.empty()) {
    candidates = enabled;
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  } else {
    candidates.resize(model.size());
    for (std::size_t j = 0; j < model.size(); ++j) candidates[j] = static_cast<int>(j);
  }
  std::vector<Ranked> out;
  out.reserve(candidates.size());
  for (int j : candidates) out.push_back({model.skills[static_cast<std::size_t>(j)], scores[j]});
  auto before = [](const Ranked& a, const Ranked& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.skill_id < b.skill_id;
  };
  const std::size_t n = std::min(top_n, out.size());
  std::partial_sort(out.begin(), out.begin() + static_cast<long>(n), out.end(), before);
  out.resize(n);
  return out;
}

std::vector<Ranked> classify(const Model& model, const Tokens& utterance,
                             const std::vector<std::string>& profile, Scope scope,
                             std::size_t top_n) {
  if (utterance.empty()) throw std::invalid_argument("classify: empty utterance");
  const auto enabled = enabled_indices(model, profile);
  const auto table = score(model, {utterance}, {enabled});
  return rank(model, table.p.row(0), enabled, scope, top_n);
}

}  // namespace skillrouter::personalization
