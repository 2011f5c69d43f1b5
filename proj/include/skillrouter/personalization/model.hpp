#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "skillrouter/corpus/types.hpp"
#include "skillrouter/encoder/encoder.hpp"
#include "skillrouter/numeric/param_store.hpp"

namespace skillrouter::personalization {

using Tokens = std::vector<std::string>;

enum class PersonalizationMode { kNone, kOneBit, kAttention, kOneBitAndAttention };
enum class Variant { kBinary, kMultiClass, kMultiTask };

std::string to_string(PersonalizationMode mode);
std::string to_string(Variant variant);
PersonalizationMode parse_mode(const std::string& s);
Variant parse_variant(const std::string& s);

inline bool uses_attention(PersonalizationMode m) {
  return m == PersonalizationMode::kAttention || m == PersonalizationMode::kOneBitAndAttention;
}
inline bool uses_flag(PersonalizationMode m) {
  return m == PersonalizationMode::kOneBit || m == PersonalizationMode::kOneBitAndAttention;
}

struct ModelSpec {
  Variant variant = Variant::kMultiTask;
  PersonalizationMode mode = PersonalizationMode::kNone;
  encoder::EncoderConfig encoder;
  int embedding_dim = 200;  // m; must equal the encoder output width

  // Head input width excluding the flag: h_bar, plus S under attention.
  std::size_t feature_dim() const;
  void validate() const;
};

// Parameters and metadata of one trained router. The skill order fixes head
// indexing. Layout in the store:
//   enc/...                         shared encoder (multiclass, multitask)
//   domain/<skill>/emb  [m]         domain embedding (attention modes)
//   head/<skill>/W [2 x D], /b [2]  per-skill head (multitask)
//   multiclass/W [k x 200], /b [k]  softmax layer (multiclass)
//   binary/<skill>/enc/...          per-skill encoder (binary)
//   binary/<skill>/W [2 x 200], /b  per-skill head (binary)
struct Model {
  ModelSpec spec;
  std::vector<std::string> skills;
  encoder::WordVocab vocab;
  numeric::ParamStore params;

  static Model create(ModelSpec spec, std::vector<std::string> skills, encoder::WordVocab vocab,
                      std::uint64_t seed);

  int skill_index(const std::string& skill_id) const;  // -1 when unknown
  std::size_t size() const { return skills.size(); }

  encoder::Encoder shared_encoder() const;
  encoder::Encoder binary_encoder(const std::string& skill_id) const;

  static std::string embedding_path(const std::string& skill_id);
  static std::string head_w_path(const std::string& skill_id);
  static std::string head_b_path(const std::string& skill_id);

  // Adds the embedding and head for a new skill (multitask only). Throws on
  // a duplicate id.
  void add_skill(const std::string& skill_id, numeric::Rng& rng);

  // Parameter paths owned by one skill (embedding when present, head).
  std::vector<std::string> skill_param_paths(const std::string& skill_id) const;
};

// Skill indices for a profile, in profile order. Unknown ids throw.
std::vector<int> enabled_indices(const Model& model, const std::vector<std::string>& enabled);

struct AttentionResult {
  std::vector<double> weights;  // over the enabled list, in order
  numeric::Tensor context;      // S, [m]
};

// Dot-product attention of one h_bar over the listed embeddings.
AttentionResult attend(const numeric::Tensor& h_bar, const std::vector<const numeric::Tensor*>& embeddings);

// z_bar = h_bar [(+) S] [(+) flag] per mode.
numeric::Tensor build_features(const numeric::Tensor& h_bar, PersonalizationMode mode,
                               const numeric::Tensor* context, bool enabled);

// SeLU(W z_bar + b); index 0 = IND, 1 = OOD.
numeric::Tensor head_forward(const numeric::Tensor& z_bar, const numeric::Tensor& w,
                             const numeric::Tensor& b);

// Two-way softmax of the head output: exp(z_IND) / (exp(z_IND) + exp(z_OOD)).
double domain_probability(const numeric::Tensor& z);

struct ScoreTable {
  numeric::Tensor p;  // [samples x skills]; p_IND (multitask, binary) or softmax (multiclass)
  // Attention weights over each sample's enabled list (attention modes only).
  std::vector<std::vector<double>> attention;
};

// Scores every skill for every utterance. `enabled[i]` lists skill indices
// enabled by the user behind utterance i.
ScoreTable score(const Model& model, const std::vector<Tokens>& utterances,
                 const std::vector<std::vector<int>>& enabled, std::size_t chunk = 64);

enum class Scope { kFull, kEnabled };

struct Ranked {
  std::string skill_id;
  double score = 0.0;
};

// Descending by score, ties by skill_id. Under kEnabled only enabled skills
// are ranked; an empty enabled list falls back to kFull.
std::vector<Ranked> rank(const Model& model, const double* scores, const std::vector<int>& enabled,
                         Scope scope, std::size_t top_n);

std::vector<Ranked> classify(const Model& model, const Tokens& utterance,
                             const std::vector<std::string>& profile, Scope scope,
                             std::size_t top_n);

}  // namespace skillrouter::personalization
