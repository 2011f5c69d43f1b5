#pragma once

#include <string>
#include <vector>

#include "skillrouter/encoder/vocab.hpp"
#include "skillrouter/numeric/param_store.hpp"
#include "skillrouter/numeric/rng.hpp"
#include "skillrouter/numeric/tape.hpp"

namespace skillrouter::encoder {

struct EncoderConfig {
  int char_emb_dim = 25;
  int char_hidden = 25;
  int word_emb_dim = 100;
  int word_hidden = 100;

  // v_i = f_last (+) b_first (+) e_w
  std::size_t word_dim() const { return static_cast<std::size_t>(2 * char_hidden + word_emb_dim); }
  // h_i = f_i (+) b_i, and h_bar has the same width
  std::size_t output_dim() const { return static_cast<std::size_t>(2 * word_hidden); }
  void validate() const;
};

struct EncoderRefs {
  numeric::ParamRef char_emb;
  numeric::LstmRefs char_fw, char_bw;
  numeric::ParamRef word_emb;
  numeric::LstmRefs word_fw, word_bw;
};

struct EncodedBatch {
  numeric::Var v;      // [tokens x word_dim], character-sensitive word vectors
  numeric::Var h;      // [tokens x output_dim], contextual states
  numeric::Var h_bar;  // [utterances x output_dim], unnormalized sums
  std::vector<int> lengths;
};

// Hierarchical char/word BiLSTM encoder. Parameters live in a ParamStore
// under `prefix`, so several encoders can share one store.
class Encoder {
 public:
  Encoder(EncoderConfig config, WordVocab words, std::string prefix = "enc");

  const EncoderConfig& config() const { return config_; }
  const WordVocab& words() const { return words_; }
  const CharVocab& chars() const { return chars_; }
  const std::string& prefix() const { return prefix_; }
  std::string path(const std::string& name) const { return prefix_ + "/" + name; }

  // Embeddings uniform(-0.1, 0.1); LSTMs per LstmParams::init.
  void init_params(numeric::ParamStore& store, numeric::Rng& rng) const;
  std::vector<std::string> param_paths() const;

  EncoderRefs refs(numeric::ParamStore& store) const;
  EncoderRefs frozen_refs(const numeric::ParamStore& store) const;

  // Each distinct word in the batch runs through the char BiLSTM once.
  EncodedBatch encode(numeric::Tape& tape, const EncoderRefs& refs,
                      const std::vector<std::vector<std::string>>& utterances) const;

 private:
  EncoderConfig config_;
  WordVocab words_;
  CharVocab chars_;
  std::string prefix_;
};

numeric::Tensor encode_word(const Encoder& enc, const numeric::ParamStore& store,
                            const std::string& token);

struct UtteranceEncoding {
  numeric::Tensor h;      // [n x output_dim]
  numeric::Tensor h_bar;  // [output_dim]
};
UtteranceEncoding encode_utterance(const Encoder& enc, const numeric::ParamStore& store,
                                   const std::vector<std::string>& tokens);

// h_bar rows for many utterances, evaluated in chunks without gradients.
numeric::Tensor encode_h_bar(const Encoder& enc, const numeric::ParamStore& store,
                             const std::vector<std::vector<std::string>>& utterances,
                             std::size_t chunk = 64);

}  // namespace skillrouter::encoder
