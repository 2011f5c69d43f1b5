#include "skillrouter/encoder/encoder.hpp"

#include <stdexcept>
#include <unordered_map>

#include "skillrouter/numeric/lstm.hpp"

namespace skillrouter::encoder {

using numeric::LstmParams;
using numeric::LstmRefs;
using numeric::ParamRef;
using numeric::ParamStore;
using numeric::Tape;
using numeric::Tensor;
using numeric::Var;

void EncoderConfig::validate() const {
  if (char_emb_dim < 1 || char_hidden < 1 || word_emb_dim < 1 || word_hidden < 1) {
    throw std::invalid_argument("encoder dimensions must be positive");
  }
}

Encoder::Encoder(EncoderConfig config, WordVocab words, std::string prefix)
    : config_(config), words_(std::move(words)), prefix_(std::move(prefix)) {
  config_.validate();
  if (prefix_.empty()) throw std::invalid_argument("encoder prefix must be non-empty");
}

void Encoder::init_params(ParamStore& store, numeric::Rng& rng) const {
  const auto ce = static_cast<std::size_t>(config_.char_emb_dim);
  const auto ch = static_cast<std::size_t>(config_.char_hidden);
  const auto we = static_cast<std::size_t>(config_.word_emb_dim);
  const auto wh = static_cast<std::size_t>(config_.word_hidden);
  Tensor char_emb({chars_.size(), ce});
  numeric::init_uniform(char_emb, rng, 0.1);
  store.add(path("char_emb"), std::move(char_emb));
  numeric::add_lstm(store, path("char_fw"), LstmParams::init(ce, ch, rng));
  numeric::add_lstm(store, path("char_bw"), LstmParams::init(ce, ch, rng));
  Tensor word_emb({words_.size(), we});
  numeric::init_uniform(word_emb, rng, 0.1);
  store.add(path("word_emb"), std::move(word_emb));
  numeric::add_lstm(store, path("word_fw"), LstmParams::init(config_.word_dim(), wh, rng));
  numeric::add_lstm(store, path("word_bw"), LstmParams::init(config_.word_dim(), wh, rng));
}

std::vector<std::string> Encoder::param_paths() const {
  std::vector<std::string> out = {path("char_emb"), path("word_emb")};
  for (const char* lstm : {"char_fw", "char_bw", "word_fw", "word_bw"}) {
    for (const char* part : {"wx", "wh", "b"}) out.push_back(path(lstm) + "/" + part);
  }
  return out;
}

namespace {

template <class Store, class Get>
EncoderRefs make_refs(const Encoder& enc, Store& store, Get get) {
  auto lstm = [&](const std::string& name) {
    return LstmRefs{get(store, enc.path(name) + "/wx"), get(store, enc.path(name) + "/wh"),
                    get(store, enc.path(name) + "/b")};
  };
  return {get(store, enc.path("char_emb")), lstm("char_fw"), lstm("char_bw"),
          get(store, enc.path("word_emb")), lstm("word_fw"), lstm("word_bw")};
}

}  // namespace

EncoderRefs Encoder::refs(ParamStore& store) const {
  return make_refs(*this, store, [](ParamStore& s, const std::string& p) { return s.ref(p); });
}

EncoderRefs Encoder::frozen_refs(const ParamStore& store) const {
  return make_refs(*this, store,
                   [](const ParamStore& s, const std::string& p) { return s.cref(p); });
}

EncodedBatch Encoder::encode(Tape& tape, const EncoderRefs& refs,
                             const std::vector<std::vector<std::string>>& utterances) const {
  if (utterances.empty()) throw std::invalid_argument("encode: empty batch");
  if (refs.word_emb.value->rows() != words_.size()) {
    throw std::invalid_argument("encode: word embedding table does not match the vocabulary");
  }

  // Distinct words in first-seen order and each token's slot among them.
  std::unordered_map<std::string, int> slot;
  std::vector<const std::string*> distinct;
  std::vector<int> token_slots;
  EncodedBatch out;
  for (const auto& tokens : utterances) {
    if (tokens.empty()) throw std::invalid_argument("encode: empty utterance");
    out.lengths.push_back(static_cast<int>(tokens.size()));
    for (const auto& t : tokens) {
      if (t.empty()) throw std::invalid_argument("encode: empty token");
      auto [it, inserted] = slot.emplace(t, static_cast<int>(distinct.size()));
      if (inserted) distinct.push_back(&it->first);
      token_slots.push_back(it->second);
    }
  }

  std::vector<int> char_ids, char_lengths, last_rows, first_rows, word_ids;
  for (const std::string* w : distinct) {
    first_rows.push_back(static_cast<int>(char_ids.size()));
    for (char c : *w) char_ids.push_back(chars_.index(c));
    last_rows.push_back(static_cast<int>(char_ids.size()) - 1);
    char_lengths.push_back(static_cast<int>(w->size()));
    word_ids.push_back(words_.index(*w));
  }

  const Var ce = tape.gather(refs.char_emb, char_ids);
  const Var cf = tape.lstm_sequence(ce, refs.char_fw, char_lengths, false);
  const Var cb = tape.lstm_sequence(ce, refs.char_bw, char_lengths, true);
  const Var parts[] = {tape.gather(cf, last_rows), tape.gather(cb, first_rows),
                       tape.gather(refs.word_emb, word_ids)};
  const Var v_distinct = tape.concat_cols(parts);
  out.v = tape.gather(v_distinct, token_slots);
  const Var hf = tape.lstm_sequence(out.v, refs.word_fw, out.lengths, false);
  const Var hb = tape.lstm_sequence(out.v, refs.word_bw, out.lengths, true);
  const Var states[] = {hf, hb};
  out.h = tape.concat_cols(states);
  out.h_bar = tape.segment_sum(out.h, out.lengths);
  return out;
}

Tensor encode_word(const Encoder& enc, const ParamStore& store, const std::string& token) {
  if (token.empty()) throw std::invalid_argument("encode_word: empty token");
  Tape tape;
  auto batch = enc.encode(tape, enc.frozen_refs(store), {{token}});
  const Tensor& v = tape.value(batch.v);
  return Tensor::vector({v.ptr(), v.ptr() + v.size()});
}

UtteranceEncoding encode_utterance(const Encoder& enc, const ParamStore& store,
                                   const std::vector<std::string>& tokens) {
  if (tokens.empty()) throw std::invalid_argument("encode_utterance: empty utterance");
  Tape tape;
  auto batch = enc.encode(tape, enc.frozen_refs(store), {tokens});
  const Tensor& hb = tape.value(batch.h_bar);
  return {tape.value(batch.h), Tensor::vector({hb.ptr(), hb.ptr() + hb.size()})};
}

Tensor encode_h_bar(const Encoder& enc, const ParamStore& store,
                    const std::vector<std::vector<std::string>>& utterances, std::size_t chunk) {
  if (chunk == 0) throw std::invalid_argument("encode_h_bar: chunk must be positive");
  const std::size_t d = enc.config().output_dim();
  Tensor out({utterances.size(), d});
  const EncoderRefs refs = enc.frozen_refs(store);
  for (std::size_t begin = 0; begin < utterances.size(); begin += chunk) {
    const std::size_t end = std::min(utterances.size(), begin + chunk);
    std::vector<std::vector<std::string>> part(utterances.begin() + static_cast<long>(begin),
                                               utterances.begin() + static_cast<long>(end));
    Tape tape;
    const Tensor& hb = tape.value(enc.encode(tape, refs, part).h_bar);
    std::copy_n(hb.ptr(), hb.size(), out.row(begin));
  }
  return out;
}

}  // namespace skillrouter::encoder
