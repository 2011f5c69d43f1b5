#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "skillrouter/io/checkpoint.hpp"
#include "skillrouter/io/run_config.hpp"

using namespace skillrouter;
using namespace skillrouter::io;
using personalization::ModelSpec;
using personalization::PersonalizationMode;
using personalization::Variant;

namespace {

Checkpoint small_checkpoint(Variant variant, PersonalizationMode mode) {
  ModelSpec spec;
  spec.variant = variant;
  spec.mode = mode;
  spec.encoder = {3, 2, 4, 3};
  spec.embedding_dim = 6;  // attention needs the encoder output width
  Checkpoint ckpt{personalization::Model::create(spec, {"a", "b", "c"}, encoder::WordVocab({"play", "jazz", "ride"}), 7),
                  {{"note", "x"}}};
  return ckpt;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("skillrouter_io_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("checkpoint round trip is byte identical") {
  const auto dir = temp_dir("roundtrip");
  for (auto variant : {Variant::kBinary, Variant::kMultiClass, Variant::kMultiTask}) {
    for (auto mode : {PersonalizationMode::kNone, PersonalizationMode::kOneBit, PersonalizationMode::kAttention,
                      PersonalizationMode::kOneBitAndAttention}) {
      if (variant != Variant::kMultiTask && mode != PersonalizationMode::kNone) continue;
      const auto ckpt = small_checkpoint(variant, mode);
      const auto bytes = encode_checkpoint(ckpt);
      const auto digest = save_checkpoint(ckpt, dir / "m.ckpt");
      CHECK(digest == checkpoint_digest(bytes));
      const auto loaded = load_checkpoint(dir / "m.ckpt");
      CHECK(encode_checkpoint(loaded) == bytes);
      CHECK(loaded.extra == ckpt.extra);
      CHECK(loaded.model.skills == ckpt.model.skills);
      for (const auto& [path, p] : ckpt.model.params) CHECK(loaded.model.params.at(path).value == p.value);
    }
  }
}

TEST_CASE("checkpoint corruption is detected") {
  const auto bytes = encode_checkpoint(small_checkpoint(Variant::kMultiTask, PersonalizationMode::kAttention));
  SUBCASE("every flipped byte fails") {
    for (std::size_t i = 0; i < bytes.size(); i += 97) {
      auto bad = bytes;
      bad[i] = static_cast<char>(bad[i] ^ 0x5a);
      CHECK_THROWS_AS(decode_checkpoint(bad), CheckpointError);
    }
  }
  SUBCASE("truncation fails") {
    CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, bytes.size() - 1)), CheckpointError);
    CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, 10)), CheckpointError);
  }
  SUBCASE("missing file names the path") {
    try {
      load_checkpoint("/nonexistent/m.ckpt");
      FAIL("expected an error");
    } catch (const CheckpointError& e) {
      CHECK(std::string(e.what()).find("/nonexistent/m.ckpt") != std::string::npos);
    }
  }
}

TEST_CASE("checkpoint rejects a vocabulary digest mismatch") {
  auto ckpt = small_checkpoint(Variant::kMultiTask, PersonalizationMode::kNone);
  auto bytes = encode_checkpoint(ckpt);
  // Rewrite a word inside the header and re-seal the digest so only the vocab check can catch it.
  const auto pos = bytes.find("\"jazz\"");
  REQUIRE(pos != std::string::npos);
  bytes.replace(pos, 6, "\"jazx\"");
  auto body = bytes.substr(0, bytes.size() - 32);
  const auto hex = sha256_hex(body);
  std::string raw;
  for (std::size_t i = 0; i < hex.size(); i += 2) raw.push_back(static_cast<char>(std::stoi(hex.substr(i, 2), nullptr, 16)));
  try {
    decode_checkpoint(body + raw);
    FAIL("expected an error");
  } catch (const CheckpointError& e) {
    CHECK(std::string(e.what()).find("vocabulary digest") != std::string::npos);
  }
}

TEST_CASE("sha256 matches the standard test vector") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("run config validates keys and values") {
  RunConfig cfg;
  CHECK_THROWS_AS(cfg.set("train.epoch", "3"), ConfigError);
  CHECK_THROWS_AS(cfg.set("train.epochs", "three"), ConfigError);
  CHECK_THROWS_AS(cfg.set("model.mode", "full"), ConfigError);
  CHECK_THROWS_AS(cfg.set("expand.freeze_new_embedding", "yes"), ConfigError);
  CHECK_THROWS_AS(cfg.set("seed", "-1"), ConfigError);
  cfg.set("train.epochs", "3");
  CHECK(cfg.train().epochs == 3);
  try {
    cfg.merge_text("# comment\n\ntrain.lr = 0.01\nbogus=1\n", "run.cfg");
    FAIL("expected an error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).rfind("run.cfg:4:", 0) == 0);
  }
  CHECK(cfg.get_double("train.lr") == 0.01);
  CHECK_THROWS_AS(cfg.merge_text("no equals sign\n", "x"), ConfigError);
  cfg.set("train.dropout", "0.5");
  CHECK_THROWS(cfg.train());
}

TEST_CASE("run config text round trips") {
  RunConfig a;
  a.set("model.mode", "attention");
  a.set("eval.top_n", "1,2");
  RunConfig b;
  b.merge_text(a.to_text(), "roundtrip");
  CHECK(b.to_json() == a.to_json());
  CHECK(b.eval().top_n == std::vector<int>{1, 2});
}

TEST_CASE("run config precedence is cli over env over file") {
  const auto dir = temp_dir("precedence");
  {
    std::ofstream(dir / "run.cfg") << "seed=5\ntrain.epochs=4\n";
  }
  RunConfig cfg;
  cfg.merge_file(dir / "run.cfg");
  CHECK(cfg.seed() == 5);
  ::setenv("SKILLROUTER_SEED", "9", 1);
  cfg.apply_env();
  CHECK(cfg.seed() == 9);
  cfg.set("seed", "11");
  CHECK(cfg.seed() == 11);
  CHECK(cfg.train().seed == 11);
  CHECK(cfg.world().seed == 11);
  CHECK(cfg.get_int("train.epochs") == 4);
  ::setenv("SKILLROUTER_SEED", "abc", 1);
  CHECK_THROWS_AS(cfg.apply_env(), ConfigError);
  ::unsetenv("SKILLROUTER_SEED");
  CHECK_THROWS_AS(cfg.merge_file(dir / "missing.cfg"), ConfigError);
}

TEST_CASE("provenance records config and input digests") {
  const auto dir = temp_dir("provenance");
  {
    std::ofstream(dir / "in.txt") << "abc";
  }
  RunConfig cfg;
  const auto p = provenance("train", cfg, {dir / "in.txt"}, {"skillrouter", "train"});
  CHECK(p["command"] == "train");
  CHECK(p["seed"] == 1);
  CHECK(p["config"]["model.mode"] == "none");
  CHECK(p["inputs"][(dir / "in.txt").string()] ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
