#include <cmath>
#include <cstring>
#include <fstream>

#include <doctest.h>

#include "basecal/container.hpp"
#include "basecal/errors.hpp"
#include "basecal/records.hpp"
#include "oracles.hpp"

using namespace basecal;

namespace {

RecordSet tiny_set() {
  RecordSet set;
  set.manifest.post_model_id = "post";
  set.manifest.base_model_id = "base";
  set.manifest.hidden_dim = 4;
  set.manifest.vocab_size = 10;
  set.manifest.tokenizer_fingerprint = set.manifest.base_tokenizer_fingerprint = "abc";
  SequenceRecord s;
  s.sequence_id = "q0";
  s.dataset_tag = "trivia";
  TokenRecord t;
  t.token_id = 3;
  t.p_post = 0.75f;
  t.p_base = 0.5f;
  t.h_post = std::vector<float>{0.1f, -0.2f, 0.3f, 1e-30f};
  t.h_base = std::vector<float>{1.0f, 2.0f, -3.0f, 4.5f};
  s.tokens.push_back(t);
  s.correctness = 1;
  set.sequences.push_back(s);
  refresh_counts(set.manifest, set.sequences);
  return set;
}

std::vector<std::string> rules_of(const std::vector<Violation>& v) {
  std::vector<std::string> out;
  for (const auto& x : v) out.push_back(x.rule);
  return out;
}

}  // namespace

TEST_CASE("single-token set round-trips through a file with two hidden-state blocks") {
  oracle::TempDir dir;
  const auto set = tiny_set();
  save_recordset(set, dir / "tiny.bcrd");
  CHECK(load_recordset(dir / "tiny.bcrd") == set);

  constexpr std::uint32_t v1[] = {1};
  const auto doc = container::decode(container::read_file(dir / "tiny.bcrd"), container::kRecordMagic, v1);
  CHECK(doc.at("h_post").shape == std::vector<std::uint64_t>{1, 4});
  CHECK(doc.at("h_base").shape == std::vector<std::uint64_t>{1, 4});
  CHECK_FALSE(doc.has("logits_post"));
}

TEST_CASE("hidden length disagreeing with the manifest is a validation error naming sequence and field") {
  auto set = tiny_set();
  set.manifest.hidden_dim = 8;
  oracle::TempDir dir;
  try {
    save_recordset(set, dir / "bad.bcrd");
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("q0") != std::string::npos);
    CHECK(msg.find("h_post") != std::string::npos);
  }
  CHECK_FALSE(std::filesystem::exists(dir / "bad.bcrd"));
}

TEST_CASE("random record sets round-trip field for field and byte-deterministically") {
  std::mt19937_64 g(42);
  const auto set = oracle::random_recordset(g, 1000, 6, 12);
  REQUIRE(validate_recordset(set).empty());
  const auto bytes = encode_recordset(set.sequences, set.manifest);
  CHECK(bytes == encode_recordset(set.sequences, set.manifest));
  const auto back = decode_recordset(bytes);
  CHECK(back == set);
  // Bit-exact floats, including values that compare equal but differ in bits.
  const auto& a = set.sequences[0].tokens[0];
  const auto& b = back.sequences[0].tokens[0];
  CHECK(std::memcmp(&a.p_post, &b.p_post, sizeof(float)) == 0);
}

TEST_CASE("load rejects an empty file and an unsupported version") {
  oracle::TempDir dir;
  { std::ofstream(dir / "empty.bcrd"); }
  CHECK_THROWS_AS(load_recordset(dir / "empty.bcrd"), FormatError);

  auto bytes = encode_recordset(tiny_set().sequences, tiny_set().manifest);
  bytes[4] = 99;
  container::write_file(dir / "v99.bcrd", bytes);
  try {
    load_recordset(dir / "v99.bcrd");
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("supported: 1") != std::string::npos);
  }
  CHECK_THROWS_AS(load_recordset(dir / "missing.bcrd"), IoError);
}

TEST_CASE("truncated tensor block on load is a corruption error") {
  auto bytes = encode_recordset(tiny_set().sequences, tiny_set().manifest);
  bytes.resize(bytes.size() - 3);
  CHECK_THROWS_AS(decode_recordset(bytes), CorruptionError);
}

TEST_CASE("validate flags an out-of-range probability once") {
  auto set = tiny_set();
  set.sequences[0].tokens[0].p_post = 1.2f;
  const auto v = validate_recordset(set);
  REQUIRE(v.size() == 1);
  CHECK(v[0].rule == rules::kProbabilityRange);
  CHECK(v[0].sequence_id == "q0");
  CHECK(v[0].token_index == 0);
}

TEST_CASE("validate accepts a consistent synthetic set") {
  std::mt19937_64 g(7);
  CHECK(validate_recordset(oracle::random_recordset(g, 50, 3, 5)).empty());
  CHECK(validate_recordset(tiny_set()).empty());
}

TEST_CASE("validate flags a stored probability that disagrees with the stored logits") {
  auto set = tiny_set();
  auto& t = set.sequences[0].tokens[0];
  std::vector<float> logits(10, 0.0f);
  logits[3] = 2.0f;
  t.logits_post = logits;
  std::vector<double> wide(logits.begin(), logits.end());
  t.p_post = static_cast<float>(oracle::softmax_at(wide, 3));
  CHECK(validate_recordset(set).empty());
  t.p_post += 0.01f;
  const auto v = validate_recordset(set);
  REQUIRE(v.size() == 1);
  CHECK(v[0].rule == rules::kLogitMismatch);
}

TEST_CASE("validate covers manifest, identity and masking rules") {
  auto set = tiny_set();
  set.manifest.base_tokenizer_fingerprint = "other";
  set.sequences[0].tokens[0].token_id = 10;
  set.sequences.push_back(set.sequences[0]);
  set.sequences[1].tokens[0].token_id = 1;
  set.sequences[1].tokens[0].include_in_confidence = false;
  set.sequences[1].correctness = 2;
  const auto names = rules_of(validate_recordset(set));
  auto has = [&](const char* r) { return std::find(names.begin(), names.end(), r) != names.end(); };
  CHECK(has(rules::kTokenizer));
  CHECK(has(rules::kManifestCounts));
  CHECK(has(rules::kTokenRange));
  CHECK(has(rules::kDuplicateId));
  CHECK(has(rules::kNoIncluded));
  CHECK(has(rules::kCorrectness));

  auto nan_set = tiny_set();
  (*nan_set.sequences[0].tokens[0].h_base)[1] = NAN;
  CHECK(rules_of(validate_recordset(nan_set)) == std::vector<std::string>{rules::kNonFinite});

  auto empty = tiny_set();
  empty.sequences[0].tokens.clear();
  refresh_counts(empty.manifest, empty.sequences);
  CHECK(rules_of(validate_recordset(empty)) == std::vector<std::string>{rules::kEmptySequence});
}

TEST_CASE("validate is empty exactly when save succeeds") {
  std::mt19937_64 g(99);
  oracle::TempDir dir;
  for (int trial = 0; trial < 200; ++trial) {
    auto set = oracle::random_recordset(g, 3, 2, 4);
    auto& tok = set.sequences[g() % 3].tokens[0];
    switch (g() % 5) {
      case 0: tok.p_post = 1.5f; break;
      case 1: tok.token_id = 4; break;
      case 2: tok.h_post = std::vector<float>{1.0f}; break;
      case 3: set.manifest.num_tokens += 1; break;
      default: break;  // left valid
    }
    const bool valid = validate_recordset(set).empty();
    bool saved = true;
    try {
      save_recordset(set, dir / "p.bcrd");
    } catch (const ValidationError&) {
      saved = false;
    }
    CHECK(valid == saved);
  }
}

TEST_CASE("fingerprint is stable and content-sensitive") {
  auto set = tiny_set();
  const auto fp = fingerprint(set);
  CHECK(fp.size() == 16);
  CHECK(fp == fingerprint(tiny_set()));
  set.sequences[0].tokens[0].p_post = 0.7f;
  CHECK(fp != fingerprint(set));
}
