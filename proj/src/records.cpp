#include "basecal/records.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <unordered_set>

#include "basecal/container.hpp"
#include "basecal/errors.hpp"

namespace basecal {

namespace {

using nlohmann::json;

enum TokenFlag : std::uint8_t {
  kInclude = 1u << 0,
  kHasPBase = 1u << 1,
  kHasHPost = 1u << 2,
  kHasHBase = 1u << 3,
  kHasLogits = 1u << 4,
};

bool all_finite(const std::vector<float>& v) {
  return std::all_of(v.begin(), v.end(), [](float x) { return std::isfinite(x); });
}

double softmax_at(const std::vector<float>& logits, std::size_t index) {
  double mx = -INFINITY;
  for (float l : logits) mx = std::max(mx, static_cast<double>(l));
  double denom = 0.0;
  for (float l : logits) denom += std::exp(static_cast<double>(l) - mx);
  return std::exp(static_cast<double>(logits[index]) - mx) / denom;
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", x);
  return buf;
}

json manifest_to_json(const RecordManifest& m) {
  return {{"format_version", m.format_version},
          {"post_model_id", m.post_model_id},
          {"base_model_id", m.base_model_id},
          {"hidden_dim", m.hidden_dim},
          {"vocab_size", m.vocab_size},
          {"tokenizer_fingerprint", m.tokenizer_fingerprint},
          {"base_tokenizer_fingerprint", m.base_tokenizer_fingerprint},
          {"hidden_state_convention", m.hidden_state_convention},
          {"num_sequences", m.num_sequences},
          {"num_tokens", m.num_tokens}};
}

RecordManifest manifest_from_json(const json& j) {
  RecordManifest m;
  m.format_version = j.at("format_version").get<std::uint32_t>();
  m.post_model_id = j.at("post_model_id").get<std::string>();
  m.base_model_id = j.at("base_model_id").get<std::string>();
  m.hidden_dim = j.at("hidden_dim").get<std::uint32_t>();
  m.vocab_size = j.at("vocab_size").get<std::uint32_t>();
  m.tokenizer_fingerprint = j.at("tokenizer_fingerprint").get<std::string>();
  m.base_tokenizer_fingerprint = j.at("base_tokenizer_fingerprint").get<std::string>();
  m.hidden_state_convention = j.at("hidden_state_convention").get<std::string>();
  m.num_sequences = j.at("num_sequences").get<std::uint64_t>();
  m.num_tokens = j.at("num_tokens").get<std::uint64_t>();
  return m;
}

void throw_first(const std::vector<Violation>& violations) {
  std::string msg = "record set failed validation: " + to_string(violations.front());
  if (violations.size() > 1) msg += " (+" + std::to_string(violations.size() - 1) + " more)";
  throw ValidationError(msg);
}

}  // namespace

std::string to_string(const Violation& v) {
  std::ostringstream os;
  if (!v.sequence_id.empty()) os << "sequence '" << v.sequence_id << "'";
  else os << "manifest";
  if (v.token_index >= 0) os << " token " << v.token_index;
  os << ": " << v.rule;
  if (!v.detail.empty()) os << " (" << v.detail << ")";
  return os.str();
}

void refresh_counts(RecordManifest& manifest, const std::vector<SequenceRecord>& records) {
  manifest.num_sequences = records.size();
  manifest.num_tokens = 0;
  for (const auto& s : records) manifest.num_tokens += s.tokens.size();
}

std::vector<Violation> validate_recordset(const std::vector<SequenceRecord>& records,
                                          const RecordManifest& manifest) {
  std::vector<Violation> out;
  auto add = [&](const std::string& id, long tok, const char* rule, std::string detail = {}) {
    out.push_back({id, tok, rule, std::move(detail)});
  };

  if (manifest.format_version != kRecordFormatVersion) {
    add("", -1, rules::kFormatVersion, "format_version " + std::to_string(manifest.format_version));
  }
  if (manifest.hidden_dim == 0 || manifest.vocab_size == 0) {
    add("", -1, rules::kManifestDims, "hidden_dim and vocab_size must be positive");
  }
  if (manifest.tokenizer_fingerprint != manifest.base_tokenizer_fingerprint) {
    add("", -1, rules::kTokenizer,
        "'" + manifest.tokenizer_fingerprint + "' vs '" + manifest.base_tokenizer_fingerprint + "'");
  }
  std::uint64_t token_total = 0;
  for (const auto& s : records) token_total += s.tokens.size();
  if (manifest.num_sequences != records.size() || manifest.num_tokens != token_total) {
    add("", -1, rules::kManifestCounts,
        "manifest says " + std::to_string(manifest.num_sequences) + " sequences / " +
            std::to_string(manifest.num_tokens) + " tokens, found " + std::to_string(records.size()) +
            " / " + std::to_string(token_total));
  }

  const std::size_t d = manifest.hidden_dim;
  const std::size_t vocab = manifest.vocab_size;
  std::unordered_set<std::string> seen;
  for (const auto& seq : records) {
    const std::string& id = seq.sequence_id;
    if (id.empty()) add(id, -1, rules::kEmptyId);
    else if (!seen.insert(id).second) add(id, -1, rules::kDuplicateId);
    if (seq.tokens.empty()) add(id, -1, rules::kEmptySequence);
    if (seq.correctness && *seq.correctness != 0 && *seq.correctness != 1) {
      add(id, -1, rules::kCorrectness, "got " + std::to_string(*seq.correctness));
    }
    bool any_included = false;
    for (std::size_t i = 0; i < seq.tokens.size(); ++i) {
      const auto& t = seq.tokens[i];
      const long ti = static_cast<long>(i);
      any_included = any_included || t.include_in_confidence;
      if (t.token_id >= vocab) {
        add(id, ti, rules::kTokenRange, "token_id " + std::to_string(t.token_id) + " >= V " + std::to_string(vocab));
      }
      if (!(t.p_post >= 0.0f && t.p_post <= 1.0f)) {
        add(id, ti, rules::kProbabilityRange, "p_post = " + fmt(t.p_post));
      }
      if (t.p_base && !(*t.p_base >= 0.0f && *t.p_base <= 1.0f)) {
        add(id, ti, rules::kProbabilityRange, "p_base = " + fmt(*t.p_base));
      }
      auto check_hidden = [&](const std::optional<std::vector<float>>& h, const char* name) {
        if (!h) return;
        if (h->size() != d) {
          add(id, ti, rules::kHiddenDim, std::string(name) + " length " + std::to_string(h->size()) +
                                             ", manifest hidden_dim " + std::to_string(d));
        } else if (!all_finite(*h)) {
          add(id, ti, rules::kNonFinite, name);
        }
      };
      check_hidden(t.h_post, "h_post");
      check_hidden(t.h_base, "h_base");
      if (t.logits_post) {
        if (t.logits_post->size() != vocab) {
          add(id, ti, rules::kLogitsLength, "logits_post length " + std::to_string(t.logits_post->size()));
        } else if (!all_finite(*t.logits_post)) {
          add(id, ti, rules::kNonFinite, "logits_post");
        } else if (t.token_id < vocab) {
          const double p = softmax_at(*t.logits_post, t.token_id);
          if (std::abs(p - t.p_post) > kLogitProbabilityTolerance) {
            add(id, ti, rules::kLogitMismatch, "softmax gives " + fmt(p) + ", p_post " + fmt(t.p_post));
          }
        }
      }
    }
    if (!seq.tokens.empty() && !any_included) add(id, -1, rules::kNoIncluded);
  }
  return out;
}

std::vector<std::uint8_t> encode_recordset(const std::vector<SequenceRecord>& records,
                                           const RecordManifest& manifest) {
  const auto violations = validate_recordset(records, manifest);
  if (!violations.empty()) throw_first(violations);

  const std::size_t d = manifest.hidden_dim;
  const std::size_t vocab = manifest.vocab_size;
  std::vector<std::int32_t> token_ids;
  std::vector<std::uint8_t> flags;
  std::vector<float> p_post, p_base, h_post, h_base, logits;
  std::size_t n_hp = 0, n_hb = 0, n_lg = 0;
  json seqs = json::array();

  for (const auto& seq : records) {
    json js = {{"id", seq.sequence_id},
               {"dataset", seq.dataset_tag},
               {"prompt", seq.prompt_text},
               {"response", seq.response_text},
               {"num_tokens", seq.tokens.size()},
               {"correctness", nullptr},
               {"sample_group", nullptr},
               {"cluster_id", nullptr}};
    if (seq.correctness) js["correctness"] = *seq.correctness;
    if (seq.sample_group) js["sample_group"] = *seq.sample_group;
    if (seq.cluster_id) js["cluster_id"] = *seq.cluster_id;
    seqs.push_back(std::move(js));

    for (const auto& t : seq.tokens) {
      std::uint8_t f = t.include_in_confidence ? kInclude : 0;
      token_ids.push_back(static_cast<std::int32_t>(t.token_id));
      p_post.push_back(t.p_post);
      if (t.p_base) {
        f |= kHasPBase;
        p_base.push_back(*t.p_base);
      }
      if (t.h_post) {
        f |= kHasHPost;
        h_post.insert(h_post.end(), t.h_post->begin(), t.h_post->end());
        ++n_hp;
      }
      if (t.h_base) {
        f |= kHasHBase;
        h_base.insert(h_base.end(), t.h_base->begin(), t.h_base->end());
        ++n_hb;
      }
      if (t.logits_post) {
        f |= kHasLogits;
        logits.insert(logits.end(), t.logits_post->begin(), t.logits_post->end());
        ++n_lg;
      }
      flags.push_back(f);
    }
  }

  container::Document doc;
  doc.meta["kind"] = "recordset";
  doc.meta["manifest"] = manifest_to_json(manifest);
  try {
    doc.meta["sequences"] = std::move(seqs);
    // Fails on invalid UTF-8 before anything reaches disk.
    (void)doc.meta.dump();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("record text is not valid UTF-8: ") + e.what());
  }
  using container::Tensor;
  const std::uint64_t n = token_ids.size();
  doc.tensors["token_id"] = Tensor::from_i32(token_ids, {n});
  doc.tensors["flags"] = Tensor::from_u8(flags, {n});
  doc.tensors["p_post"] = Tensor::from_f32(p_post, {n});
  if (!p_base.empty()) doc.tensors["p_base"] = Tensor::from_f32(p_base, {p_base.size()});
  if (n_hp) doc.tensors["h_post"] = Tensor::from_f32(h_post, {n_hp, d});
  if (n_hb) doc.tensors["h_base"] = Tensor::from_f32(h_base, {n_hb, d});
  if (n_lg) doc.tensors["logits_post"] = Tensor::from_f32(logits, {n_lg, vocab});
  return container::encode(container::kRecordMagic, kRecordFormatVersion, doc);
}

RecordSet decode_recordset_unchecked(std::span<const std::uint8_t> bytes) {
  constexpr std::uint32_t supported[] = {kRecordFormatVersion};
  const auto doc = container::decode(bytes, container::kRecordMagic, supported);

  RecordSet set;
  json seqs;
  try {
    set.manifest = manifest_from_json(doc.meta.at("manifest"));
    seqs = doc.meta.at("sequences");
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed record-set header: ") + e.what());
  }
  const std::size_t d = set.manifest.hidden_dim;
  const std::size_t vocab = set.manifest.vocab_size;

  const auto token_ids = doc.at("token_id").to_i32();
  const auto flags = doc.at("flags").to_u8();
  const auto p_post = doc.at("p_post").to_f32();
  auto optional_block = [&](const char* name) {
    return doc.has(name) ? doc.at(name).to_f32() : std::vector<float>{};
  };
  const auto p_base = optional_block("p_base");
  const auto h_post = optional_block("h_post");
  const auto h_base = optional_block("h_base");
  const auto logits = optional_block("logits_post");

  const std::size_t n = token_ids.size();
  if (flags.size() != n || p_post.size() != n) throw CorruptionError("token blocks disagree in length");
  std::size_t need_pb = 0, need_hp = 0, need_hb = 0, need_lg = 0;
  for (auto f : flags) {
    need_pb += (f & kHasPBase) != 0;
    need_hp += (f & kHasHPost) != 0;
    need_hb += (f & kHasHBase) != 0;
    need_lg += (f & kHasLogits) != 0;
  }
  if (p_base.size() != need_pb || h_post.size() != need_hp * d || h_base.size() != need_hb * d ||
      logits.size() != need_lg * vocab) {
    throw CorruptionError("optional tensor blocks disagree with token flags");
  }

  std::size_t cursor = 0, ipb = 0, ihp = 0, ihb = 0, ilg = 0;
  try {
    for (const auto& js : seqs) {
      SequenceRecord seq;
      seq.sequence_id = js.at("id").get<std::string>();
      seq.dataset_tag = js.at("dataset").get<std::string>();
      seq.prompt_text = js.at("prompt").get<std::string>();
      seq.response_text = js.at("response").get<std::string>();
      if (!js.at("correctness").is_null()) seq.correctness = js["correctness"].get<int>();
      if (!js.at("sample_group").is_null()) seq.sample_group = js["sample_group"].get<std::string>();
      if (!js.at("cluster_id").is_null()) seq.cluster_id = js["cluster_id"].get<std::int64_t>();
      const auto count = js.at("num_tokens").get<std::size_t>();
      if (count > n - cursor) throw CorruptionError("sequence '" + seq.sequence_id + "' runs past token blocks");
      seq.tokens.resize(count);
      for (auto& t : seq.tokens) {
        const auto f = flags[cursor];
        t.token_id = static_cast<std::uint32_t>(token_ids[cursor]);
        t.p_post = p_post[cursor];
        t.include_in_confidence = (f & kInclude) != 0;
        if (f & kHasPBase) t.p_base = p_base[ipb++];
        if (f & kHasHPost) {
          t.h_post.emplace(h_post.begin() + ihp * d, h_post.begin() + (ihp + 1) * d);
          ++ihp;
        }
        if (f & kHasHBase) {
          t.h_base.emplace(h_base.begin() + ihb * d, h_base.begin() + (ihb + 1) * d);
          ++ihb;
        }
        if (f & kHasLogits) {
          t.logits_post.emplace(logits.begin() + ilg * vocab, logits.begin() + (ilg + 1) * vocab);
          ++ilg;
        }
        ++cursor;
      }
      set.sequences.push_back(std::move(seq));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed sequence metadata: ") + e.what());
  }
  if (cursor != n) throw CorruptionError("token blocks hold more tokens than the sequences reference");
  return set;
}

RecordSet decode_recordset(std::span<const std::uint8_t> bytes) {
  auto set = decode_recordset_unchecked(bytes);
  const auto violations = validate_recordset(set);
  if (!violations.empty()) throw_first(violations);
  return set;
}

void save_recordset(const std::vector<SequenceRecord>& records, const RecordManifest& manifest,
                    const std::filesystem::path& path) {
  container::write_file(path, encode_recordset(records, manifest));
}

RecordSet load_recordset(const std::filesystem::path& path) {
  return decode_recordset(container::read_file(path));
}

RecordSet load_recordset_unchecked(const std::filesystem::path& path) {
  return decode_recordset_unchecked(container::read_file(path));
}

std::string fingerprint(const RecordSet& set) {
  const auto bytes = encode_recordset(set.sequences, set.manifest);
  std::uint64_t h = 1469598103934665603ull;
  for (auto b : bytes) {
    h ^= b;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace basecal
