#pragma once

// Domain model for exported model traces and the BCRD record-set file.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace basecal {

struct TokenRecord {
  std::uint32_t token_id = 0;
  float p_post = 0.0f;
  std::optional<float> p_base;
  // Final-layer states at the position preceding this token.
  std::optional<std::vector<float>> h_post;
  std::optional<std::vector<float>> h_base;
  std::optional<std::vector<float>> logits_post;
  bool include_in_confidence = true;

  bool operator==(const TokenRecord&) const = default;
};

struct SequenceRecord {
  std::string sequence_id;
  std::string dataset_tag;
  std::string prompt_text;
  std::string response_text;
  std::vector<TokenRecord> tokens;
  std::optional<int> correctness;
  std::optional<std::string> sample_group;
  std::optional<std::int64_t> cluster_id;

  bool operator==(const SequenceRecord&) const = default;
};

struct RecordManifest {
  std::uint32_t format_version = 1;
  std::string post_model_id;
  std::string base_model_id;
  std::uint32_t hidden_dim = 0;
  std::uint32_t vocab_size = 0;
  std::string tokenizer_fingerprint;       // post-trained export
  std::string base_tokenizer_fingerprint;  // base export; must equal the above
  // "post_norm": hidden states were captured after the final normalization.
  std::string hidden_state_convention = "post_norm";
  std::uint64_t num_sequences = 0;
  std::uint64_t num_tokens = 0;

  bool operator==(const RecordManifest&) const = default;
};

// Immutable once built; safe to share across reader threads.
struct RecordSet {
  RecordManifest manifest;
  std::vector<SequenceRecord> sequences;

  bool operator==(const RecordSet&) const = default;
};

struct Violation {
  std::string sequence_id;  // empty for manifest-level rules
  long token_index = -1;    // -1 when the rule is not token-specific
  std::string rule;
  std::string detail;
};

std::string to_string(const Violation& v);

namespace rules {
inline constexpr const char* kProbabilityRange = "probability out of range";
inline constexpr const char* kLogitMismatch = "logit/probability mismatch";
inline constexpr const char* kHiddenDim = "hidden dim mismatch";
inline constexpr const char* kLogitsLength = "logits length mismatch";
inline constexpr const char* kTokenRange = "token id out of range";
inline constexpr const char* kNonFinite = "non-finite value";
inline constexpr const char* kEmptySequence = "empty sequence";
inline constexpr const char* kNoIncluded = "no included tokens";
inline constexpr const char* kCorrectness = "correctness not binary";
inline constexpr const char* kDuplicateId = "duplicate sequence id";
inline constexpr const char* kEmptyId = "empty sequence id";
inline constexpr const char* kManifestCounts = "manifest count mismatch";
inline constexpr const char* kManifestDims = "invalid manifest dimensions";
inline constexpr const char* kTokenizer = "tokenizer fingerprint mismatch";
inline constexpr const char* kFormatVersion = "unsupported format version";
}  // namespace rules

inline constexpr std::uint32_t kRecordFormatVersion = 1;
inline constexpr double kLogitProbabilityTolerance = 1e-4;

std::vector<Violation> validate_recordset(const std::vector<SequenceRecord>& records,
                                          const RecordManifest& manifest);
inline std::vector<Violation> validate_recordset(const RecordSet& set) {
  return validate_recordset(set.sequences, set.manifest);
}

// Sets num_sequences / num_tokens from the records.
void refresh_counts(RecordManifest& manifest, const std::vector<SequenceRecord>& records);

std::vector<std::uint8_t> encode_recordset(const std::vector<SequenceRecord>& records,
                                           const RecordManifest& manifest);
RecordSet decode_recordset(std::span<const std::uint8_t> bytes);
// Structural decoding only; invariants are left to validate_recordset.
RecordSet decode_recordset_unchecked(std::span<const std::uint8_t> bytes);

// Throws ValidationError naming the first offending sequence and rule.
void save_recordset(const std::vector<SequenceRecord>& records, const RecordManifest& manifest,
                    const std::filesystem::path& path);
inline void save_recordset(const RecordSet& set, const std::filesystem::path& path) {
  save_recordset(set.sequences, set.manifest, path);
}
RecordSet load_recordset(const std::filesystem::path& path);
RecordSet load_recordset_unchecked(const std::filesystem::path& path);

// Stable 64-bit FNV-1a digest of the encoded set, rendered as 16 hex digits.
std::string fingerprint(const RecordSet& set);

}  // namespace basecal
