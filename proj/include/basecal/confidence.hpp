#pragma once

// Sequence-level confidence scores and the base output layer (BCOL) file.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "basecal/projection.hpp"
#include "basecal/records.hpp"

namespace basecal {

enum class Method { Vanilla, ReEval, Proj, TempScaled, SemanticEntropy };

std::string to_string(Method m);
Method parse_method(const std::string& s);

struct ConfidenceScore {
  std::string sequence_id;
  Method method = Method::Vanilla;
  double value = 0.0;
  std::vector<double> detail;  // per-token probabilities that were averaged
};

enum class NormKind { None, Rms, Standard };

std::string to_string(NormKind k);
NormKind parse_norm(const std::string& s);

struct BaseOutputLayer {
  std::uint32_t vocab_size = 0;
  std::uint32_t hidden_dim = 0;
  std::vector<float> weight;  // row-major V x d unembedding
  NormKind norm = NormKind::None;
  std::vector<float> gamma;  // length d when norm != None
  float norm_eps = 1e-5f;

  bool operator==(const BaseOutputLayer&) const = default;
};

void check_output_layer(const BaseOutputLayer& layer);

// Final normalization (if any), unembedding, max-shifted softmax.
std::vector<double> output_distribution(const BaseOutputLayer& layer, std::span<const double> hidden);
double output_probability(const BaseOutputLayer& layer, std::span<const double> hidden, std::uint32_t token);

inline constexpr std::uint32_t kOutputLayerFormatVersion = 1;

std::vector<std::uint8_t> encode_output_layer(const BaseOutputLayer& layer);
BaseOutputLayer decode_output_layer(std::span<const std::uint8_t> bytes);
void save_output_layer(const BaseOutputLayer& layer, const std::filesystem::path& path);
BaseOutputLayer load_output_layer(const std::filesystem::path& path);

// Mean over included tokens of the post-trained probability.
ConfidenceScore score_vanilla(const SequenceRecord& seq);
// Mean over included tokens of the base model's probability for the same tokens.
ConfidenceScore score_reeval(const SequenceRecord& seq);
// Mean over included tokens of softmax(W_out * norm(project(h_post)))[token].
ConfidenceScore score_proj(const SequenceRecord& seq, const ProjectionModel& proj, const BaseOutputLayer& out);

enum class TemperatureMode { TokenLevel, SequenceLogOdds };

std::string to_string(TemperatureMode m);
TemperatureMode parse_temperature_mode(const std::string& s);

struct TemperatureModel {
  TemperatureMode mode = TemperatureMode::SequenceLogOdds;
  double tau = 1.0;
};

inline constexpr double kLogitClamp = 1e-6;
inline constexpr double kLogClamp = 1e-12;
inline constexpr double kMinTemperature = 0.05;
inline constexpr double kMaxTemperature = 20.0;

// Confidence of one sequence under temperature tau (no validation of tau).
double temperature_confidence(const SequenceRecord& seq, TemperatureMode mode, double tau);
// Mean binary cross-entropy of temperature-adjusted confidences vs labels.
double temperature_nll(std::span<const SequenceRecord> records, TemperatureMode mode, double tau);

// Golden-section search over log tau in [log 0.05, log 20].
TemperatureModel fit_temperature(std::span<const SequenceRecord> records, TemperatureMode mode);
inline TemperatureModel fit_temperature(const RecordSet& set, TemperatureMode mode) {
  return fit_temperature(std::span<const SequenceRecord>(set.sequences), mode);
}
ConfidenceScore apply_temperature(const SequenceRecord& seq, const TemperatureModel& tm);

void save_temperature(const TemperatureModel& tm, const std::filesystem::path& path);
TemperatureModel load_temperature(const std::filesystem::path& path);

// 1 - H / ln N over cluster frequencies; N = 1 gives 1. The score carries
// the group name as its sequence_id.
ConfidenceScore score_semantic_entropy(std::span<const SequenceRecord* const> group);

// One score per sequence, in input order; each sequence receives the score
// of its sample_group.
std::vector<ConfidenceScore> score_semantic_entropy_all(std::span<const SequenceRecord> records);

}  // namespace basecal
