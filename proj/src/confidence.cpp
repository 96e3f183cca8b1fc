#include "basecal/confidence.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include <json.hpp>

#include "basecal/container.hpp"
#include "basecal/errors.hpp"
#include "basecal/metrics.hpp"

namespace basecal {

namespace {

double mean_of(const std::vector<double>& v) { return pairwise_sum(v) / static_cast<double>(v.size()); }

void require_included(const SequenceRecord& seq, const char* method) {
  for (const auto& t : seq.tokens)
    if (t.include_in_confidence) return;
  throw PreconditionError(std::string(method) + ": sequence '" + seq.sequence_id +
                          "' has no included tokens (empty aggregation)");
}

double softmax_entry(std::span<const float> logits, std::uint32_t index, double tau) {
  double mx = -INFINITY;
  for (float l : logits) mx = std::max(mx, static_cast<double>(l) / tau);
  double denom = 0.0;
  for (float l : logits) denom += std::exp(static_cast<double>(l) / tau - mx);
  return std::exp(static_cast<double>(logits[index]) / tau - mx) / denom;
}

double sigmoid(double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

}  // namespace

std::string to_string(Method m) {
  switch (m) {
    case Method::Vanilla: return "vanilla";
    case Method::ReEval: return "reeval";
    case Method::Proj: return "proj";
    case Method::TempScaled: return "temp_scaled";
    case Method::SemanticEntropy: return "semantic_entropy";
  }
  return "?";
}

Method parse_method(const std::string& s) {
  if (s == "vanilla") return Method::Vanilla;
  if (s == "reeval") return Method::ReEval;
  if (s == "proj") return Method::Proj;
  if (s == "temp_scaled" || s == "temp") return Method::TempScaled;
  if (s == "semantic_entropy" || s == "se") return Method::SemanticEntropy;
  throw ValidationError("unknown method '" + s + "' (expected vanilla, reeval, proj, temp_scaled, semantic_entropy)");
}

std::string to_string(NormKind k) {
  switch (k) {
    case NormKind::None: return "none";
    case NormKind::Rms: return "rms";
    case NormKind::Standard: return "standard";
  }
  return "?";
}

NormKind parse_norm(const std::string& s) {
  if (s == "none") return NormKind::None;
  if (s == "rms") return NormKind::Rms;
  if (s == "standard") return NormKind::Standard;
  throw FormatError("unknown normalization kind '" + s + "'");
}

std::string to_string(TemperatureMode m) {
  return m == TemperatureMode::TokenLevel ? "token_level" : "sequence_log_odds";
}

TemperatureMode parse_temperature_mode(const std::string& s) {
  if (s == "token_level" || s == "token") return TemperatureMode::TokenLevel;
  if (s == "sequence_log_odds" || s == "sequence") return TemperatureMode::SequenceLogOdds;
  throw ValidationError("unknown temperature mode '" + s + "' (expected token_level or sequence_log_odds)");
}

// ---------------------------------------------------------------------------
// Base output layer

void check_output_layer(const BaseOutputLayer& layer) {
  if (layer.vocab_size == 0 || layer.hidden_dim == 0) throw ShapeError("output layer dims must be positive");
  if (layer.weight.size() != static_cast<std::size_t>(layer.vocab_size) * layer.hidden_dim) {
    throw ShapeError("output layer weight is not V x d");
  }
  if (layer.norm != NormKind::None && layer.gamma.size() != layer.hidden_dim) {
    throw ShapeError("normalization scale must have length d");
  }
  if (layer.norm == NormKind::None && !layer.gamma.empty()) throw ShapeError("scale given without a normalization kind");
  auto finite = [](float x) { return std::isfinite(x); };
  if (!std::all_of(layer.weight.begin(), layer.weight.end(), finite) ||
      !std::all_of(layer.gamma.begin(), layer.gamma.end(), finite) || !(layer.norm_eps >= 0.0f)) {
    throw NumericalError("output layer has non-finite parameters");
  }
}

std::vector<double> output_distribution(const BaseOutputLayer& layer, std::span<const double> hidden) {
  const std::size_t d = layer.hidden_dim;
  if (hidden.size() != d) throw ShapeError("hidden state length " + std::to_string(hidden.size()) + " != d " + std::to_string(d));
  std::vector<double> x(hidden.begin(), hidden.end());
  if (layer.norm != NormKind::None) {
    double mu = 0.0;
    if (layer.norm == NormKind::Standard) {
      for (double v : x) mu += v;
      mu /= static_cast<double>(d);
    }
    double ms = 0.0;
    for (double v : x) ms += (v - mu) * (v - mu);
    ms /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(ms + layer.norm_eps);
    for (std::size_t i = 0; i < d; ++i) x[i] = (x[i] - mu) * inv * layer.gamma[i];
  }
  std::vector<double> logits(layer.vocab_size);
  double mx = -INFINITY;
  for (std::size_t r = 0; r < layer.vocab_size; ++r) {
    const float* row = layer.weight.data() + r * d;
    double acc = 0.0;
    for (std::size_t c = 0; c < d; ++c) acc += static_cast<double>(row[c]) * x[c];
    if (!std::isfinite(acc)) throw NumericalError("non-finite logit at vocabulary row " + std::to_string(r));
    logits[r] = acc;
    mx = std::max(mx, acc);
  }
  double denom = 0.0;
  for (double& l : logits) {
    l = std::exp(l - mx);
    denom += l;
  }
  for (double& l : logits) l /= denom;
  return logits;
}

double output_probability(const BaseOutputLayer& layer, std::span<const double> hidden, std::uint32_t token) {
  if (token >= layer.vocab_size) throw ShapeError("token id " + std::to_string(token) + " outside output vocabulary");
  return output_distribution(layer, hidden)[token];
}

std::vector<std::uint8_t> encode_output_layer(const BaseOutputLayer& layer) {
  check_output_layer(layer);
  container::Document doc;
  doc.meta = {{"kind", "output_layer"},
              {"vocab_size", layer.vocab_size},
              {"hidden_dim", layer.hidden_dim},
              {"normalization", to_string(layer.norm)},
              {"norm_eps", static_cast<double>(layer.norm_eps)}};
  doc.tensors["W_out"] = container::Tensor::from_f32(layer.weight, {layer.vocab_size, layer.hidden_dim});
  if (layer.norm != NormKind::None) doc.tensors["gamma"] = container::Tensor::from_f32(layer.gamma, {layer.hidden_dim});
  return container::encode(container::kOutputLayerMagic, kOutputLayerFormatVersion, doc);
}

BaseOutputLayer decode_output_layer(std::span<const std::uint8_t> bytes) {
  constexpr std::uint32_t supported[] = {kOutputLayerFormatVersion};
  const auto doc = container::decode(bytes, container::kOutputLayerMagic, supported);
  BaseOutputLayer layer;
  try {
    layer.vocab_size = doc.meta.at("vocab_size").get<std::uint32_t>();
    layer.hidden_dim = doc.meta.at("hidden_dim").get<std::uint32_t>();
    layer.norm = parse_norm(doc.meta.at("normalization").get<std::string>());
    layer.norm_eps = static_cast<float>(doc.meta.at("norm_eps").get<double>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed output-layer header: ") + e.what());
  }
  const auto& w = doc.at("W_out");
  if (w.shape != std::vector<std::uint64_t>{layer.vocab_size, layer.hidden_dim}) {
    throw CorruptionError("W_out shape disagrees with header dims");
  }
  layer.weight = w.to_f32();
  if (layer.norm != NormKind::None) layer.gamma = doc.at("gamma").to_f32();
  try {
    check_output_layer(layer);
  } catch (const ShapeError& e) {
    throw CorruptionError(e.what());
  }
  return layer;
}

void save_output_layer(const BaseOutputLayer& layer, const std::filesystem::path& path) {
  container::write_file(path, encode_output_layer(layer));
}

BaseOutputLayer load_output_layer(const std::filesystem::path& path) {
  return decode_output_layer(container::read_file(path));
}

// ---------------------------------------------------------------------------
// Scorers

ConfidenceScore score_vanilla(const SequenceRecord& seq) {
  require_included(seq, "vanilla");
  ConfidenceScore s{seq.sequence_id, Method::Vanilla, 0.0, {}};
  for (const auto& t : seq.tokens)
    if (t.include_in_confidence) s.detail.push_back(t.p_post);
  s.value = mean_of(s.detail);
  return s;
}

ConfidenceScore score_reeval(const SequenceRecord& seq) {
  require_included(seq, "reeval");
  ConfidenceScore s{seq.sequence_id, Method::ReEval, 0.0, {}};
  for (std::size_t i = 0; i < seq.tokens.size(); ++i) {
    const auto& t = seq.tokens[i];
    if (!t.include_in_confidence) continue;
    if (!t.p_base) {
      throw PreconditionError("reeval: sequence '" + seq.sequence_id + "' token " + std::to_string(i) +
                              " has no base-model probability (missing base trace)");
    }
    s.detail.push_back(*t.p_base);
  }
  s.value = mean_of(s.detail);
  return s;
}

ConfidenceScore score_proj(const SequenceRecord& seq, const ProjectionModel& proj, const BaseOutputLayer& out) {
  require_included(seq, "proj");
  if (proj.dim != out.hidden_dim) {
    throw ShapeError("projection dim " + std::to_string(proj.dim) + " != output layer dim " +
                     std::to_string(out.hidden_dim));
  }
  ConfidenceScore s{seq.sequence_id, Method::Proj, 0.0, {}};
  for (std::size_t i = 0; i < seq.tokens.size(); ++i) {
    const auto& t = seq.tokens[i];
    if (!t.include_in_confidence) continue;
    if (!t.h_post) {
      throw PreconditionError("proj: sequence '" + seq.sequence_id + "' token " + std::to_string(i) +
                              " has no post-trained hidden state");
    }
    const auto mapped = project(proj, std::span<const float>(*t.h_post));
    s.detail.push_back(output_probability(out, mapped, t.token_id));
  }
  s.value = mean_of(s.detail);
  return s;
}

// ---------------------------------------------------------------------------
// Temperature scaling

double temperature_confidence(const SequenceRecord& seq, TemperatureMode mode, double tau) {
  if (mode == TemperatureMode::SequenceLogOdds) {
    const double c = std::clamp(score_vanilla(seq).value, kLogitClamp, 1.0 - kLogitClamp);
    return sigmoid(std::log(c / (1.0 - c)) / tau);
  }
  require_included(seq, "temp_scaled");
  std::vector<double> probs;
  for (std::size_t i = 0; i < seq.tokens.size(); ++i) {
    const auto& t = seq.tokens[i];
    if (!t.include_in_confidence) continue;
    if (!t.logits_post) {
      throw PreconditionError("temp_scaled (token_level): sequence '" + seq.sequence_id + "' token " +
                              std::to_string(i) + " has no stored logits");
    }
    if (t.token_id >= t.logits_post->size()) throw ShapeError("token id outside stored logit row");
    probs.push_back(softmax_entry(*t.logits_post, t.token_id, tau));
  }
  return mean_of(probs);
}

double temperature_nll(std::span<const SequenceRecord> records, TemperatureMode mode, double tau) {
  std::vector<double> terms;
  terms.reserve(records.size());
  for (const auto& seq : records) {
    const double c = temperature_confidence(seq, mode, tau);
    const double z = *seq.correctness;
    terms.push_back(-(z * std::log(std::max(c, kLogClamp)) + (1.0 - z) * std::log(std::max(1.0 - c, kLogClamp))));
  }
  return pairwise_sum(terms) / static_cast<double>(terms.size());
}

TemperatureModel fit_temperature(std::span<const SequenceRecord> records, TemperatureMode mode) {
  if (records.empty()) throw PreconditionError("temperature fit needs at least one labelled sequence");
  std::size_t positives = 0;
  for (const auto& seq : records) {
    if (!seq.correctness) {
      throw PreconditionError("temperature fit: sequence '" + seq.sequence_id + "' has no correctness label");
    }
    positives += *seq.correctness == 1;
    if (mode == TemperatureMode::TokenLevel) {
      for (std::size_t i = 0; i < seq.tokens.size(); ++i) {
        if (seq.tokens[i].include_in_confidence && !seq.tokens[i].logits_post) {
          throw PreconditionError("temperature fit (token_level): sequence '" + seq.sequence_id + "' token " +
                                  std::to_string(i) + " has no stored logits");
        }
      }
    }
  }
  if (positives == 0 || positives == records.size()) {
    throw PreconditionError("temperature fit needs both correct and incorrect examples (degenerate labels)");
  }

  auto objective = [&](double log_tau) { return temperature_nll(records, mode, std::exp(log_tau)); };
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = std::log(kMinTemperature);
  double b = std::log(kMaxTemperature);
  double x1 = b - inv_phi * (b - a);
  double x2 = a + inv_phi * (b - a);
  double f1 = objective(x1);
  double f2 = objective(x2);
  while (b - a > 1e-10) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - inv_phi * (b - a);
      f1 = objective(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + inv_phi * (b - a);
      f2 = objective(x2);
    }
  }
  return {mode, std::exp(0.5 * (a + b))};
}

ConfidenceScore apply_temperature(const SequenceRecord& seq, const TemperatureModel& tm) {
  if (!(tm.tau > 0.0) || !std::isfinite(tm.tau)) throw ValidationError("temperature must be finite and positive");
  ConfidenceScore s{seq.sequence_id, Method::TempScaled, temperature_confidence(seq, tm.mode, tm.tau), {}};
  s.value = std::clamp(s.value, 0.0, 1.0);
  return s;
}

void save_temperature(const TemperatureModel& tm, const std::filesystem::path& path) {
  const nlohmann::json j = {{"kind", "temperature"}, {"format_version", 1}, {"mode", to_string(tm.mode)}, {"tau", tm.tau}};
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << j.dump(2) << "\n";
}

TemperatureModel load_temperature(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  TemperatureModel tm;
  try {
    const auto j = nlohmann::json::parse(in);
    if (j.at("kind").get<std::string>() != "temperature" || j.at("format_version").get<int>() != 1) {
      throw FormatError("'" + path.string() + "' is not a version-1 temperature file");
    }
    tm.mode = parse_temperature_mode(j.at("mode").get<std::string>());
    tm.tau = j.at("tau").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed temperature file '" + path.string() + "': " + e.what());
  } catch (const ValidationError& e) {
    throw FormatError(e.what());
  }
  if (!(tm.tau > 0.0) || !std::isfinite(tm.tau)) throw FormatError("temperature file holds a non-positive tau");
  return tm;
}

// ---------------------------------------------------------------------------
// Semantic entropy

ConfidenceScore score_semantic_entropy(std::span<const SequenceRecord* const> group) {
  if (group.empty()) throw PreconditionError("semantic entropy over an empty group");
  std::map<std::int64_t, std::size_t> clusters;
  for (const auto* seq : group) {
    if (!seq->cluster_id) {
      throw PreconditionError("semantic_entropy: sequence '" + seq->sequence_id + "' has no cluster id");
    }
    ++clusters[*seq->cluster_id];
  }
  const auto n = group.size();
  ConfidenceScore s;
  s.sequence_id = group.front()->sample_group.value_or(group.front()->sequence_id);
  s.method = Method::SemanticEntropy;
  if (n == 1 || clusters.size() == 1) {
    s.value = 1.0;
    return s;
  }
  // Summed in count order so relabelling clusters cannot change the rounding.
  std::vector<std::size_t> counts;
  for (const auto& [id, c] : clusters) counts.push_back(c);
  std::sort(counts.begin(), counts.end());
  std::vector<double> terms;
  for (auto c : counts) {
    const double p = static_cast<double>(c) / static_cast<double>(n);
    terms.push_back(-p * std::log(p));
    s.detail.push_back(p);
  }
  const double entropy = pairwise_sum(terms);
  s.value = std::clamp(1.0 - entropy / std::log(static_cast<double>(n)), 0.0, 1.0);
  return s;
}

std::vector<ConfidenceScore> score_semantic_entropy_all(std::span<const SequenceRecord> records) {
  std::map<std::string, std::vector<const SequenceRecord*>> groups;
  for (const auto& seq : records) {
    if (!seq.sample_group) {
      throw PreconditionError("semantic_entropy: sequence '" + seq.sequence_id + "' has no sample group");
    }
    groups[*seq.sample_group].push_back(&seq);
  }
  std::map<std::string, double> by_group;
  for (const auto& [name, members] : groups) by_group[name] = score_semantic_entropy(members).value;
  std::vector<ConfidenceScore> out;
  out.reserve(records.size());
  for (const auto& seq : records) {
    out.push_back({seq.sequence_id, Method::SemanticEntropy, by_group.at(*seq.sample_group), {}});
  }
  return out;
}

}  // namespace basecal
