#pragma once

// Seeded generators for record sets whose ground truth is known: calibrated
// confidence data, affine hidden-state pairs, and a synthetic base /
// post-trained model pair sharing one output head.

#include <cstdint>

#include <Eigen/Dense>

#include "basecal/confidence.hpp"
#include "basecal/records.hpp"

namespace basecal::synthetic {

RecordManifest make_manifest(std::uint32_t hidden_dim, std::uint32_t vocab_size, const std::string& tag);

// Single-token sequences with confidence c ~ U(0,1) and correctness
// z ~ Bernoulli(c). With `with_logits`, V = 2 and logits [log(c/(1-c)), 0]
// so token 0 has softmax probability c.
RecordSet calibrated(std::size_t n, std::uint64_t seed, bool with_logits = false);

struct AffineData {
  Eigen::MatrixXd weight;  // d x d ground truth
  Eigen::VectorXd bias;
  RecordSet set;
};

// h_post ~ N(0, I); h_base = W* h_post + b* + noise * N(0, I), with
// W* = G / sqrt(d) and b* ~ N(0, I). One token per sequence.
AffineData affine(std::uint32_t dim, std::size_t tokens, double noise_sd, std::uint64_t seed);
// Same data model with the caller's ground truth.
RecordSet affine_with(const Eigen::MatrixXd& weight, const Eigen::VectorXd& bias, std::size_t tokens,
                      double noise_sd, std::uint64_t seed, const std::string& tag);

struct ModelPairConfig {
  std::uint32_t hidden_dim = 32;
  std::uint32_t vocab_size = 100;
  std::uint32_t mixture_components = 8;
  double mean_scale = 1.0;
  double component_sd = 0.5;
  double head_scale = 0.45;
  double sharpen_tau = 0.3;  // post-trained logits = base logits / tau
  std::uint32_t max_tokens = 4;
};

// The base head and the map from base to post-trained hidden states.
struct ModelPair {
  ModelPairConfig cfg;
  BaseOutputLayer head;
  Eigen::MatrixXd mixture_means;  // components x d
  Eigen::MatrixXd post_from_base;  // A, well conditioned
};

ModelPair make_model_pair(const ModelPairConfig& cfg, std::uint64_t seed);

// Greedy "responses": each token is the argmax of the base head at a
// mixture-drawn base state; h_post = A h_base; p_post from sharpened logits;
// correctness ~ Bernoulli(mean p_base). Generates sequences until at least
// `min_tokens` tokens exist or `min_sequences` sequences, whichever is later.
RecordSet sample_traces(const ModelPair& pair, std::size_t min_sequences, std::size_t min_tokens,
                        std::uint64_t seed, const std::string& tag);

}  // namespace basecal::synthetic
