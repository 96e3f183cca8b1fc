#include "basecal/synthetic.hpp"

#include <cmath>

#include "basecal/random.hpp"

namespace basecal::synthetic {

namespace {

Eigen::MatrixXd gaussian(rng::Engine& g, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng::normal(g);
  return m;
}

Eigen::MatrixXd random_orthogonal(rng::Engine& g, Eigen::Index d) {
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian(g, d, d));
  return qr.householderQ() * Eigen::MatrixXd::Identity(d, d);
}

}  // namespace

RecordManifest make_manifest(std::uint32_t hidden_dim, std::uint32_t vocab_size, const std::string& tag) {
  RecordManifest m;
  m.post_model_id = "synthetic-post-" + tag;
  m.base_model_id = "synthetic-base-" + tag;
  m.hidden_dim = hidden_dim;
  m.vocab_size = vocab_size;
  m.tokenizer_fingerprint = m.base_tokenizer_fingerprint = "synthetic-tokenizer";
  return m;
}

RecordSet calibrated(std::size_t n, std::uint64_t seed, bool with_logits) {
  rng::Engine g(seed);
  RecordSet set;
  set.manifest = make_manifest(1, 2, "calibrated");
  set.sequences.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    // Keep c strictly inside (0, 1) so the log-odds stay finite.
    const double c = std::clamp(rng::uniform01(g), 1e-6, 1.0 - 1e-6);
    SequenceRecord seq;
    seq.sequence_id = "cal-" + std::to_string(i);
    seq.dataset_tag = "calibrated";
    TokenRecord t;
    t.token_id = 0;
    if (with_logits) {
      const float logit = static_cast<float>(std::log(c / (1.0 - c)));
      t.logits_post = std::vector<float>{logit, 0.0f};
      t.p_post = static_cast<float>(1.0 / (1.0 + std::exp(-static_cast<double>(logit))));
    } else {
      t.p_post = static_cast<float>(c);
    }
    t.p_base = t.p_post;
    seq.tokens.push_back(std::move(t));
    seq.correctness = rng::bernoulli(g, seq.tokens[0].p_post) ? 1 : 0;
    set.sequences.push_back(std::move(seq));
  }
  refresh_counts(set.manifest, set.sequences);
  return set;
}

RecordSet affine_with(const Eigen::MatrixXd& weight, const Eigen::VectorXd& bias, std::size_t tokens,
                      double noise_sd, std::uint64_t seed, const std::string& tag) {
  const auto d = static_cast<std::uint32_t>(weight.rows());
  rng::Engine g(seed);
  RecordSet set;
  set.manifest = make_manifest(d, 1, "affine");
  set.sequences.reserve(tokens);
  Eigen::VectorXd x(d);
  for (std::size_t i = 0; i < tokens; ++i) {
    for (std::uint32_t c = 0; c < d; ++c) x(c) = static_cast<float>(rng::normal(g));
    Eigen::VectorXd y = weight * x + bias;
    for (std::uint32_t c = 0; c < d; ++c) y(c) += noise_sd * rng::normal(g);
    TokenRecord t;
    t.p_post = 0.5f;
    t.h_post = std::vector<float>(d);
    t.h_base = std::vector<float>(d);
    for (std::uint32_t c = 0; c < d; ++c) {
      (*t.h_post)[c] = static_cast<float>(x(c));
      (*t.h_base)[c] = static_cast<float>(y(c));
    }
    SequenceRecord seq;
    seq.sequence_id = tag + "-" + std::to_string(i);
    seq.dataset_tag = tag;
    seq.tokens.push_back(std::move(t));
    set.sequences.push_back(std::move(seq));
  }
  refresh_counts(set.manifest, set.sequences);
  return set;
}

AffineData affine(std::uint32_t dim, std::size_t tokens, double noise_sd, std::uint64_t seed) {
  rng::Engine g(seed);
  AffineData out;
  out.weight = gaussian(g, dim, dim) / std::sqrt(static_cast<double>(dim));
  out.bias = gaussian(g, dim, 1);
  out.set = affine_with(out.weight, out.bias, tokens, noise_sd, g(), "affine");
  return out;
}

ModelPair make_model_pair(const ModelPairConfig& cfg, std::uint64_t seed) {
  rng::Engine g(seed);
  ModelPair pair;
  pair.cfg = cfg;
  const auto d = static_cast<Eigen::Index>(cfg.hidden_dim);
  pair.head.vocab_size = cfg.vocab_size;
  pair.head.hidden_dim = cfg.hidden_dim;
  pair.head.weight.resize(static_cast<std::size_t>(cfg.vocab_size) * cfg.hidden_dim);
  for (auto& w : pair.head.weight) w = static_cast<float>(cfg.head_scale * rng::normal(g));
  pair.mixture_means = cfg.mean_scale * gaussian(g, cfg.mixture_components, d);
  Eigen::VectorXd s(d);
  for (Eigen::Index i = 0; i < d; ++i) s(i) = rng::uniform(g, 0.5, 2.0);
  pair.post_from_base = random_orthogonal(g, d) * s.asDiagonal() * random_orthogonal(g, d).transpose();
  return pair;
}

RecordSet sample_traces(const ModelPair& pair, std::size_t min_sequences, std::size_t min_tokens,
                        std::uint64_t seed, const std::string& tag) {
  const auto& cfg = pair.cfg;
  const auto d = static_cast<Eigen::Index>(cfg.hidden_dim);
  rng::Engine g(seed);
  RecordSet set;
  set.manifest = make_manifest(cfg.hidden_dim, cfg.vocab_size, "pair");
  std::size_t n_tokens = 0;
  Eigen::VectorXd hb(d);
  std::vector<double> hb_round(static_cast<std::size_t>(d));
  while (set.sequences.size() < min_sequences || n_tokens < min_tokens) {
    SequenceRecord seq;
    seq.sequence_id = tag + "-" + std::to_string(set.sequences.size());
    seq.dataset_tag = tag;
    const auto len = 1 + static_cast<std::size_t>(rng::below(g, cfg.max_tokens));
    double p_base_sum = 0.0;
    for (std::size_t k = 0; k < len; ++k) {
      const auto comp = static_cast<Eigen::Index>(rng::below(g, cfg.mixture_components));
      for (Eigen::Index c = 0; c < d; ++c) {
        hb(c) = static_cast<float>(pair.mixture_means(comp, c) + cfg.component_sd * rng::normal(g));
        hb_round[static_cast<std::size_t>(c)] = hb(c);
      }
      const auto base_dist = output_distribution(pair.head, hb_round);
      std::uint32_t token = 0;
      for (std::uint32_t v = 1; v < cfg.vocab_size; ++v)
        if (base_dist[v] > base_dist[token]) token = v;

      // Post-trained distribution: the same logits, sharpened.
      double mx = -INFINITY;
      std::vector<double> logits(cfg.vocab_size);
      for (std::uint32_t v = 0; v < cfg.vocab_size; ++v) {
        double acc = 0.0;
        for (Eigen::Index c = 0; c < d; ++c) acc += static_cast<double>(pair.head.weight[v * cfg.hidden_dim + c]) * hb(c);
        logits[v] = acc / cfg.sharpen_tau;
        mx = std::max(mx, logits[v]);
      }
      double denom = 0.0;
      for (double l : logits) denom += std::exp(l - mx);

      const Eigen::VectorXd hp = pair.post_from_base * hb;
      TokenRecord t;
      t.token_id = token;
      t.p_base = static_cast<float>(base_dist[token]);
      t.p_post = static_cast<float>(std::exp(logits[token] - mx) / denom);
      t.h_base = std::vector<float>(hb_round.begin(), hb_round.end());
      t.h_post = std::vector<float>(static_cast<std::size_t>(d));
      for (Eigen::Index c = 0; c < d; ++c) (*t.h_post)[static_cast<std::size_t>(c)] = static_cast<float>(hp(c));
      p_base_sum += *t.p_base;
      seq.tokens.push_back(std::move(t));
    }
    seq.correctness = rng::bernoulli(g, p_base_sum / static_cast<double>(len)) ? 1 : 0;
    n_tokens += len;
    set.sequences.push_back(std::move(seq));
  }
  refresh_counts(set.manifest, set.sequences);
  return set;
}

}  // namespace basecal::synthetic
