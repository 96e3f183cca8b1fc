// Acceptance suite: one [PASS]/[FAIL] line per criterion, exit status 1 if
// any fails.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "basecal/confidence.hpp"
#include "basecal/metrics.hpp"
#include "basecal/projection.hpp"
#include "basecal/random.hpp"
#include "basecal/synthetic.hpp"
#include "oracles.hpp"

using namespace basecal;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool ok = true;
  std::string detail;
};

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

// ---- ECE ----

Verdict ece_oracle() {
  rng::Engine g(2024);
  double worst = 0.0;
  for (int list = 0; list < 1000; ++list) {
    const auto n = 1 + rng::below(g, 2000);
    std::vector<oracle::Pair> ref;
    std::vector<EvalPair> pairs;
    for (std::uint64_t i = 0; i < n; ++i) {
      // A quarter of the confidences land exactly on a bin edge.
      const double c = rng::bernoulli(g, 0.25) ? static_cast<double>(rng::below(g, 21)) / 20.0 : rng::uniform01(g);
      const int z = rng::bernoulli(g, 0.5) ? 1 : 0;
      ref.push_back({c, z});
      pairs.push_back({c, z});
    }
    for (int m : {1, 5, 10, 20}) worst = std::max(worst, std::fabs(ece(pairs, m) - oracle::ece(ref, m)));
  }
  return {worst <= 1e-12, "max |diff| " + fmt(worst)};
}

std::vector<EvalPair> calibrated_pairs(std::size_t n, std::uint64_t seed) {
  rng::Engine g(seed);
  std::vector<EvalPair> p(n);
  for (auto& x : p) {
    x.confidence = rng::uniform01(g);
    x.correct = rng::bernoulli(g, x.confidence) ? 1 : 0;
  }
  return p;
}

Verdict calibrated_sanity() {
  int good = 0;
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const double e = ece(calibrated_pairs(100000, seed), 10);
    worst = std::max(worst, e);
    if (e <= 0.01) ++good;
  }
  return {good >= 19, std::to_string(good) + "/20 seeds with ECE <= 0.01, worst " + fmt(worst)};
}

Verdict hand_fixture() {
  const std::vector<EvalPair> p{{0.95, 1}, {0.95, 0}, {0.15, 0}, {0.25, 0}};
  const std::vector<oracle::Pair> ref{{0.95, 1}, {0.95, 0}, {0.15, 0}, {0.25, 0}};
  const double e = ece(p, 10);
  const bool agrees = std::fabs(oracle::ece(ref, 10) - 0.325) <= 1e-12;
  return {agrees && std::fabs(e - 0.325) <= 1e-12, "ECE " + std::to_string(e)};
}

// ---- projection ----

Verdict closed_form_vs_adam() {
  const auto data = synthetic::affine(64, 50000, 1e-3, 101);
  const auto valid = synthetic::affine_with(data.weight, data.bias, 5000, 1e-3, 102, "valid");
  const auto train_pairs = extract_pairs(data.set);
  const auto closed = fit_linear_closed_form(train_pairs);
  const auto res = train_projection(train_pairs, extract_pairs(valid), TrainConfig{});
  const double mse_closed = dataset_loss(closed, train_pairs, LossKind::Mse);
  const double mse_adam = dataset_loss(res.model, train_pairs, LossKind::Mse);

  const auto& L = res.model.layers[0];
  double num = 0.0, den = 0.0;
  for (int i = 0; i < 64; ++i) {
    for (int j = 0; j < 64; ++j) {
      const double d = L.weight[i * 64 + j] - data.weight(i, j);
      num += d * d;
      den += data.weight(i, j) * data.weight(i, j);
    }
    const double d = L.bias[i] - data.bias(i);
    num += d * d;
    den += data.bias(i) * data.bias(i);
  }
  const double rel = std::sqrt(num / den);
  const double gap = std::fabs(mse_adam - mse_closed);
  return {gap <= 1e-4 && rel <= 1e-2, "MSE gap " + fmt(gap) + ", rel Frobenius " + fmt(rel) + ", " +
                                          std::to_string(res.history.size()) + " epochs"};
}

// Re-derives every pre-activation and residual so instances near a ReLU or
// |.| kink can be redrawn.
double kink_margin(const ProjectionNet& net, const HiddenPairs& data, LossKind loss) {
  const auto params = net.parameters();
  const auto d = static_cast<Eigen::Index>(net.dim());
  const int layers = net.architecture() == Architecture::Linear ? 1 : 3;
  double margin = INFINITY;
  for (Eigen::Index r = 0; r < data.rows(); ++r) {
    Eigen::VectorXd a = data.post.row(r).transpose();
    std::size_t off = 0;
    for (int l = 0; l < layers; ++l) {
      Eigen::VectorXd z(d);
      for (Eigen::Index i = 0; i < d; ++i) {
        double s = 0.0;
        for (Eigen::Index j = 0; j < d; ++j) s += params[off + static_cast<std::size_t>(i * d + j)] * a(j);
        z(i) = s + params[off + static_cast<std::size_t>(d * d + i)];
      }
      off += static_cast<std::size_t>(d * d + d);
      if (l + 1 < layers) {
        margin = std::min(margin, z.cwiseAbs().minCoeff());
        a = z.cwiseMax(0.0);
      } else {
        a = z;
      }
    }
    if (loss == LossKind::Mae) margin = std::min(margin, (a - data.base.row(r).transpose()).cwiseAbs().minCoeff());
  }
  return margin;
}

Verdict gradient_checks() {
  rng::Engine g(7);
  double worst = 0.0;
  int instances = 0;
  std::string worst_case;
  for (auto arch : {Architecture::Linear, Architecture::Mlp3}) {
    for (auto loss : {LossKind::Mse, LossKind::Mae, LossKind::Cosine}) {
      for (int k = 0; k < 100; ++k) {
        const auto d = static_cast<std::uint32_t>(2 + rng::below(g, 7));
        ProjectionNet net(arch, d);
        HiddenPairs data;
        for (;;) {
          net.initialize(g());
          auto params = net.parameters();
          for (auto& p : params) p += 0.3 * rng::normal(g);
          net.set_parameters(params);
          const auto n = static_cast<Eigen::Index>(1 + rng::below(g, 6));
          data.post.resize(n, d);
          data.base.resize(n, d);
          for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < d; ++j) {
              data.post(i, j) = rng::normal(g);
              data.base(i, j) = rng::normal(g);
            }
          if (kink_margin(net, data, loss) > 1e-2) break;
        }
        std::vector<double> grad;
        net.loss_and_gradient(data.post, data.base, loss, &grad);
        auto params = net.parameters();
        ProjectionNet probe = net;
        const double h = 1e-4;
        double diff2 = 0.0, fd2 = 0.0, an2 = 0.0;
        for (std::size_t i = 0; i < params.size(); ++i) {
          const double keep = params[i];
          params[i] = keep + h;
          probe.set_parameters(params);
          const double up = probe.loss_and_gradient(data.post, data.base, loss, nullptr);
          params[i] = keep - h;
          probe.set_parameters(params);
          const double down = probe.loss_and_gradient(data.post, data.base, loss, nullptr);
          params[i] = keep;
          const double fd = (up - down) / (2 * h);
          diff2 += (fd - grad[i]) * (fd - grad[i]);
          fd2 += fd * fd;
          an2 += grad[i] * grad[i];
        }
        const double rel = std::sqrt(diff2) / std::max(std::sqrt(std::max(fd2, an2)), 1e-300);
        if (rel > worst) {
          worst = rel;
          worst_case = to_string(arch) + "/" + to_string(loss);
        }
        ++instances;
      }
    }
  }
  return {worst <= 1e-4, std::to_string(instances) + " instances, worst rel error " + fmt(worst) +
                             (worst_case.empty() ? "" : " (" + worst_case + ")")};
}

Verdict end_to_end() {
  const synthetic::ModelPairConfig cfg;
  const auto pair = synthetic::make_model_pair(cfg, 11);
  const auto train = synthetic::sample_traces(pair, 0, 20000, 12, "train");
  const auto valid = synthetic::sample_traces(pair, 0, 2000, 13, "valid");
  const auto test = synthetic::sample_traces(pair, 2000, 0, 14, "test");
  TrainConfig tc;
  tc.seed = 3;
  const auto res = train_projection(train, valid, tc);

  std::vector<EvalPair> vanilla, reeval, proj;
  double mad = 0.0;
  for (const auto& s : test.sequences) {
    const double v = score_vanilla(s).value, r = score_reeval(s).value, p = score_proj(s, res.model, pair.head).value;
    vanilla.push_back({v, *s.correctness});
    reeval.push_back({r, *s.correctness});
    proj.push_back({p, *s.correctness});
    mad += std::fabs(p - r);
  }
  mad /= static_cast<double>(test.sequences.size());
  const double e_v = ece(vanilla), e_r = ece(reeval), e_p = ece(proj);
  const bool a = e_v - e_r >= 0.05, b = mad <= 0.02, c = std::fabs(e_p - e_r) <= 0.02;
  return {a && b && c, std::string("(a) ") + (a ? "ok" : "fail") + " vanilla " + fmt(e_v) + " vs base " + fmt(e_r) +
                           "; (b) " + (b ? "ok" : "fail") + " MAD " + fmt(mad) + "; (c) " + (c ? "ok" : "fail") +
                           " proj ECE " + fmt(e_p) + "; " + std::to_string(train.manifest.num_tokens) +
                           " train pairs, " + std::to_string(test.sequences.size()) + " test sequences"};
}

// ---- temperature, SE, selective ----

Verdict temperature() {
  std::mt19937_64 g(31);
  const auto set = oracle::random_recordset(g, 500, 2, 6);
  double worst_id = 0.0;
  for (const auto& s : set.sequences) {
    const double v = score_vanilla(s).value;
    worst_id = std::max(worst_id, std::fabs(apply_temperature(s, {TemperatureMode::SequenceLogOdds, 1.0}).value - v));
    bool has_logits = true;
    std::vector<double> from_logits;
    for (const auto& t : s.tokens) {
      if (!t.include_in_confidence) continue;
      if (!t.logits_post) {
        has_logits = false;
        break;
      }
      from_logits.push_back(oracle::softmax_at(std::vector<double>(t.logits_post->begin(), t.logits_post->end()), t.token_id));
    }
    if (has_logits) {
      const double tok = apply_temperature(s, {TemperatureMode::TokenLevel, 1.0}).value;
      worst_id = std::max(worst_id, std::fabs(tok - oracle::mean(from_logits)));
    }
  }

  const auto calibrated = synthetic::calibrated(20000, 5, true);
  const double tau_seq = fit_temperature(calibrated, TemperatureMode::SequenceLogOdds).tau;
  const double tau_tok = fit_temperature(calibrated, TemperatureMode::TokenLevel).tau;
  const bool tau_ok = tau_seq >= 0.95 && tau_seq <= 1.05 && tau_tok >= 0.95 && tau_tok <= 1.05;

  // Miscalibrated labels put the optimum in the interior of the search range.
  rng::Engine e(32);
  std::vector<SequenceRecord> recs;
  for (int i = 0; i < 3000; ++i) {
    SequenceRecord s;
    s.sequence_id = std::to_string(i);
    TokenRecord t;
    t.p_post = static_cast<float>(rng::uniform01(e));
    s.tokens.push_back(t);
    s.correctness = rng::bernoulli(e, std::pow(t.p_post, 0.5)) ? 1 : 0;
    recs.push_back(s);
  }
  const double fitted = std::log(fit_temperature(recs, TemperatureMode::SequenceLogOdds).tau);
  const double lo = std::log(kMinTemperature), hi = std::log(kMaxTemperature), step = (hi - lo) / 999;
  double best = lo, best_nll = INFINITY;
  for (int k = 0; k < 1000; ++k) {
    const double tau = std::exp(lo + k * step);
    double nll = 0.0;
    for (const auto& s : recs) {
      const double c = std::clamp(static_cast<double>(s.tokens[0].p_post), 1e-6, 1 - 1e-6);
      nll += oracle::bce(1.0 / (1.0 + std::exp(-std::log(c / (1 - c)) / tau)), *s.correctness);
    }
    if (nll < best_nll) {
      best_nll = nll;
      best = lo + k * step;
    }
  }
  const bool grid_ok = std::fabs(fitted - best) <= step;
  return {worst_id <= 1e-10 && tau_ok && grid_ok,
          "identity max |diff| " + fmt(worst_id) + "; tau " + fmt(tau_seq) + " (sequence), " + fmt(tau_tok) +
              " (token); golden vs grid |dlog tau| " + fmt(std::fabs(fitted - best)) + " (spacing " + fmt(step) + ")"};
}

double se_of(const std::vector<int>& sizes) {
  std::vector<SequenceRecord> group;
  std::int64_t cluster = 0;
  for (int size : sizes) {
    for (int k = 0; k < size; ++k) {
      SequenceRecord s;
      s.sequence_id = "s" + std::to_string(group.size());
      s.sample_group = "g";
      s.cluster_id = cluster;
      group.push_back(s);
    }
    ++cluster;
  }
  std::vector<const SequenceRecord*> ptrs;
  for (const auto& s : group) ptrs.push_back(&s);
  return score_semantic_entropy(ptrs).value;
}

Verdict semantic_entropy() {
  const double one = se_of({10}), zero = se_of(std::vector<int>(10, 1)), mixed = se_of({5, 3, 2});
  const bool ok = std::fabs(one - 1.0) <= 1e-4 && std::fabs(zero) <= 1e-4 && std::fabs(mixed - 0.5528) <= 1e-4;
  return {ok, "values " + fmt(one) + ", " + fmt(zero) + ", " + std::to_string(mixed)};
}

Verdict selective() {
  const auto pairs = calibrated_pairs(100000, 77);
  const auto thresholds = threshold_range(0.5, 0.95, 0.05);
  const auto curve = selective_curve(pairs, thresholds);
  bool ok = curve.size() == 10;
  double min_margin = INFINITY;
  for (std::size_t i = 0; i < curve.size(); ++i) {
    if (!curve[i].accuracy) {
      ok = false;
      continue;
    }
    min_margin = std::min(min_margin, *curve[i].accuracy - (curve[i].threshold - 0.02));
    if (i > 0 && curve[i].coverage > curve[i - 1].coverage) ok = false;
  }
  ok = ok && min_margin >= 0.0;
  return {ok, "min accuracy - (t - 0.02) = " + fmt(min_margin)};
}

// ---- determinism through the CLI ----

bool sh(const std::string& args) {
  const std::string cmd = std::string(BASECAL_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) && WEXITSTATUS(status) == 0;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return "<missing " + p.string() + ">";
  return {std::istreambuf_iterator<char>(in), {}};
}

Verdict determinism() {
  oracle::TempDir dir;
  const auto d = dir.path.string();
  if (!sh("synth --kind pair --seed 21 --out-dir " + d + " --train-tokens 8000 --valid-tokens 1000 --sequences 400")) {
    return {false, "synth failed"};
  }
  const std::vector<std::string> artifacts{"proj.bcpj", "proj.bcpj.log.json", "confidences.csv",
                                           "confidences.csv.meta.json", "report/summary.csv", "report/bins.csv",
                                           "report/selective.csv", "report/report_meta.json"};
  std::vector<std::string> runs[2];
  for (int r = 0; r < 2; ++r) {
    const std::string out = d + "/run" + std::to_string(r);
    fs::create_directories(out);
    const bool ok =
        sh("train --train " + d + "/train.bcrd --valid " + d + "/valid.bcrd --arch mlp3 --seed 5 --max-epochs 5 --out " +
           out + "/proj.bcpj") &&
        sh("score --records " + d + "/test.bcrd --methods vanilla,reeval,proj --projection " + out +
           "/proj.bcpj --output-layer " + d + "/head.bcol --out-dir " + out) &&
        sh("eval --confidences " + out + "/confidences.csv --records " + d + "/test.bcrd --out-dir " + out + "/report");
    if (!ok) return {false, "CLI run " + std::to_string(r) + " failed"};
    for (const auto& a : artifacts) runs[r].push_back(slurp(out + "/" + a));
  }
  std::vector<std::string> differing;
  for (std::size_t i = 0; i < artifacts.size(); ++i)
    if (runs[0][i] != runs[1][i]) differing.push_back(artifacts[i]);
  std::string detail = std::to_string(artifacts.size()) + " artifacts compared";
  for (const auto& a : differing) detail += ", differs: " + a;
  return {differing.empty(), detail};
}

struct Criterion {
  std::string name;
  double time_limit;  // seconds; 0 for none
  std::function<Verdict()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {"ECE oracle equivalence (1000 lists, M in {1,5,10,20})", 5, ece_oracle},
      {"Calibrated-data ECE sanity (N=100k, 20 seeds)", 10, calibrated_sanity},
      {"Hand ECE fixture = 0.325", 0, hand_fixture},
      {"Closed-form vs iterative linear projection (d=64, 50k tokens)", 60, closed_form_vs_adam},
      {"Gradient checks {linear, mlp3} x {mse, mae, cosine}", 0, gradient_checks},
      {"End-to-end calibration recovery on the synthetic model pair", 120, end_to_end},
      {"Temperature identity, calibrated fit and grid oracle", 0, temperature},
      {"Semantic-entropy fixtures", 0, semantic_entropy},
      {"Selective-classification accuracy floor and monotone coverage", 0, selective},
      {"Determinism of train / score / eval through the CLI", 0, determinism},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.time_limit > 0 && secs >= c.time_limit) {
      v.ok = false;
      v.detail += "; over the " + fmt(c.time_limit) + " s limit";
    }
    if (!v.ok) ++failures;
    std::cout << (v.ok ? "[PASS] " : "[FAIL] ") << c.name << " -- " << v.detail << " (" << fmt(secs) << " s)"
              << std::endl;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failures)) << "/" << criteria.size() << " criteria passed"
            << std::endl;
  return failures == 0 ? 0 : 1;
}
