#include "basecal/projection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "basecal/container.hpp"
#include "basecal/errors.hpp"
#include "basecal/random.hpp"

namespace basecal {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

std::size_t layer_count(Architecture a) { return a == Architecture::Linear ? 1 : 3; }

// Per-row loss and its gradient with respect to the prediction row.
double row_loss(LossKind loss, const Eigen::RowVectorXd& p, const Eigen::RowVectorXd& t, Eigen::RowVectorXd& grad) {
  switch (loss) {
    case LossKind::Mse: {
      const Eigen::RowVectorXd diff = p - t;
      grad = 2.0 * diff;
      return diff.squaredNorm();
    }
    case LossKind::Mae: {
      const Eigen::RowVectorXd diff = p - t;
      grad = diff.unaryExpr([](double x) { return static_cast<double>((x > 0.0) - (x < 0.0)); });
      return diff.cwiseAbs().sum();
    }
    case LossKind::Cosine: {
      const double np = p.norm();
      const double nt = t.norm();
      if (np == 0.0 || nt == 0.0) throw NumericalError("cosine loss undefined for a zero vector");
      const double cos = p.dot(t) / (np * nt);
      grad = -(t / (np * nt) - cos * p / (np * np));
      return 1.0 - cos;
    }
  }
  return 0.0;
}

void check_finite_matrix(const MatrixXd& m, const char* what) {
  if (!m.allFinite()) throw NumericalError(std::string("non-finite values in ") + what);
}

HiddenPairs gather(const HiddenPairs& src, std::span<const Index> rows) {
  HiddenPairs out;
  out.post.resize(static_cast<Index>(rows.size()), src.post.cols());
  out.base.resize(static_cast<Index>(rows.size()), src.base.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.post.row(static_cast<Index>(i)) = src.post.row(rows[i]);
    out.base.row(static_cast<Index>(i)) = src.base.row(rows[i]);
  }
  return out;
}

}  // namespace

std::string to_string(Architecture a) { return a == Architecture::Linear ? "linear" : "mlp3"; }

std::string to_string(LossKind l) {
  switch (l) {
    case LossKind::Mse: return "mse";
    case LossKind::Mae: return "mae";
    case LossKind::Cosine: return "cosine";
  }
  return "?";
}

Architecture parse_architecture(const std::string& s) {
  if (s == "linear") return Architecture::Linear;
  if (s == "mlp3") return Architecture::Mlp3;
  throw ValidationError("unknown architecture '" + s + "' (expected linear or mlp3)");
}

LossKind parse_loss(const std::string& s) {
  if (s == "mse") return LossKind::Mse;
  if (s == "mae") return LossKind::Mae;
  if (s == "cosine") return LossKind::Cosine;
  throw ValidationError("unknown loss '" + s + "' (expected mse, mae or cosine)");
}

// ---------------------------------------------------------------------------
// ProjectionModel

ProjectionModel make_identity_projection(std::uint32_t dim) {
  std::vector<float> w(static_cast<std::size_t>(dim) * dim, 0.0f);
  for (std::uint32_t i = 0; i < dim; ++i) w[static_cast<std::size_t>(i) * dim + i] = 1.0f;
  const std::vector<float> b(dim, 0.0f);
  return make_affine_projection(dim, w, b);
}

ProjectionModel make_affine_projection(std::uint32_t dim, std::span<const float> weight, std::span<const float> bias) {
  if (weight.size() != static_cast<std::size_t>(dim) * dim || bias.size() != dim) {
    throw ShapeError("affine projection needs a " + std::to_string(dim) + "x" + std::to_string(dim) +
                     " weight and a length-" + std::to_string(dim) + " bias");
  }
  ProjectionModel m;
  m.architecture = Architecture::Linear;
  m.dim = dim;
  m.layers.push_back({dim, dim, {weight.begin(), weight.end()}, {bias.begin(), bias.end()}});
  return m;
}

void check_projection(const ProjectionModel& model) {
  if (model.dim == 0) throw ShapeError("projection dimension must be positive");
  if (model.layers.size() != layer_count(model.architecture)) {
    throw ShapeError(to_string(model.architecture) + " projection needs " +
                     std::to_string(layer_count(model.architecture)) + " layers, found " +
                     std::to_string(model.layers.size()));
  }
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const auto& l = model.layers[i];
    if (l.in != model.dim || l.out != model.dim ||
        l.weight.size() != static_cast<std::size_t>(l.in) * l.out || l.bias.size() != l.out) {
      throw ShapeError("projection layer " + std::to_string(i) + " has inconsistent shape");
    }
    auto finite = [](float x) { return std::isfinite(x); };
    if (!std::all_of(l.weight.begin(), l.weight.end(), finite) || !std::all_of(l.bias.begin(), l.bias.end(), finite)) {
      throw NumericalError("projection layer " + std::to_string(i) + " has non-finite parameters");
    }
  }
}

std::vector<double> project(const ProjectionModel& model, std::span<const double> h) {
  if (h.size() != model.dim) {
    throw ShapeError("projection expects length " + std::to_string(model.dim) + ", got " + std::to_string(h.size()));
  }
  std::vector<double> cur(h.begin(), h.end());
  std::vector<double> next;
  for (std::size_t li = 0; li < model.layers.size(); ++li) {
    const auto& l = model.layers[li];
    next.assign(l.out, 0.0);
    for (std::uint32_t r = 0; r < l.out; ++r) {
      const float* row = l.weight.data() + static_cast<std::size_t>(r) * l.in;
      double acc = l.bias[r];
      for (std::uint32_t c = 0; c < l.in; ++c) acc += static_cast<double>(row[c]) * cur[c];
      next[r] = (li + 1 < model.layers.size()) ? std::max(acc, 0.0) : acc;
    }
    cur.swap(next);
  }
  return cur;
}

std::vector<double> project(const ProjectionModel& model, std::span<const float> h) {
  const std::vector<double> wide(h.begin(), h.end());
  return project(model, std::span<const double>(wide));
}

double loss_value(LossKind loss, std::span<const double> predicted, std::span<const double> target) {
  if (predicted.size() != target.size()) throw ShapeError("loss operands differ in length");
  switch (loss) {
    case LossKind::Mse: {
      double s = 0.0;
      for (std::size_t i = 0; i < predicted.size(); ++i) s += (predicted[i] - target[i]) * (predicted[i] - target[i]);
      return s;
    }
    case LossKind::Mae: {
      double s = 0.0;
      for (std::size_t i = 0; i < predicted.size(); ++i) s += std::abs(predicted[i] - target[i]);
      return s;
    }
    case LossKind::Cosine: {
      double dot = 0.0, pp = 0.0, tt = 0.0;
      for (std::size_t i = 0; i < predicted.size(); ++i) {
        dot += predicted[i] * target[i];
        pp += predicted[i] * predicted[i];
        tt += target[i] * target[i];
      }
      if (pp == 0.0 || tt == 0.0) throw NumericalError("cosine loss undefined for a zero vector");
      const double cos = std::clamp(dot / (std::sqrt(pp) * std::sqrt(tt)), -1.0, 1.0);
      return 1.0 - cos;
    }
  }
  return 0.0;
}

HiddenPairs extract_pairs(const RecordSet& set) {
  const Index d = set.manifest.hidden_dim;
  Index n = 0;
  for (const auto& s : set.sequences)
    for (const auto& t : s.tokens) n += t.include_in_confidence;
  HiddenPairs pairs;
  pairs.post.resize(n, d);
  pairs.base.resize(n, d);
  Index row = 0;
  for (const auto& s : set.sequences) {
    for (std::size_t i = 0; i < s.tokens.size(); ++i) {
      const auto& t = s.tokens[i];
      if (!t.include_in_confidence) continue;
      if (!t.h_post || !t.h_base) {
        throw PreconditionError("sequence '" + s.sequence_id + "' token " + std::to_string(i) + " lacks " +
                                (!t.h_post ? "h_post" : "h_base") + "; projection training needs both hidden states");
      }
      if (static_cast<Index>(t.h_post->size()) != d || static_cast<Index>(t.h_base->size()) != d) {
        throw ShapeError("sequence '" + s.sequence_id + "' hidden state length differs from manifest");
      }
      for (Index c = 0; c < d; ++c) {
        pairs.post(row, c) = (*t.h_post)[c];
        pairs.base(row, c) = (*t.h_base)[c];
      }
      ++row;
    }
  }
  return pairs;
}

double dataset_loss(const ProjectionModel& model, const HiddenPairs& pairs, LossKind loss) {
  const ProjectionNet net(model);
  return net.loss_and_gradient(pairs.post, pairs.base, loss, nullptr);
}

// ---------------------------------------------------------------------------
// ProjectionNet

ProjectionNet::ProjectionNet(Architecture arch, std::uint32_t dim) : arch_(arch), dim_(dim) {
  if (dim == 0) throw ShapeError("projection dimension must be positive");
  const auto n = layer_count(arch);
  weights_.assign(n, MatrixXd::Zero(dim, dim));
  biases_.assign(n, VectorXd::Zero(dim));
}

ProjectionNet::ProjectionNet(const ProjectionModel& model) : arch_(model.architecture), dim_(model.dim) {
  check_projection(model);
  for (const auto& l : model.layers) {
    MatrixXd w(l.out, l.in);
    for (std::uint32_t r = 0; r < l.out; ++r)
      for (std::uint32_t c = 0; c < l.in; ++c) w(r, c) = l.weight[static_cast<std::size_t>(r) * l.in + c];
    VectorXd b(l.out);
    for (std::uint32_t r = 0; r < l.out; ++r) b(r) = l.bias[r];
    weights_.push_back(std::move(w));
    biases_.push_back(std::move(b));
  }
}

void ProjectionNet::initialize(std::uint64_t seed) {
  if (arch_ == Architecture::Linear) {
    weights_[0].setIdentity();
    biases_[0].setZero();
    return;
  }
  rng::Engine g(seed);
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(weights_[l].cols()));
    for (Index r = 0; r < weights_[l].rows(); ++r)
      for (Index c = 0; c < weights_[l].cols(); ++c) weights_[l](r, c) = rng::uniform(g, -bound, bound);
    for (Index r = 0; r < biases_[l].size(); ++r) biases_[l](r) = rng::uniform(g, -bound, bound);
  }
}

std::size_t ProjectionNet::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) n += weights_[l].size() + biases_[l].size();
  return n;
}

// Order: for each layer, weight row-major then bias.
std::vector<double> ProjectionNet::parameters() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    for (Index r = 0; r < weights_[l].rows(); ++r)
      for (Index c = 0; c < weights_[l].cols(); ++c) flat.push_back(weights_[l](r, c));
    for (Index r = 0; r < biases_[l].size(); ++r) flat.push_back(biases_[l](r));
  }
  return flat;
}

void ProjectionNet::set_parameters(std::span<const double> flat) {
  if (flat.size() != parameter_count()) throw ShapeError("parameter vector has wrong length");
  std::size_t k = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    for (Index r = 0; r < weights_[l].rows(); ++r)
      for (Index c = 0; c < weights_[l].cols(); ++c) weights_[l](r, c) = flat[k++];
    for (Index r = 0; r < biases_[l].size(); ++r) biases_[l](r) = flat[k++];
  }
}

MatrixXd ProjectionNet::forward(const MatrixXd& inputs) const {
  MatrixXd cur = inputs;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    MatrixXd z = cur * weights_[l].transpose();
    z.rowwise() += biases_[l].transpose();
    if (l + 1 < weights_.size()) z = z.cwiseMax(0.0);
    cur = std::move(z);
  }
  return cur;
}

double ProjectionNet::loss_and_gradient(const MatrixXd& inputs, const MatrixXd& targets, LossKind loss,
                                        std::vector<double>* gradient) const {
  if (inputs.cols() != dim_ || targets.cols() != dim_ || inputs.rows() != targets.rows()) {
    throw ShapeError("input/target matrices do not match projection dimension");
  }
  const Index n = inputs.rows();
  if (n == 0) throw PreconditionError("loss over an empty batch");

  // Forward, keeping pre-activations for backprop.
  std::vector<MatrixXd> acts{inputs};
  std::vector<MatrixXd> pre;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    MatrixXd z = acts.back() * weights_[l].transpose();
    z.rowwise() += biases_[l].transpose();
    pre.push_back(z);
    acts.push_back(l + 1 < weights_.size() ? MatrixXd(z.cwiseMax(0.0)) : z);
  }
  const MatrixXd& out = acts.back();

  MatrixXd delta(n, dim_);
  double total = 0.0;
  Eigen::RowVectorXd p_row, t_row, g_row;
  for (Index i = 0; i < n; ++i) {
    p_row = out.row(i);
    t_row = targets.row(i);
    total += row_loss(loss, p_row, t_row, g_row);
    delta.row(i) = g_row;
  }
  const double mean = total / static_cast<double>(n);
  if (!gradient) return mean;

  delta /= static_cast<double>(n);
  std::vector<MatrixXd> grad_w(weights_.size());
  std::vector<VectorXd> grad_b(weights_.size());
  for (std::size_t li = weights_.size(); li-- > 0;) {
    if (li + 1 < weights_.size()) delta = delta.cwiseProduct((pre[li].array() > 0.0).cast<double>().matrix());
    grad_w[li] = delta.transpose() * acts[li];
    grad_b[li] = delta.colwise().sum().transpose();
    if (li > 0) delta = delta * weights_[li];
  }
  gradient->clear();
  gradient->reserve(parameter_count());
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    for (Index r = 0; r < grad_w[l].rows(); ++r)
      for (Index c = 0; c < grad_w[l].cols(); ++c) gradient->push_back(grad_w[l](r, c));
    for (Index r = 0; r < grad_b[l].size(); ++r) gradient->push_back(grad_b[l](r));
  }
  return mean;
}

ProjectionModel ProjectionNet::snapshot(LossKind loss, TrainingProvenance provenance) const {
  ProjectionModel m;
  m.architecture = arch_;
  m.train_loss = loss;
  m.dim = dim_;
  m.provenance = std::move(provenance);
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    AffineLayer layer;
    layer.in = static_cast<std::uint32_t>(weights_[l].cols());
    layer.out = static_cast<std::uint32_t>(weights_[l].rows());
    for (Index r = 0; r < weights_[l].rows(); ++r)
      for (Index c = 0; c < weights_[l].cols(); ++c) layer.weight.push_back(static_cast<float>(weights_[l](r, c)));
    for (Index r = 0; r < biases_[l].size(); ++r) layer.bias.push_back(static_cast<float>(biases_[l](r)));
    m.layers.push_back(std::move(layer));
  }
  check_projection(m);
  return m;
}

// ---------------------------------------------------------------------------
// Training

void TrainConfig::check() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ValidationError("learning rate must be > 0");
  if (batch_size < 1) throw ValidationError("batch size must be >= 1");
  if (patience < 1) throw ValidationError("patience must be >= 1");
  if (max_epochs < 1) throw ValidationError("max epochs must be >= 1");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw ValidationError("validation fraction must lie in (0, 1)");
  }
}

TrainResult train_projection(const HiddenPairs& train, const HiddenPairs& valid, const TrainConfig& cfg,
                             const std::string& train_fingerprint) {
  cfg.check();
  if (train.rows() == 0) throw PreconditionError("no training pairs");
  if (valid.rows() == 0) throw PreconditionError("no validation pairs");
  if (train.post.cols() != valid.post.cols()) throw ShapeError("training and validation hidden dims differ");
  check_finite_matrix(train.post, "training h_post");
  check_finite_matrix(train.base, "training h_base");
  if (cfg.loss == LossKind::Cosine) {
    for (Index i = 0; i < train.rows(); ++i)
      if (train.base.row(i).squaredNorm() == 0.0) throw PreconditionError("cosine loss with a zero target state");
  }

  const auto dim = static_cast<std::uint32_t>(train.post.cols());
  rng::Engine g(cfg.seed);
  ProjectionNet net(cfg.architecture, dim);
  net.initialize(g());

  std::vector<double> params = net.parameters();
  std::vector<double> m(params.size(), 0.0), v(params.size(), 0.0), grad;
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double beta1_t = 1.0, beta2_t = 1.0;

  std::vector<Index> order(static_cast<std::size_t>(train.rows()));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<Index>(i);

  TrainResult result;
  std::vector<double> best_params = params;
  double best_valid = std::numeric_limits<double>::infinity();
  int since_best = 0;
  int epochs_run = 0;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    rng::shuffle(std::span<Index>(order), g);
    double train_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      const auto batch = gather(train, std::span<const Index>(order).subspan(start, stop - start));
      const double batch_loss = net.loss_and_gradient(batch.post, batch.base, cfg.loss, &grad);
      train_sum += batch_loss * static_cast<double>(stop - start);
      beta1_t *= beta1;
      beta2_t *= beta2;
      for (std::size_t k = 0; k < params.size(); ++k) {
        m[k] = beta1 * m[k] + (1.0 - beta1) * grad[k];
        v[k] = beta2 * v[k] + (1.0 - beta2) * grad[k] * grad[k];
        const double m_hat = m[k] / (1.0 - beta1_t);
        const double v_hat = v[k] / (1.0 - beta2_t);
        params[k] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + eps);
      }
      net.set_parameters(params);
    }
    epochs_run = epoch;
    const double train_loss = train_sum / static_cast<double>(order.size());
    const double valid_loss = net.loss_and_gradient(valid.post, valid.base, cfg.loss, nullptr);
    result.history.push_back({epoch, train_loss, valid_loss});
    if (!std::isfinite(valid_loss) || !std::isfinite(train_loss)) {
      throw DivergenceError("projection training diverged at epoch " + std::to_string(epoch) +
                                " (validation loss " + std::to_string(valid_loss) + ")",
                            epoch);
    }
    if (valid_loss < best_valid) {
      best_valid = valid_loss;
      best_params = params;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }

  net.set_parameters(best_params);
  TrainingProvenance prov;
  prov.method = "adam";
  prov.train_fingerprint = train_fingerprint;
  prov.epochs_run = static_cast<std::uint32_t>(epochs_run);
  prov.best_valid_loss = best_valid;
  prov.seed = cfg.seed;
  result.model = net.snapshot(cfg.loss, prov);
  return result;
}

TrainResult train_projection(const RecordSet& train, const RecordSet& valid, const TrainConfig& cfg) {
  if (train.manifest.hidden_dim != valid.manifest.hidden_dim ||
      train.manifest.tokenizer_fingerprint != valid.manifest.tokenizer_fingerprint ||
      train.manifest.base_model_id != valid.manifest.base_model_id ||
      train.manifest.post_model_id != valid.manifest.post_model_id) {
    throw PreconditionError("training and validation record sets have different manifests");
  }
  return train_projection(extract_pairs(train), extract_pairs(valid), cfg, fingerprint(train));
}

TrainResult train_projection(const RecordSet& train, const TrainConfig& cfg) {
  cfg.check();
  const std::size_t n = train.sequences.size();
  if (n < 2) throw PreconditionError("need at least two sequences to hold out a validation split");
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  rng::Engine g(cfg.seed ^ 0x5eedf00dULL);
  rng::shuffle(std::span<std::size_t>(idx), g);
  const std::size_t n_valid = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(cfg.validation_fraction * static_cast<double>(n))), 1, n - 1);
  std::vector<bool> is_valid(n, false);
  for (std::size_t i = 0; i < n_valid; ++i) is_valid[idx[i]] = true;

  RecordSet tr, va;
  tr.manifest = va.manifest = train.manifest;
  for (std::size_t i = 0; i < n; ++i) (is_valid[i] ? va : tr).sequences.push_back(train.sequences[i]);
  refresh_counts(tr.manifest, tr.sequences);
  refresh_counts(va.manifest, va.sequences);
  return train_projection(extract_pairs(tr), extract_pairs(va), cfg, fingerprint(train));
}

ProjectionModel fit_linear_closed_form(const HiddenPairs& train) {
  const Index n = train.rows();
  const Index d = train.post.cols();
  if (n < d + 1) {
    throw PreconditionError("closed-form fit needs at least d + 1 = " + std::to_string(d + 1) + " pairs, got " +
                            std::to_string(n));
  }
  check_finite_matrix(train.post, "h_post");
  check_finite_matrix(train.base, "h_base");

  MatrixXd design(n, d + 1);
  design.leftCols(d) = train.post;
  design.col(d).setOnes();
  MatrixXd gram = design.transpose() * design;
  gram.diagonal().array() += kClosedFormRidge;
  const MatrixXd rhs = design.transpose() * train.base;

  const Eigen::LDLT<MatrixXd> ldlt(gram);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.rcond() < 1e-15) {
    throw NumericalError("design matrix is rank-deficient beyond ridge rescue (rcond " +
                         std::to_string(ldlt.rcond()) + ")");
  }
  const MatrixXd coef = ldlt.solve(rhs);  // (d + 1) x d, last row is the bias
  check_finite_matrix(coef, "closed-form solution");

  std::vector<float> w(static_cast<std::size_t>(d * d));
  std::vector<float> b(static_cast<std::size_t>(d));
  for (Index r = 0; r < d; ++r) {
    for (Index c = 0; c < d; ++c) w[static_cast<std::size_t>(r * d + c)] = static_cast<float>(coef(c, r));
    b[static_cast<std::size_t>(r)] = static_cast<float>(coef(d, r));
  }
  auto model = make_affine_projection(static_cast<std::uint32_t>(d), w, b);
  model.provenance.method = "closed_form";
  return model;
}

ProjectionModel fit_linear_closed_form(const RecordSet& train) {
  auto model = fit_linear_closed_form(extract_pairs(train));
  model.provenance.train_fingerprint = fingerprint(train);
  return model;
}

// ---------------------------------------------------------------------------
// BCPJ file

std::vector<std::uint8_t> encode_projection(const ProjectionModel& model) {
  check_projection(model);
  container::Document doc;
  const auto& p = model.provenance;
  doc.meta = {{"kind", "projection"},
              {"architecture", to_string(model.architecture)},
              {"loss", to_string(model.train_loss)},
              {"dim", model.dim},
              {"num_layers", model.layers.size()},
              {"provenance",
               {{"method", p.method},
                {"train_fingerprint", p.train_fingerprint},
                {"epochs_run", p.epochs_run},
                {"best_valid_loss", p.best_valid_loss ? nlohmann::json(*p.best_valid_loss) : nlohmann::json()},
                {"seed", p.seed}}}};
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const auto& l = model.layers[i];
    const std::string prefix = "layer" + std::to_string(i);
    doc.tensors[prefix + ".weight"] = container::Tensor::from_f32(l.weight, {l.out, l.in});
    doc.tensors[prefix + ".bias"] = container::Tensor::from_f32(l.bias, {l.out});
  }
  return container::encode(container::kProjectionMagic, kProjectionFormatVersion, doc);
}

ProjectionModel decode_projection(std::span<const std::uint8_t> bytes) {
  constexpr std::uint32_t supported[] = {kProjectionFormatVersion};
  const auto doc = container::decode(bytes, container::kProjectionMagic, supported);
  ProjectionModel m;
  std::size_t n_layers = 0;
  try {
    m.architecture = parse_architecture(doc.meta.at("architecture").get<std::string>());
    m.train_loss = parse_loss(doc.meta.at("loss").get<std::string>());
    m.dim = doc.meta.at("dim").get<std::uint32_t>();
    n_layers = doc.meta.at("num_layers").get<std::size_t>();
    const auto& p = doc.meta.at("provenance");
    m.provenance.method = p.at("method").get<std::string>();
    m.provenance.train_fingerprint = p.at("train_fingerprint").get<std::string>();
    m.provenance.epochs_run = p.at("epochs_run").get<std::uint32_t>();
    if (!p.at("best_valid_loss").is_null()) m.provenance.best_valid_loss = p["best_valid_loss"].get<double>();
    m.provenance.seed = p.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed projection header: ") + e.what());
  } catch (const ValidationError& e) {
    throw FormatError(e.what());
  }
  if (n_layers != layer_count(m.architecture)) throw CorruptionError("projection layer count disagrees with architecture");
  for (std::size_t i = 0; i < n_layers; ++i) {
    const std::string prefix = "layer" + std::to_string(i);
    const auto& wt = doc.at(prefix + ".weight");
    const auto& bt = doc.at(prefix + ".bias");
    if (wt.shape.size() != 2 || bt.shape.size() != 1) throw CorruptionError("projection tensor has wrong rank");
    AffineLayer l;
    l.out = static_cast<std::uint32_t>(wt.shape[0]);
    l.in = static_cast<std::uint32_t>(wt.shape[1]);
    l.weight = wt.to_f32();
    l.bias = bt.to_f32();
    m.layers.push_back(std::move(l));
  }
  try {
    check_projection(m);
  } catch (const ShapeError& e) {
    throw CorruptionError(e.what());
  }
  return m;
}

void save_projection(const ProjectionModel& model, const std::filesystem::path& path) {
  container::write_file(path, encode_projection(model));
}

ProjectionModel load_projection(const std::filesystem::path& path) {
  return decode_projection(container::read_file(path));
}

}  // namespace basecal
