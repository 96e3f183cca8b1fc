#pragma once

// Learned maps from post-trained hidden space into base hidden space, their
// training (Adam with validation early stopping), the closed-form affine
// least-squares solution, and the BCPJ projection file.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "basecal/records.hpp"

namespace basecal {

enum class Architecture { Linear, Mlp3 };
enum class LossKind { Mse, Mae, Cosine };

std::string to_string(Architecture a);
std::string to_string(LossKind l);
Architecture parse_architecture(const std::string& s);
LossKind parse_loss(const std::string& s);

// Row-major weight of shape out x in.
struct AffineLayer {
  std::uint32_t in = 0;
  std::uint32_t out = 0;
  std::vector<float> weight;
  std::vector<float> bias;

  bool operator==(const AffineLayer&) const = default;
};

struct TrainingProvenance {
  std::string method;  // "adam" or "closed_form"
  std::string train_fingerprint;
  std::uint32_t epochs_run = 0;
  std::optional<double> best_valid_loss;
  std::uint64_t seed = 0;

  bool operator==(const TrainingProvenance&) const = default;
};

struct ProjectionModel {
  Architecture architecture = Architecture::Linear;
  LossKind train_loss = LossKind::Mse;
  std::uint32_t dim = 0;
  std::vector<AffineLayer> layers;  // ReLU between consecutive layers
  TrainingProvenance provenance;

  bool operator==(const ProjectionModel&) const = default;
};

ProjectionModel make_identity_projection(std::uint32_t dim);
ProjectionModel make_affine_projection(std::uint32_t dim, std::span<const float> weight, std::span<const float> bias);

// Throws ShapeError / NumericalError when shapes disagree with the
// architecture or a parameter is not finite.
void check_projection(const ProjectionModel& model);

std::vector<double> project(const ProjectionModel& model, std::span<const double> h);
std::vector<double> project(const ProjectionModel& model, std::span<const float> h);

// Per-token losses: squared L2 distance, L1 distance, or 1 - cosine.
double loss_value(LossKind loss, std::span<const double> predicted, std::span<const double> target);

// Row i of `post` / `base` is one (h_post, h_base) token pair; every
// included token contributes.
struct HiddenPairs {
  Eigen::MatrixXd post;
  Eigen::MatrixXd base;
  Eigen::Index rows() const { return post.rows(); }
};

HiddenPairs extract_pairs(const RecordSet& set);

// Mean per-token loss of the model over the pairs.
double dataset_loss(const ProjectionModel& model, const HiddenPairs& pairs, LossKind loss);

struct TrainConfig {
  Architecture architecture = Architecture::Linear;
  LossKind loss = LossKind::Mse;
  double learning_rate = 1e-3;
  std::size_t batch_size = 256;
  int max_epochs = 50;
  int patience = 3;
  std::uint64_t seed = 0;
  double validation_fraction = 0.1;  // only used when no validation set is given

  void check() const;
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double valid_loss = 0.0;
};

struct TrainResult {
  ProjectionModel model;  // best-validation snapshot
  std::vector<EpochLog> history;
  int best_epoch = 0;
};

TrainResult train_projection(const RecordSet& train, const RecordSet& valid, const TrainConfig& cfg);
// Holds out cfg.validation_fraction of the sequences (seeded) for early stopping.
TrainResult train_projection(const RecordSet& train, const TrainConfig& cfg);
TrainResult train_projection(const HiddenPairs& train, const HiddenPairs& valid, const TrainConfig& cfg,
                             const std::string& train_fingerprint = {});

inline constexpr double kClosedFormRidge = 1e-8;

ProjectionModel fit_linear_closed_form(const RecordSet& train);
ProjectionModel fit_linear_closed_form(const HiddenPairs& train);

inline constexpr std::uint32_t kProjectionFormatVersion = 1;

std::vector<std::uint8_t> encode_projection(const ProjectionModel& model);
ProjectionModel decode_projection(std::span<const std::uint8_t> bytes);
void save_projection(const ProjectionModel& model, const std::filesystem::path& path);
ProjectionModel load_projection(const std::filesystem::path& path);

// Trainable double-precision form of a projection. Exposed for gradient
// checking; ProjectionModel is the immutable float snapshot.
class ProjectionNet {
 public:
  ProjectionNet(Architecture arch, std::uint32_t dim);
  explicit ProjectionNet(const ProjectionModel& model);

  Architecture architecture() const { return arch_; }
  std::uint32_t dim() const { return dim_; }

  // Linear: W = I, b = 0. Mlp3: U(-1/sqrt(fan_in), 1/sqrt(fan_in)) from `seed`.
  void initialize(std::uint64_t seed);

  std::size_t parameter_count() const;
  std::vector<double> parameters() const;
  void set_parameters(std::span<const double> flat);

  Eigen::MatrixXd forward(const Eigen::MatrixXd& inputs) const;

  // Mean per-row loss; writes d(loss)/d(parameters) in parameters() order
  // when `gradient` is non-null.
  double loss_and_gradient(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets, LossKind loss,
                           std::vector<double>* gradient) const;

  ProjectionModel snapshot(LossKind loss, TrainingProvenance provenance) const;

 private:
  Architecture arch_;
  std::uint32_t dim_;
  std::vector<Eigen::MatrixXd> weights_;
  std::vector<Eigen::VectorXd> biases_;
};

}  // namespace basecal
