#pragma once

#include "spaorb/datagen.hpp"
#include "spaorb/features.hpp"
#include "spaorb/linalg.hpp"
#include "spaorb/losses.hpp"
#include "spaorb/parallel.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace spaorb::model {

struct ModelConfig {
  int hidden_dim = 64;
  int gnn_layers = 3;
  int proj_dim = 32;
  int readout_layers = 2;
  int readout_hidden = 128;
  int kernel_hidden = 32; // width of the edge-kernel MLP
  int t_walk = 8;
  int l_rbf = 20;
  double rbf_min = 0.0;
  double rbf_max = 6.0;
  double r_fine = 2.5;
  double r_coarse = 5.0;
  std::uint64_t seed = 0;

  void validate() const;
  features::FeatureConfig feature_config() const;
  bool operator==(const ModelConfig &) const = default;
};

struct TensorSpec {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::size_t offset = 0;

  std::size_t size() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
};

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using TensorMap = Eigen::Map<RowMajorMatrix>;
using ConstTensorMap = Eigen::Map<const RowMajorMatrix>;

/// Ordered tensor manifest for a configuration. The order is the checkpoint
/// payload order.
std::vector<TensorSpec> build_manifest(const ModelConfig &cfg);

/// All learnable tensors in one contiguous buffer.
struct ModelParams {
  std::vector<TensorSpec> manifest;
  std::vector<double> values;

  std::size_t index_of(const std::string &name) const;
  TensorMap tensor(std::size_t idx) { return {values.data() + manifest[idx].offset, manifest[idx].rows, manifest[idx].cols}; }
  ConstTensorMap tensor(std::size_t idx) const {
    return {values.data() + manifest[idx].offset, manifest[idx].rows, manifest[idx].cols};
  }
  TensorMap tensor(const std::string &name) { return tensor(index_of(name)); }
  ConstTensorMap tensor(const std::string &name) const { return tensor(index_of(name)); }
};

/// Glorot-uniform weights, zero biases, unit layer-norm gains; deterministic in cfg.seed.
ModelParams init_params(const ModelConfig &cfg);

struct ModelOutput {
  Vector a_upper;
  Matrix m_pred;
};

/// geometry → features → dual-scale GNN → pair readout → A_upper → e^A.
ModelOutput model_forward(const ModelParams &params, const ModelConfig &cfg, const Geometry &geom,
                          const datagen::Matching &matching);

/// Same map from precomputed features.
ModelOutput forward_features(const ModelParams &params, const ModelConfig &cfg, const features::FeatureGraph &fg);

/// One supervised molecule with its features already built.
struct TrainingExample {
  std::string id;
  features::FeatureGraph graph;
  Vector a_ref;
  Matrix m_ref;
  losses::OccupiedSelector selector;
};

TrainingExample make_example(const datagen::DatasetRecord &record, const ModelConfig &cfg, std::string id);

struct BatchLoss {
  double total = 0.0;
  double huber = 0.0; // mean over every pair of the batch
  double det = 0.0;   // mean over molecules
  double orb = 0.0;   // mean over molecules
};

struct BatchGradients {
  BatchLoss loss;
  std::vector<double> gradient; // manifest layout
};

/// Batch loss (Huber averaged over all pairs in the batch, gauge terms over
/// molecules) and its exact parameter gradient. Per-molecule gradients are
/// summed in batch order, so serial and parallel execution agree bit for bit.
/// Throws NumericalFailure naming the first record with a non-finite loss.
BatchGradients model_gradients(const ModelParams &params, const ModelConfig &cfg,
                               const std::vector<const TrainingExample *> &batch, const losses::LossWeights &weights,
                               Execution exec = Execution::parallel);

/// Loss only (no backward pass).
BatchLoss batch_loss(const ModelParams &params, const ModelConfig &cfg,
                     const std::vector<const TrainingExample *> &batch, const losses::LossWeights &weights,
                     Execution exec = Execution::parallel);

} // namespace spaorb::model
