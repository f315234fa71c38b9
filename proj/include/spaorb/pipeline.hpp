#pragma once

#include "spaorb/checkpoint.hpp"
#include "spaorb/datagen.hpp"
#include "spaorb/model.hpp"
#include "spaorb/parallel.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace spaorb::pipeline {

struct TrainConfig {
  double lr0 = 1e-4;
  int epochs = 200; // 1000 at full scale
  int batch_size = 32;
  losses::LossWeights weights;
  model::ModelConfig model;
  std::vector<std::string> datasets;
  double val_fraction = 0.1;
  std::uint64_t seed = 0;
  std::string resume; // checkpoint path; empty starts fresh

  void validate() const;
};

inline constexpr int kFullScaleEpochs = 1000;

nlohmann::ordered_json train_config_to_json(const TrainConfig &cfg);
/// Unknown keys are rejected; relative dataset/resume paths resolve against base_dir.
TrainConfig train_config_from_json(const nlohmann::ordered_json &j, const std::filesystem::path &base_dir = {});
TrainConfig read_train_config(const std::filesystem::path &path);

struct EpochMetrics {
  int epoch = 0;
  model::BatchLoss train; // mean of the epoch's batch losses, weighted by batch size
  model::BatchLoss val;
};

struct TrainResult {
  std::filesystem::path best_checkpoint;
  std::filesystem::path last_checkpoint;
  std::filesystem::path metrics_csv;
  std::vector<EpochMetrics> history; // epochs run by this call
  double best_val = 0.0;
  int best_epoch = 0;
};

/// Seeded split: returns (train indices, validation indices).
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n, double val_fraction,
                                                                           std::uint64_t seed);

/// Fisher–Yates permutation of [0, n) that is identical on every platform.
std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed);

/// Adam at constant lr0. Writes metrics.csv, best.ckpt and last.ckpt into out_dir.
TrainResult train(const TrainConfig &cfg, const std::filesystem::path &out_dir, Execution exec = Execution::parallel,
                  const std::function<void(const EpochMetrics &)> &on_epoch = {});

struct Prediction {
  Matrix m_pred;
  Vector a_upper;
  double seconds = 0.0;
};

Prediction predict_orbitals(const checkpoint::Checkpoint &ckpt, const Geometry &geom,
                            const datagen::Matching &matching);

/// Energy of the SPA state with a fresh θ minimization under orbitals m.
double orbital_energy(const Geometry &geom, const datagen::Matching &matching, const Matrix &m);

struct EvalOptions {
  bool warm_start = true;
  bool time_optimize = false; // reruns optimize_orbitals per record, single-threaded
  Execution exec = Execution::parallel;
};

struct EvalRow {
  int index = 0;
  int n = 0;
  std::string family;
  double e_spa = 0.0;
  double e_init = 0.0;
  double e_model = 0.0;
  double orthogonality = 0.0;
  double e_warm_pred = 0.0;   // NaN when warm starts are off
  double e_warm_givens = 0.0; // NaN when warm starts are off
  double predict_seconds = 0.0;
  double optimize_seconds = 0.0; // NaN unless timed
};

struct SizeSummary {
  int n = 0;
  int count = 0;
  double mae = 0.0;
  double baseline_mae = 0.0;
  double warm_pred_wins = 0.0; // fraction with e_warm_pred <= e_warm_givens
};

struct EvalReport {
  std::vector<EvalRow> rows;
  std::vector<SizeSummary> sizes; // ascending n
  SizeSummary overall;            // n = 0
  double mean_predict_seconds = 0.0;
  double mean_optimize_seconds = 0.0; // NaN unless timed
};

/// Runs the checkpoint on every record, then evaluate_with_orbitals.
EvalReport evaluate(const checkpoint::Checkpoint &ckpt, const std::vector<datagen::DatasetRecord> &records,
                    const EvalOptions &opts = {});

/// Same report with the orbitals supplied by the caller (one matrix per record).
EvalReport evaluate_with_orbitals(const std::vector<datagen::DatasetRecord> &records, const std::vector<Matrix> &m,
                                  const EvalOptions &opts = {});

void write_eval_csv(const std::filesystem::path &path, const EvalReport &report);
void write_eval_summary_csv(const std::filesystem::path &path, const EvalReport &report);

struct CurveModes {
  bool reference = true;
  bool predicted = true;
  bool warm = true;
};

struct CurveRow {
  double spacing = 0.0;
  double e_reference = 0.0; // NaN when not requested
  double e_predicted = 0.0;
  double e_warm = 0.0;
  double e_init = 0.0;
};

/// Inclusive grid "a:b:steps".
std::vector<double> parse_grid(const std::string &spec);

/// Predicted and warm columns need a checkpoint; they are NaN without one.
std::vector<CurveRow> energy_curve(Family family, int n, const std::vector<double> &spacings,
                                   const checkpoint::Checkpoint *ckpt, CurveModes modes = {},
                                   Execution exec = Execution::parallel);

void write_curve_csv(const std::filesystem::path &path, const std::vector<CurveRow> &rows);

/// Shortest decimal string that parses back to the same double; empty for NaN.
std::string format_double(double x);

/// Geometry from an .xyz file or a JSON object with "coords" (Å) and optional "elements".
Geometry read_geometry(const std::filesystem::path &path);

} // namespace spaorb::pipeline
