#include "oracles.hpp"

#include "spaorb/checkpoint.hpp"
#include "spaorb/chem.hpp"
#include "spaorb/datagen.hpp"
#include "spaorb/features.hpp"
#include "spaorb/linalg.hpp"
#include "spaorb/losses.hpp"
#include "spaorb/model.hpp"
#include "spaorb/orbital_opt.hpp"
#include "spaorb/pipeline.hpp"
#include "spaorb/spa.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>

using namespace spaorb;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char *f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

std::string slurp(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

const fs::path kWork = fs::current_path() / "acceptance_work";

std::vector<datagen::DatasetRecord> dataset(int n, int count, std::uint64_t seed) {
  const fs::path path = kWork / ("h" + std::to_string(n) + "_s" + std::to_string(seed) + ".jsonl");
  datagen::GenerateSpec spec;
  spec.family = Family::random_3d;
  spec.n = n;
  spec.count = count;
  spec.seed = seed;
  datagen::generate_dataset(spec, path);
  return datagen::read_dataset(path);
}

double max_abs(const Matrix &a, const Matrix &b) { return a.size() ? (a - b).cwiseAbs().maxCoeff() : 0.0; }

// ---- 1: H2 orbital optimization against the dense rotation-grid oracle ----
Outcome h2_orbital_optimization() {
  double worst = 0.0;
  for (int k = 0; k < 10; ++k) {
    const double r = 0.55 + 0.25 * k;
    const Geometry g = datagen::structured_geometry(Family::linear_equidistant, 2, r);
    const auto m = datagen::min_weight_matching(g);
    const auto res = orbital_opt::optimize_orbitals(chem::native_integrals(g), datagen::pair_structure(m),
                                                    datagen::givens_guess(m, 2));
    worst = std::max(worst, std::abs(res.e_spa - oracle::h2_oo_doci(g)));
  }
  return {worst < 1e-6, "max |E - E_oracle| = " + fmt("%.3e", worst)};
}

// ---- 2: exponential and logarithm round trip ----
Outcome exp_log_round_trip() {
  std::mt19937_64 rng(2);
  double worst_log = 0.0;
  double worst_orth = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const int n = 4 + t % 9;
    const Matrix a = oracle::random_skew(n, oracle::uniform(rng, 0.0, 0.95 * std::numbers::pi), rng);
    const Matrix m = linalg::expm_antisymmetric(a);
    worst_orth = std::max(worst_orth, linalg::orthogonality_residual(m));
    worst_log = std::max(worst_log, (linalg::logm_special_orthogonal(m) - a).norm());
  }
  return {worst_log < 1e-8 && worst_orth < 1e-12,
          "max ||log(exp A) - A||_F = " + fmt("%.3e", worst_log) + ", max orthogonality = " + fmt("%.3e", worst_orth)};
}

// ---- 3: SPA energy against the fermionic expectation, bounded by DOCI ----
Outcome spa_against_dense() {
  std::mt19937_64 rng(3);
  double worst = 0.0;
  double worst_gap = std::numeric_limits<double>::infinity();
  for (int t = 0; t < 100; ++t) {
    const int n = t % 2 ? 6 : 4;
    const Geometry g = oracle::random_cluster(n, rng);
    const auto m = datagen::min_weight_matching(g);
    const auto ps = datagen::pair_structure(m);
    const auto ints = chem::transform_integrals(chem::native_integrals(g),
                                                datagen::givens_guess(m, n) * oracle::random_rotation(n, rng));
    Vector theta(n / 2);
    for (int k = 0; k < n / 2; ++k) {
      theta(k) = oracle::uniform(rng, -std::numbers::pi, std::numbers::pi);
    }
    const auto c = spa::hcb_coefficients(ints);
    const double e = spa::spa_energy(c, ps, theta);
    worst = std::max(worst, std::abs(e - oracle::expectation(ints, oracle::spa_state(ps.pairs, theta))));
    const double e_min = spa::minimize_theta(c, ps, theta).energy;
    worst_gap = std::min(worst_gap, e_min - oracle::doci_energy(ints, n / 2));
  }
  return {worst < 1e-10 && worst_gap >= -1e-9,
          "max |E_SPA - <psi|H|psi>| = " + fmt("%.3e", worst) + ", min (E_SPA,min - E_DOCI) = " + fmt("%.3e", worst_gap)};
}

// ---- 4: matching against exhaustive enumeration ----
Outcome matching_exhaustive() {
  int mismatches = 0;
  for (int n : {4, 6, 8}) {
    for (int t = 0; t < 200; ++t) {
      const Geometry g = datagen::sample_geometry(Family::random_3d, n, 40000 + 1000 * n + t);
      const auto m = datagen::min_weight_matching(g);
      const auto best = oracle::exhaustive_matching(g.coords);
      const double cost = datagen::matching_cost(g, m);
      const bool optimal_edges =
          std::find(best.optimal.begin(), best.optimal.end(), m.edges) != best.optimal.end();
      if (std::abs(cost - best.cost) > 1e-12 || !optimal_edges) {
        ++mismatches;
      }
    }
  }
  return {mismatches == 0, std::to_string(mismatches) + " of 600 instances differ from the exhaustive optimum"};
}

// ---- 5: model gradients against central differences ----
Outcome model_gradient_check() {
  model::ModelConfig cfg;
  cfg.hidden_dim = 8;
  cfg.proj_dim = 8;
  cfg.gnn_layers = 2;
  cfg.readout_layers = 1;
  cfg.readout_hidden = 8;
  cfg.kernel_hidden = 8;
  cfg.seed = 5;
  auto params = model::init_params(cfg);
  std::mt19937_64 rng(5);
  for (double &v : params.values) {
    v += oracle::uniform(rng, -0.05, 0.05);
  }
  const auto recs = dataset(4, 2, 5);
  std::vector<model::TrainingExample> ex;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    ex.push_back(model::make_example(recs[i], cfg, std::to_string(i)));
  }
  const std::vector<const model::TrainingExample *> batch{&ex[0], &ex[1]};
  losses::LossWeights w;
  const auto g = model::model_gradients(params, cfg, batch, w);
  double worst = 0.0;
  std::string worst_name;
  for (const auto &spec : params.manifest) {
    double err = 0.0;
    double scale = 0.0;
    for (std::size_t k = spec.offset; k < spec.offset + spec.size(); ++k) {
      const double x = params.values[k];
      const double fd = oracle::central_difference(
          [&](double v) {
            params.values[k] = v;
            return model::batch_loss(params, cfg, batch, w).total;
          },
          x, 1e-5);
      params.values[k] = x;
      err = std::max(err, std::abs(fd - g.gradient[k]));
      scale = std::max(scale, std::abs(fd));
    }
    const double rel = err / std::max(scale, 1e-10);
    if (rel >= worst) {
      worst = rel;
      worst_name = spec.name;
    }
  }
  return {worst < 1e-4, "max relative error " + fmt("%.3e", worst) + " (" + worst_name + ")"};
}

// ---- 6: gauge invariances of the losses ----
Outcome loss_invariances() {
  std::mt19937_64 rng(6);
  double worst_det = 0.0;
  double worst_orb = 0.0;
  for (int t = 0; t < 100; ++t) {
    const int n = 4 + 2 * (t % 5);
    losses::OccupiedSelector sel;
    for (int c = 0; c < n; c += 2) {
      sel.occupied_columns.push_back(c);
    }
    const Matrix ref = oracle::random_rotation(n, rng);
    const Matrix pred = oracle::random_rotation(n, rng);
    const Matrix q = oracle::random_orthogonal(n / 2, rng);
    Matrix mixed = ref;
    for (int a = 0; a < n / 2; ++a) {
      mixed.col(sel.occupied_columns[a]).setZero();
      for (int b = 0; b < n / 2; ++b) {
        mixed.col(sel.occupied_columns[a]) += ref.col(sel.occupied_columns[b]) * q(b, a);
      }
    }
    worst_det = std::max(worst_det, std::abs(losses::det_overlap_loss(pred, mixed, sel) -
                                             losses::det_overlap_loss(pred, ref, sel)));
    Matrix flipped = ref;
    for (int c = 0; c < n; ++c) {
      if (rng() & 1U) {
        flipped.col(c) *= -1.0;
      }
    }
    worst_orb = std::max(worst_orb, losses::sign_invariant_orbital_loss(flipped, ref));
  }
  return {worst_det < 1e-12 && worst_orb == 0.0,
          "max det-loss change " + fmt("%.3e", worst_det) + ", max orbital loss under sign flips " + fmt("%.3e", worst_orb)};
}

// ---- 7: feature invariance and permutation equivariance ----
Outcome feature_symmetries() {
  std::mt19937_64 rng(7);
  const features::FeatureConfig cfg;
  double worst = 0.0;
  bool indexing_ok = true;
  double worst_perm = 0.0;
  for (int geom = 0; geom < 20; ++geom) {
    const int n = 4 + 2 * (geom % 5);
    const Geometry g = oracle::random_cluster(n, rng);
    const auto m = datagen::min_weight_matching(g);
    const auto ref = features::featurize(g, m, cfg);
    for (int motion = 0; motion < 100; ++motion) {
      const auto fg = features::featurize(Geometry::hydrogens(oracle::rigid_motion(g.coords, rng)), m, cfg);
      indexing_ok = indexing_ok && fg.fine_edges == ref.fine_edges && fg.coarse_edges == ref.coarse_edges;
      worst = std::max({worst, max_abs(fg.node_x, ref.node_x), max_abs(fg.fine_edge_x, ref.fine_edge_x),
                        max_abs(fg.coarse_edge_x, ref.coarse_edge_x), max_abs(fg.pair_edge_x, ref.pair_edge_x),
                        max_abs(fg.pair_x, ref.pair_x)});
    }

    std::vector<int> sigma(n);
    std::iota(sigma.begin(), sigma.end(), 0);
    std::shuffle(sigma.begin(), sigma.end(), rng);
    std::vector<int> inv(n);
    Matrix c(n, 3);
    for (int k = 0; k < n; ++k) {
      c.row(k) = g.coords.row(sigma[k]);
      inv[sigma[k]] = k;
    }
    datagen::Matching pm;
    for (const auto &[i, j] : m.edges) {
      pm.edges.emplace_back(std::min(inv[i], inv[j]), std::max(inv[i], inv[j]));
    }
    std::sort(pm.edges.begin(), pm.edges.end());
    const auto fg = features::featurize(Geometry::hydrogens(c), pm, cfg);
    for (int k = 0; k < n; ++k) {
      worst_perm = std::max(worst_perm, (fg.node_x.row(k) - ref.node_x.row(sigma[k])).cwiseAbs().maxCoeff());
    }
    for (const auto *edges : {&fg.fine_edges, &fg.coarse_edges}) {
      const auto &old_edges = edges == &fg.fine_edges ? ref.fine_edges : ref.coarse_edges;
      const auto &x = edges == &fg.fine_edges ? fg.fine_edge_x : fg.coarse_edge_x;
      const auto &old_x = edges == &fg.fine_edges ? ref.fine_edge_x : ref.coarse_edge_x;
      std::vector<features::Edge> mapped;
      for (const auto &[i, j] : old_edges) {
        mapped.emplace_back(inv[i], inv[j]);
      }
      std::sort(mapped.begin(), mapped.end());
      indexing_ok = indexing_ok && mapped == *edges;
      for (std::size_t e = 0; e < edges->size(); ++e) {
        const auto [i, j] = (*edges)[e];
        const auto old = std::find(old_edges.begin(), old_edges.end(), features::Edge{sigma[i], sigma[j]}) -
                         old_edges.begin();
        // the Givens entry changes sign when relabeling swaps the bonding/antibonding order of a pair
        const Eigen::Index givens = x.cols() - 3;
        for (Eigen::Index k = 0; k < x.cols(); ++k) {
          const double d = k == givens ? std::abs(x(e, k)) - std::abs(old_x(old, k)) : x(e, k) - old_x(old, k);
          worst_perm = std::max(worst_perm, std::abs(d));
        }
      }
    }
  }
  return {worst < 1e-9 && worst_perm < 1e-9 && indexing_ok,
          "max rigid-motion deviation " + fmt("%.3e", worst) + ", max relabeling deviation " + fmt("%.3e", worst_perm) +
              (indexing_ok ? ", edge indexing equivariant" : ", edge indexing differs")};
}

// ---- shared training run for 8-10 ----
pipeline::TrainConfig desk_config() {
  pipeline::TrainConfig cfg;
  cfg.lr0 = 1e-3;
  cfg.epochs = 100;
  cfg.batch_size = 32;
  cfg.model.hidden_dim = 16;
  cfg.model.proj_dim = 16;
  cfg.model.gnn_layers = 2;
  cfg.model.readout_layers = 1;
  cfg.model.readout_hidden = 32;
  cfg.model.kernel_hidden = 8;
  cfg.model.seed = 1;
  cfg.seed = 1;
  return cfg;
}

struct Trained {
  checkpoint::Checkpoint ckpt;
  std::string error;
};

Trained train_desk_model() {
  dataset(4, 1000, 1);
  dataset(6, 1000, 1);
  auto cfg = desk_config();
  cfg.datasets = {(kWork / "h4_s1.jsonl").string(), (kWork / "h6_s1.jsonl").string()};
  const auto result = pipeline::train(cfg, kWork / "desk_run");
  return {checkpoint::load(result.best_checkpoint), {}};
}

Outcome training_beats_baseline(const checkpoint::Checkpoint &ckpt) {
  auto held = dataset(4, 100, 1000000);
  for (auto &r : dataset(6, 100, 1000000)) {
    held.push_back(std::move(r));
  }
  const auto report = pipeline::evaluate(ckpt, held, {.warm_start = false});
  pipeline::write_eval_csv(kWork / "heldout_h4_h6.csv", report);
  const bool generalizes = report.overall.mae < report.overall.baseline_mae;

  // Memorization: 10 training records, Huber on the same records afterwards.
  datagen::GenerateSpec spec;
  spec.n = 4;
  spec.count = 11;
  spec.seed = 77;
  datagen::generate_dataset(spec, kWork / "overfit.jsonl");
  auto cfg = desk_config();
  cfg.datasets = {(kWork / "overfit.jsonl").string()};
  cfg.val_fraction = 1.0 / 11.0;
  cfg.batch_size = 10;
  cfg.epochs = 1500;
  cfg.lr0 = 3e-3;
  const auto run = pipeline::train(cfg, kWork / "overfit_run");
  const auto last = checkpoint::load(run.last_checkpoint);
  const auto recs = datagen::read_dataset(kWork / "overfit.jsonl");
  const auto [train_idx, val_idx] = pipeline::split_indices(recs.size(), cfg.val_fraction, cfg.seed);
  std::vector<model::TrainingExample> ex;
  for (auto i : train_idx) {
    ex.push_back(model::make_example(recs[i], last.config, std::to_string(i)));
  }
  std::vector<const model::TrainingExample *> batch;
  for (const auto &e : ex) {
    batch.push_back(&e);
  }
  const double huber = model::batch_loss(last.params, last.config, batch, cfg.weights).huber;
  return {generalizes && huber < 1e-3 && batch.size() == 10,
          "held-out MAE " + fmt("%.5f", report.overall.mae) + " vs baseline " + fmt("%.5f", report.overall.baseline_mae) +
              " Ha; 10-record Huber after memorization " + fmt("%.3e", huber)};
}

Outcome larger_clusters(const checkpoint::Checkpoint &ckpt, const std::vector<datagen::DatasetRecord> &h8) {
  std::vector<datagen::DatasetRecord> all = h8;
  for (auto &r : dataset(10, 20, 3000000)) {
    all.push_back(std::move(r));
  }
  for (auto &r : dataset(12, 20, 4000000)) {
    all.push_back(std::move(r));
  }
  const auto report = pipeline::evaluate(ckpt, all, {.warm_start = false});
  pipeline::write_eval_csv(kWork / "larger_clusters.csv", report);
  bool finite = true;
  double worst_orth = 0.0;
  double worst_gap = std::numeric_limits<double>::infinity();
  for (const auto &row : report.rows) {
    finite = finite && std::isfinite(row.e_model);
    worst_orth = std::max(worst_orth, row.orthogonality);
    worst_gap = std::min(worst_gap, row.e_model - row.e_spa);
  }
  return {finite && worst_orth < 1e-10 && worst_gap >= -1e-9,
          std::to_string(report.rows.size()) + " clusters, " + (finite ? "all finite" : "non-finite energies") +
              ", max orthogonality " + fmt("%.3e", worst_orth) + ", min (E_pred - E_ref) " + fmt("%.3e", worst_gap)};
}

Outcome warm_start(const checkpoint::Checkpoint &ckpt, const std::vector<datagen::DatasetRecord> &h8) {
  const auto report = pipeline::evaluate(ckpt, h8);
  pipeline::write_eval_csv(kWork / "warm_start_h8.csv", report);
  bool monotone = true;
  for (const auto &row : report.rows) {
    monotone = monotone && row.e_warm_pred <= row.e_model && row.e_warm_givens <= row.e_init + 1e-12;
  }
  const double wins = report.overall.warm_pred_wins;
  return {wins > 0.5 && monotone, "predicted start at least as good on " + fmt("%.0f", 100 * wins) + "% of " +
                                      std::to_string(report.rows.size()) + " H8 clusters; " +
                                      (monotone ? "no warm step raised the energy" : "a warm step raised the energy")};
}

Outcome prediction_speed(const checkpoint::Checkpoint &ckpt, const std::vector<datagen::DatasetRecord> &h8) {
  const auto report = pipeline::evaluate(ckpt, h8, {.warm_start = false, .time_optimize = true});
  const double ratio = report.mean_optimize_seconds / report.mean_predict_seconds;
  return {ratio >= 5.0, "mean predict " + fmt("%.3e", report.mean_predict_seconds) + " s, mean optimize " +
                            fmt("%.3e", report.mean_optimize_seconds) + " s, speedup " + fmt("%.1f", ratio) + "x"};
}

// ---- 11: reproducibility ----
Outcome reproducibility() {
  datagen::GenerateSpec spec;
  spec.n = 6;
  spec.count = 40;
  spec.seed = 11;
  datagen::generate_dataset(spec, kWork / "repro_a.jsonl", Execution::parallel);
  datagen::generate_dataset(spec, kWork / "repro_b.jsonl", Execution::serial);
  const bool data_same = slurp(kWork / "repro_a.jsonl") == slurp(kWork / "repro_b.jsonl");

  auto cfg = desk_config();
  cfg.epochs = 5;
  cfg.batch_size = 8;
  cfg.datasets = {(kWork / "repro_a.jsonl").string()};
  const auto a = pipeline::train(cfg, kWork / "repro_run_a", Execution::parallel);
  const auto b = pipeline::train(cfg, kWork / "repro_run_b", Execution::serial);
  const bool metrics_same = slurp(a.metrics_csv) == slurp(b.metrics_csv);
  const bool ckpt_same =
      slurp(a.best_checkpoint) == slurp(b.best_checkpoint) && slurp(a.last_checkpoint) == slurp(b.last_checkpoint);

  const std::string bytes = slurp(a.last_checkpoint);
  const auto loaded = checkpoint::load(a.last_checkpoint);
  const bool round_trip = checkpoint::serialize(loaded) == bytes;
  return {data_same && metrics_same && ckpt_same && round_trip,
          std::string("dataset ") + (data_same ? "identical" : "differs") + ", metrics " +
              (metrics_same ? "identical" : "differ") + ", checkpoints " + (ckpt_same ? "identical" : "differ") +
              ", round trip " + (round_trip ? "bit-exact" : "not exact")};
}

int failures = 0;

void report(int id, const std::string &name, const std::function<Outcome()> &fn) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = fn();
  } catch (const std::exception &e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  failures += o.pass ? 0 : 1;
  std::printf("%s criterion %d %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str(), secs);
  std::fflush(stdout);
}

} // namespace

int main() {
  fs::remove_all(kWork);
  fs::create_directories(kWork);

  report(1, "h2-orbital-optimization", h2_orbital_optimization);
  report(2, "exp-log-round-trip", exp_log_round_trip);
  report(3, "spa-vs-dense", spa_against_dense);
  report(4, "matching-exhaustive", matching_exhaustive);
  report(5, "model-gradients", model_gradient_check);
  report(6, "loss-invariances", loss_invariances);
  report(7, "feature-symmetries", feature_symmetries);

  std::optional<checkpoint::Checkpoint> ckpt;
  std::string train_error;
  try {
    ckpt = train_desk_model().ckpt;
  } catch (const std::exception &e) {
    train_error = std::string("training failed: ") + e.what();
  }
  std::vector<datagen::DatasetRecord> h8;
  auto with_model = [&](auto fn) {
    return [&, fn]() -> Outcome {
      if (!ckpt) {
        return {false, train_error};
      }
      return fn(*ckpt);
    };
  };
  report(8, "training-beats-baseline", with_model([](const auto &c) { return training_beats_baseline(c); }));
  try {
    h8 = dataset(8, 50, 2000000);
  } catch (const std::exception &e) {
    train_error = std::string("H8 generation failed: ") + e.what();
    ckpt.reset();
  }
  report(9, "larger-clusters", with_model([&](const auto &c) { return larger_clusters(c, h8); }));
  report(10, "warm-start", with_model([&](const auto &c) { return warm_start(c, h8); }));
  report(11, "reproducibility", reproducibility);
  report(12, "prediction-speed", with_model([&](const auto &c) { return prediction_speed(c, h8); }));

  std::printf("%d failed\n", failures);
  return failures == 0 ? 0 : 1;
}
