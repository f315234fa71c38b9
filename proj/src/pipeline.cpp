#include "spaorb/pipeline.hpp"

#include "spaorb/chem.hpp"
#include "spaorb/errors.hpp"
#include "spaorb/orbital_opt.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <set>
#include <sstream>

namespace spaorb::pipeline {

namespace {

using ojson = nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t bounded(std::mt19937_64 &engine, std::uint64_t m) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % m;
  std::uint64_t r = 0;
  do {
    r = engine();
  } while (r >= limit);
  return r % m;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::ofstream open_out(const std::filesystem::path &path, std::ios::openmode mode = std::ios::trunc) {
  std::ofstream out(path, std::ios::out | mode);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  return out;
}

void csv_row(std::ostream &out, std::initializer_list<std::string> cells) {
  bool first = true;
  for (const auto &c : cells) {
    if (!first) {
      out << ',';
    }
    out << c;
    first = false;
  }
  out << '\n';
}

std::string loss_cells(const model::BatchLoss &l) {
  return format_double(l.total) + "," + format_double(l.huber) + "," + format_double(l.det) + "," +
         format_double(l.orb);
}

std::vector<model::TrainingExample> load_examples(const TrainConfig &cfg, Execution exec) {
  std::vector<datagen::DatasetRecord> records;
  std::vector<std::string> ids;
  for (const auto &path : cfg.datasets) {
    auto part = datagen::read_dataset(path);
    const std::string stem = std::filesystem::path(path).filename().string();
    for (std::size_t i = 0; i < part.size(); ++i) {
      ids.push_back(stem + ":" + std::to_string(i + 1));
    }
    std::move(part.begin(), part.end(), std::back_inserter(records));
  }
  if (records.size() < 2) {
    throw InvalidInput("train: need at least 2 records across the datasets");
  }
  return map_indexed<model::TrainingExample>(records.size(), exec, [&](std::size_t i) {
    try {
      return model::make_example(records[i], cfg.model, ids[i]);
    } catch (const Error &e) {
      throw InvalidInput("train: record " + ids[i] + ": " + e.what());
    }
  });
}

model::BatchLoss weighted_add(const model::BatchLoss &acc, const model::BatchLoss &x, double w) {
  return {acc.total + w * x.total, acc.huber + w * x.huber, acc.det + w * x.det, acc.orb + w * x.orb};
}

std::vector<const model::TrainingExample *> pointers(const std::vector<model::TrainingExample> &ex,
                                                     const std::vector<std::size_t> &idx, std::size_t begin,
                                                     std::size_t end) {
  std::vector<const model::TrainingExample *> out;
  for (std::size_t k = begin; k < end; ++k) {
    out.push_back(&ex[idx[k]]);
  }
  return out;
}

void adam_update(std::vector<double> &params, const std::vector<double> &grad, checkpoint::AdamState &s,
                 double lr) {
  s.step += 1;
  const double c1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(s.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    s.m[k] = kAdamBeta1 * s.m[k] + (1.0 - kAdamBeta1) * grad[k];
    s.v[k] = kAdamBeta2 * s.v[k] + (1.0 - kAdamBeta2) * grad[k] * grad[k];
    params[k] -= lr * (s.m[k] / c1) / (std::sqrt(s.v[k] / c2) + kAdamEps);
  }
}

std::filesystem::path resolve(const std::filesystem::path &base, const std::string &p) {
  const std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

} // namespace

void TrainConfig::validate() const {
  if (!(lr0 > 0.0) || !std::isfinite(lr0)) {
    throw InvalidInput("train config: lr0 must be positive");
  }
  if (epochs < 1 || batch_size < 1) {
    throw InvalidInput("train config: epochs and batch_size must be >= 1");
  }
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw InvalidInput("train config: val_fraction must lie in (0, 1)");
  }
  if (datasets.empty()) {
    throw InvalidInput("train config: no datasets listed");
  }
  weights.validate();
  model.validate();
}

ojson train_config_to_json(const TrainConfig &cfg) {
  ojson j;
  j["lr0"] = cfg.lr0;
  j["epochs"] = cfg.epochs;
  j["batch_size"] = cfg.batch_size;
  j["weights"] = checkpoint::loss_weights_to_json(cfg.weights);
  j["model"] = checkpoint::model_config_to_json(cfg.model);
  j["datasets"] = cfg.datasets;
  j["val_fraction"] = cfg.val_fraction;
  j["seed"] = cfg.seed;
  j["resume"] = cfg.resume;
  return j;
}

TrainConfig train_config_from_json(const ojson &j, const std::filesystem::path &base_dir) {
  if (!j.is_object()) {
    throw SchemaError("train config must be a JSON object");
  }
  static const std::set<std::string> known = {"lr0",   "epochs",       "batch_size", "weights", "model",
                                              "datasets", "val_fraction", "seed",       "resume"};
  for (const auto &[key, value] : j.items()) {
    if (!known.contains(key)) {
      throw SchemaError("train config: unknown field '" + key + "'");
    }
  }
  TrainConfig cfg;
  try {
    if (j.contains("lr0")) cfg.lr0 = j.at("lr0").get<double>();
    if (j.contains("epochs")) cfg.epochs = j.at("epochs").get<int>();
    if (j.contains("batch_size")) cfg.batch_size = j.at("batch_size").get<int>();
    if (j.contains("weights")) cfg.weights = checkpoint::loss_weights_from_json(j.at("weights"));
    if (j.contains("model")) cfg.model = checkpoint::model_config_from_json(j.at("model"));
    if (j.contains("datasets")) {
      for (const auto &p : j.at("datasets")) {
        cfg.datasets.push_back(resolve(base_dir, p.get<std::string>()).string());
      }
    }
    if (j.contains("val_fraction")) cfg.val_fraction = j.at("val_fraction").get<double>();
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("resume")) {
      const auto r = j.at("resume").get<std::string>();
      cfg.resume = r.empty() ? r : resolve(base_dir, r).string();
    }
  } catch (const nlohmann::json::exception &e) {
    throw SchemaError(std::string("train config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

TrainConfig read_train_config(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open config " + path.string());
  }
  ojson j;
  try {
    j = ojson::parse(in);
  } catch (const nlohmann::json::exception &e) {
    throw SchemaError("config " + path.string() + ": " + e.what());
  }
  return train_config_from_json(j, path.parent_path());
}

std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) {
    p[i] = i;
  }
  std::mt19937_64 engine(mix(seed));
  for (std::size_t i = n; i > 1; --i) {
    std::swap(p[i - 1], p[bounded(engine, i)]);
  }
  return p;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n, double val_fraction,
                                                                           std::uint64_t seed) {
  if (n < 2) {
    throw InvalidInput("split: need at least 2 records");
  }
  auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n)));
  n_val = std::clamp<std::size_t>(n_val, 1, n - 1);
  const auto perm = seeded_permutation(n, seed);
  std::vector<std::size_t> val(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> tr(perm.begin() + static_cast<std::ptrdiff_t>(n_val), perm.end());
  std::sort(val.begin(), val.end());
  std::sort(tr.begin(), tr.end());
  return {tr, val};
}

TrainResult train(const TrainConfig &cfg, const std::filesystem::path &out_dir, Execution exec,
                  const std::function<void(const EpochMetrics &)> &on_epoch) {
  cfg.validate();
  std::filesystem::create_directories(out_dir);
  const auto examples = load_examples(cfg, exec);
  const auto [train_idx, val_idx] = split_indices(examples.size(), cfg.val_fraction, cfg.seed);
  const auto val_batch = pointers(examples, val_idx, 0, val_idx.size());

  checkpoint::Checkpoint state;
  state.config = cfg.model;
  state.weights = cfg.weights;
  checkpoint::TrainingState ts;
  ts.best_val = std::numeric_limits<double>::infinity();
  if (cfg.resume.empty()) {
    state.params = model::init_params(cfg.model);
    ts.adam.m.assign(state.params.values.size(), 0.0);
    ts.adam.v.assign(state.params.values.size(), 0.0);
  } else {
    auto resumed = checkpoint::load(cfg.resume);
    if (!(resumed.config == cfg.model)) {
      throw SchemaError("train: resume checkpoint was written for a different model config");
    }
    if (!resumed.training) {
      throw SchemaError("train: resume checkpoint carries no optimizer state");
    }
    state.params = std::move(resumed.params);
    ts = *resumed.training;
  }

  TrainResult result;
  result.best_checkpoint = out_dir / "best.ckpt";
  result.last_checkpoint = out_dir / "last.ckpt";
  result.metrics_csv = out_dir / "metrics.csv";
  const bool append = !cfg.resume.empty() && std::filesystem::exists(result.metrics_csv);
  auto metrics = open_out(result.metrics_csv, append ? std::ios::app : std::ios::trunc);
  if (!append) {
    csv_row(metrics, {"epoch", "train_total", "train_huber", "train_det", "train_orb", "val_total", "val_huber",
                      "val_det", "val_orb"});
  }

  const auto batch_size = static_cast<std::size_t>(cfg.batch_size);
  for (int epoch = ts.epoch + 1; epoch <= cfg.epochs; ++epoch) {
    const auto order = seeded_permutation(train_idx.size(), cfg.seed ^ mix(static_cast<std::uint64_t>(epoch)));
    std::vector<std::size_t> shuffled(train_idx.size());
    for (std::size_t k = 0; k < order.size(); ++k) {
      shuffled[k] = train_idx[order[k]];
    }
    EpochMetrics em;
    em.epoch = epoch;
    for (std::size_t begin = 0; begin < shuffled.size(); begin += batch_size) {
      const std::size_t end = std::min(shuffled.size(), begin + batch_size);
      const auto batch = pointers(examples, shuffled, begin, end);
      const auto g = model::model_gradients(state.params, cfg.model, batch, cfg.weights, exec);
      em.train = weighted_add(em.train, g.loss,
                              static_cast<double>(end - begin) / static_cast<double>(shuffled.size()));
      adam_update(state.params.values, g.gradient, ts.adam, cfg.lr0);
    }
    em.val = model::batch_loss(state.params, cfg.model, val_batch, cfg.weights, exec);
    ts.epoch = epoch;
    metrics << epoch << ',' << loss_cells(em.train) << ',' << loss_cells(em.val) << '\n';
    metrics.flush();
    if (em.val.total < ts.best_val) {
      ts.best_val = em.val.total;
      ts.best_epoch = epoch;
      state.training = ts;
      checkpoint::save(result.best_checkpoint, state);
    }
    result.history.push_back(em);
    if (on_epoch) {
      on_epoch(em);
    }
  }
  state.training = ts;
  checkpoint::save(result.last_checkpoint, state);
  if (!std::filesystem::exists(result.best_checkpoint)) {
    checkpoint::save(result.best_checkpoint, state);
  }
  result.best_val = ts.best_val;
  result.best_epoch = ts.best_epoch;
  return result;
}

Prediction predict_orbitals(const checkpoint::Checkpoint &ckpt, const Geometry &geom,
                            const datagen::Matching &matching) {
  const auto t0 = Clock::now();
  auto out = model::model_forward(ckpt.params, ckpt.config, geom, matching);
  Prediction p;
  p.seconds = seconds_since(t0);
  p.m_pred = std::move(out.m_pred);
  p.a_upper = std::move(out.a_upper);
  return p;
}

double orbital_energy(const Geometry &geom, const datagen::Matching &matching, const Matrix &m) {
  const auto ints = chem::native_integrals(geom);
  return orbital_opt::energy_at(ints, datagen::pair_structure(matching), m).energy;
}

EvalReport evaluate_with_orbitals(const std::vector<datagen::DatasetRecord> &records, const std::vector<Matrix> &m,
                                  const EvalOptions &opts) {
  if (records.empty()) {
    throw InvalidInput("evaluate: empty dataset");
  }
  if (m.size() != records.size()) {
    throw InvalidInput("evaluate: one orbital matrix per record is required");
  }
  EvalReport report;
  report.rows = map_indexed<EvalRow>(records.size(), opts.exec, [&](std::size_t i) {
    const auto &r = records[i];
    if (m[i].rows() != r.geometry.size() || m[i].cols() != r.geometry.size()) {
      throw InvalidInput("evaluate: orbital matrix " + std::to_string(i) + " has the wrong shape");
    }
    const auto ints = chem::native_integrals(r.geometry);
    const auto ps = datagen::pair_structure(r.matching);
    EvalRow row;
    row.index = static_cast<int>(i);
    row.n = static_cast<int>(r.geometry.size());
    row.family = std::string(to_string(r.geometry.family));
    row.e_spa = r.e_spa;
    row.e_init = r.e_init;
    row.e_model = orbital_opt::energy_at(ints, ps, m[i]).energy;
    row.orthogonality = linalg::orthogonality_residual(m[i]);
    row.e_warm_pred = kNaN;
    row.e_warm_givens = kNaN;
    row.optimize_seconds = kNaN;
    if (opts.warm_start) {
      row.e_warm_pred = orbital_opt::warm_start_step(ints, ps, m[i]).e_spa;
      row.e_warm_givens =
          orbital_opt::warm_start_step(ints, ps, datagen::givens_guess(r.matching, r.geometry.size())).e_spa;
    }
    return row;
  });
  if (opts.time_optimize) {
    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto &r = records[i];
      const auto t0 = Clock::now();
      const auto ints = chem::native_integrals(r.geometry);
      orbital_opt::optimize_orbitals(ints, datagen::pair_structure(r.matching),
                                     datagen::givens_guess(r.matching, r.geometry.size()));
      report.rows[i].optimize_seconds = seconds_since(t0);
    }
  }

  std::map<int, std::vector<const EvalRow *>> by_size;
  for (const auto &row : report.rows) {
    by_size[row.n].push_back(&row);
  }
  auto summarize = [&](int n, const std::vector<const EvalRow *> &rows) {
    SizeSummary s;
    s.n = n;
    s.count = static_cast<int>(rows.size());
    double wins = 0.0;
    for (const auto *row : rows) {
      s.mae += std::abs(row->e_spa - row->e_model);
      s.baseline_mae += std::abs(row->e_spa - row->e_init);
      wins += row->e_warm_pred <= row->e_warm_givens ? 1.0 : 0.0;
    }
    s.mae /= s.count;
    s.baseline_mae /= s.count;
    s.warm_pred_wins = opts.warm_start ? wins / s.count : kNaN;
    return s;
  };
  std::vector<const EvalRow *> all;
  for (const auto &[n, rows] : by_size) {
    report.sizes.push_back(summarize(n, rows));
    all.insert(all.end(), rows.begin(), rows.end());
  }
  report.overall = summarize(0, all);
  report.mean_optimize_seconds = kNaN;
  if (opts.time_optimize) {
    report.mean_optimize_seconds = 0.0;
    for (const auto &row : report.rows) {
      report.mean_optimize_seconds += row.optimize_seconds / static_cast<double>(report.rows.size());
    }
  }
  return report;
}

EvalReport evaluate(const checkpoint::Checkpoint &ckpt, const std::vector<datagen::DatasetRecord> &records,
                    const EvalOptions &opts) {
  // Predictions run serially so the recorded timings are single-threaded.
  std::vector<Matrix> m;
  std::vector<double> seconds;
  for (const auto &r : records) {
    auto p = predict_orbitals(ckpt, r.geometry, r.matching);
    m.push_back(std::move(p.m_pred));
    seconds.push_back(p.seconds);
  }
  auto report = evaluate_with_orbitals(records, m, opts);
  for (std::size_t i = 0; i < seconds.size(); ++i) {
    report.rows[i].predict_seconds = seconds[i];
    report.mean_predict_seconds += seconds[i] / static_cast<double>(seconds.size());
  }
  return report;
}

// Timing columns are left out so that reports stay byte-reproducible.
void write_eval_csv(const std::filesystem::path &path, const EvalReport &report) {
  auto out = open_out(path);
  csv_row(out, {"index", "n", "family", "e_spa", "e_init", "e_model", "abs_error", "abs_error_init",
                "orthogonality", "e_warm_pred", "e_warm_givens"});
  for (const auto &r : report.rows) {
    csv_row(out, {std::to_string(r.index), std::to_string(r.n), r.family, format_double(r.e_spa),
                  format_double(r.e_init), format_double(r.e_model), format_double(std::abs(r.e_spa - r.e_model)),
                  format_double(std::abs(r.e_spa - r.e_init)), format_double(r.orthogonality),
                  format_double(r.e_warm_pred), format_double(r.e_warm_givens)});
  }
}

void write_eval_summary_csv(const std::filesystem::path &path, const EvalReport &report) {
  auto out = open_out(path);
  csv_row(out, {"n", "count", "mae", "baseline_mae", "warm_pred_wins"});
  auto line = [&](const SizeSummary &s, const std::string &label) {
    csv_row(out, {label, std::to_string(s.count), format_double(s.mae), format_double(s.baseline_mae),
                  format_double(s.warm_pred_wins)});
  };
  for (const auto &s : report.sizes) {
    line(s, std::to_string(s.n));
  }
  line(report.overall, "all");
}

std::vector<double> parse_grid(const std::string &spec) {
  std::vector<std::string> parts;
  std::stringstream ss(spec);
  std::string part;
  while (std::getline(ss, part, ':')) {
    parts.push_back(part);
  }
  if (parts.size() != 3) {
    throw InvalidInput("grid '" + spec + "' must look like a:b:steps");
  }
  double a = 0.0;
  double b = 0.0;
  long steps = 0;
  try {
    std::size_t used = 0;
    a = std::stod(parts[0], &used);
    if (used != parts[0].size()) throw std::invalid_argument("a");
    b = std::stod(parts[1], &used);
    if (used != parts[1].size()) throw std::invalid_argument("b");
    steps = std::stol(parts[2], &used);
    if (used != parts[2].size()) throw std::invalid_argument("steps");
  } catch (const std::exception &) {
    throw InvalidInput("grid '" + spec + "' must look like a:b:steps");
  }
  if (steps < 1 || (steps == 1 && a != b) || !(b >= a)) {
    throw InvalidInput("grid '" + spec + "': need a <= b and steps >= 1 (steps = 1 only when a = b)");
  }
  std::vector<double> out;
  for (long k = 0; k < steps; ++k) {
    out.push_back(steps == 1 ? a : a + (b - a) * static_cast<double>(k) / static_cast<double>(steps - 1));
  }
  return out;
}

std::vector<CurveRow> energy_curve(Family family, int n, const std::vector<double> &spacings,
                                   const checkpoint::Checkpoint *ckpt, CurveModes modes, Execution exec) {
  if (family != Family::linear_equidistant && family != Family::ring && family != Family::planar_equidistant) {
    throw InvalidInput("curve: family must be linear_equidistant, planar_equidistant or ring");
  }
  for (double s : spacings) {
    if (!(s > kMinNeighborDistance && s < kMaxNeighborDistance)) {
      throw InvalidInput("curve: spacing " + format_double(s) + " Å lies outside (0.5, 4.0)");
    }
  }
  return map_indexed<CurveRow>(spacings.size(), exec, [&](std::size_t k) {
    const Geometry geom = datagen::structured_geometry(family, n, spacings[k]);
    const auto matching = datagen::min_weight_matching(geom);
    const auto ints = chem::native_integrals(geom);
    const auto ps = datagen::pair_structure(matching);
    const Matrix givens = datagen::givens_guess(matching, geom.size());
    CurveRow row{spacings[k], kNaN, kNaN, kNaN, kNaN};
    row.e_init = orbital_opt::energy_at(ints, ps, givens).energy;
    if (modes.reference) {
      row.e_reference = orbital_opt::optimize_orbitals(ints, ps, givens).e_spa;
    }
    if (ckpt && (modes.predicted || modes.warm)) {
      const auto p = predict_orbitals(*ckpt, geom, matching);
      if (modes.predicted) {
        row.e_predicted = orbital_opt::energy_at(ints, ps, p.m_pred).energy;
      }
      if (modes.warm) {
        row.e_warm = orbital_opt::warm_start_step(ints, ps, p.m_pred).e_spa;
      }
    }
    return row;
  });
}

void write_curve_csv(const std::filesystem::path &path, const std::vector<CurveRow> &rows) {
  auto out = open_out(path);
  csv_row(out, {"spacing", "e_reference", "e_predicted", "e_warm", "e_init"});
  for (const auto &r : rows) {
    csv_row(out, {format_double(r.spacing), format_double(r.e_reference), format_double(r.e_predicted),
                  format_double(r.e_warm), format_double(r.e_init)});
  }
}

std::string format_double(double x) {
  if (std::isnan(x)) {
    return {};
  }
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return {buf, res.ptr};
}

Geometry read_geometry(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open geometry " + path.string());
  }
  Geometry geom;
  if (path.extension() == ".xyz") {
    std::string line;
    int count = 0;
    if (!std::getline(in, line) || !(std::istringstream(line) >> count) || count < 1) {
      throw SchemaError(path.string() + ": first line must hold the atom count");
    }
    std::getline(in, line);
    geom.coords.resize(count, 3);
    for (int i = 0; i < count; ++i) {
      std::string el;
      if (!std::getline(in, line) ||
          !(std::istringstream(line) >> el >> geom.coords(i, 0) >> geom.coords(i, 1) >> geom.coords(i, 2))) {
        throw SchemaError(path.string() + ": malformed atom line " + std::to_string(i + 1));
      }
      geom.elements.push_back(el);
    }
  } else {
    try {
      const auto j = ojson::parse(in);
      const auto &coords = j.at("coords");
      geom.coords.resize(static_cast<Eigen::Index>(coords.size()), 3);
      for (std::size_t i = 0; i < coords.size(); ++i) {
        if (coords[i].size() != 3) {
          throw SchemaError(path.string() + ": coords rows need 3 entries");
        }
        for (int c = 0; c < 3; ++c) {
          geom.coords(static_cast<Eigen::Index>(i), c) = coords[i][static_cast<std::size_t>(c)].get<double>();
        }
      }
      if (j.contains("elements")) {
        geom.elements = j.at("elements").get<std::vector<std::string>>();
      } else {
        geom.elements.assign(coords.size(), "H");
      }
    } catch (const nlohmann::json::exception &e) {
      throw SchemaError(path.string() + ": " + e.what());
    }
  }
  if (auto why = geometry_violation(geom)) {
    throw InvalidGeometry(path.string() + ": " + *why);
  }
  return geom;
}

} // namespace spaorb::pipeline
