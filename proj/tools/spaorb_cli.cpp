#include "spaorb/checkpoint.hpp"
#include "spaorb/datagen.hpp"
#include "spaorb/errors.hpp"
#include "spaorb/features.hpp"
#include "spaorb/pipeline.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>

using namespace spaorb;

namespace {

using ojson = nlohmann::ordered_json;

Execution execution(bool serial) { return serial ? Execution::serial : Execution::parallel; }

ojson matrix_json(const Matrix &m) {
  ojson out = ojson::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    ojson row = ojson::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      row.push_back(m(i, j));
    }
    out.push_back(row);
  }
  return out;
}

void write_text(const std::string &path, const std::string &text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw IoError("cannot write " + path);
  }
  out << text;
}

pipeline::CurveModes parse_modes(const std::string &list) {
  pipeline::CurveModes m{false, false, false};
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "reference") {
      m.reference = true;
    } else if (item == "predicted") {
      m.predicted = true;
    } else if (item == "warm") {
      m.warm = true;
    } else {
      throw InvalidInput("unknown curve mode '" + item + "' (reference, predicted, warm)");
    }
  }
  return m;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Orbital-optimized SPA data generation and orbital-rotation prediction for hydrogen clusters"};
  app.require_subcommand(1);
  bool serial = false;
  app.add_flag("--serial", serial, "Run every kernel on one thread");

  auto *gen = app.add_subcommand("generate", "Generate an orbital-optimized reference dataset (JSON Lines)");
  std::string family = "random_3d";
  int n = 4;
  int count = 0;
  std::uint64_t seed = 0;
  std::string out;
  gen->add_option("--family", family, "Geometry family")->required();
  gen->add_option("--n", n, "Atoms per geometry (even)")->required();
  gen->add_option("--count", count, "Number of records")->required()->check(CLI::NonNegativeNumber);
  gen->add_option("--seed", seed, "Base seed")->required();
  gen->add_option("--out", out, "Output path")->required();

  auto *tr = app.add_subcommand("train", "Train the orbital-rotation model");
  std::string config;
  std::string out_dir;
  bool full_scale = false;
  bool quiet = false;
  tr->add_option("--config", config, "Training config (JSON)")->required()->check(CLI::ExistingFile);
  tr->add_option("--out", out_dir, "Output directory")->required();
  tr->add_flag("--full-scale", full_scale, "Use the full epoch count instead of the config value");
  tr->add_flag("--quiet", quiet, "Do not print per-epoch losses");

  auto *pr = app.add_subcommand("predict", "Predict the orbital rotation for one geometry");
  std::string ckpt_path;
  std::string geometry_path;
  std::string predict_out;
  pr->add_option("--checkpoint", ckpt_path, "Checkpoint file")->required()->check(CLI::ExistingFile);
  pr->add_option("--geometry", geometry_path, "Geometry (.xyz or JSON with coords)")->required()->check(CLI::ExistingFile);
  pr->add_option("--out", predict_out, "Write the JSON result here instead of stdout");

  auto *ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  std::string dataset;
  std::string report;
  std::string summary;
  bool no_warm = false;
  bool time_optimize = false;
  ev->add_option("--checkpoint", ckpt_path, "Checkpoint file")->required()->check(CLI::ExistingFile);
  ev->add_option("--dataset", dataset, "Dataset (JSON Lines)")->required()->check(CLI::ExistingFile);
  ev->add_option("--report", report, "Per-record CSV report")->required();
  ev->add_option("--summary", summary, "Per-size summary CSV");
  ev->add_flag("--no-warm", no_warm, "Skip the warm-start comparison");
  ev->add_flag("--time-optimize", time_optimize, "Also time a full orbital optimization per record");

  auto *cu = app.add_subcommand("curve", "Potential-energy curve over a spacing grid");
  std::string grid;
  std::string modes = "reference,predicted,warm";
  cu->add_option("--family", family, "linear_equidistant, planar_equidistant or ring")->required();
  cu->add_option("--n", n, "Atom count")->required();
  cu->add_option("--grid", grid, "Spacing grid a:b:steps (Å)")->required();
  cu->add_option("--checkpoint", ckpt_path, "Checkpoint file (needed for predicted and warm)");
  cu->add_option("--out", out, "Output CSV")->required();
  cu->add_option("--modes", modes, "Comma-separated subset of reference,predicted,warm");

  auto *fe = app.add_subcommand("features", "Dump the graph features of one geometry (JSON)");
  model::ModelConfig default_model;
  fe->add_option("--geometry", geometry_path, "Geometry (.xyz or JSON with coords)")->required()->check(CLI::ExistingFile);
  fe->add_option("--out", out, "Output path")->required();
  fe->add_option("--checkpoint", ckpt_path, "Take feature settings from this checkpoint");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    return app.exit(e);
  }

  try {
    const Execution exec = execution(serial);
    if (*gen) {
      const datagen::GenerateSpec spec{parse_family(family), n, count, seed};
      const auto s = datagen::generate_dataset(spec, out, exec);
      std::cout << "wrote " << s.written << " records to " << out << " (" << s.rejected << " rejected)\n";
    } else if (*tr) {
      auto cfg = pipeline::read_train_config(config);
      if (full_scale) {
        cfg.epochs = pipeline::kFullScaleEpochs;
      }
      const auto res = pipeline::train(cfg, out_dir, exec, [&](const pipeline::EpochMetrics &m) {
        if (!quiet) {
          std::cerr << "epoch " << m.epoch << " train " << pipeline::format_double(m.train.total) << " val "
                    << pipeline::format_double(m.val.total) << '\n';
        }
      });
      std::cout << "best epoch " << res.best_epoch << " val " << pipeline::format_double(res.best_val) << '\n'
                << "best checkpoint " << res.best_checkpoint.string() << '\n'
                << "last checkpoint " << res.last_checkpoint.string() << '\n'
                << "metrics " << res.metrics_csv.string() << '\n';
    } else if (*pr) {
      const auto ckpt = checkpoint::load(ckpt_path);
      const Geometry geom = pipeline::read_geometry(geometry_path);
      const auto matching = datagen::min_weight_matching(geom);
      const auto p = pipeline::predict_orbitals(ckpt, geom, matching);
      ojson j;
      j["n"] = geom.size();
      ojson edges = ojson::array();
      for (const auto &[a, b] : matching.edges) {
        edges.push_back({a, b});
      }
      j["edges"] = edges;
      j["a_upper"] = std::vector<double>(p.a_upper.data(), p.a_upper.data() + p.a_upper.size());
      j["m_pred"] = matrix_json(p.m_pred);
      j["orthogonality"] = linalg::orthogonality_residual(p.m_pred);
      j["e_model"] = pipeline::orbital_energy(geom, matching, p.m_pred);
      j["e_init"] = pipeline::orbital_energy(geom, matching, datagen::givens_guess(matching, geom.size()));
      j["predict_seconds"] = p.seconds;
      if (predict_out.empty()) {
        std::cout << j.dump(2) << '\n';
      } else {
        write_text(predict_out, j.dump(2) + "\n");
      }
    } else if (*ev) {
      const auto ckpt = checkpoint::load(ckpt_path);
      const auto records = datagen::read_dataset(dataset);
      pipeline::EvalOptions opts;
      opts.warm_start = !no_warm;
      opts.time_optimize = time_optimize;
      opts.exec = exec;
      const auto rep = pipeline::evaluate(ckpt, records, opts);
      pipeline::write_eval_csv(report, rep);
      if (!summary.empty()) {
        pipeline::write_eval_summary_csv(summary, rep);
      }
      for (const auto &s : rep.sizes) {
        std::cout << "n=" << s.n << " count=" << s.count << " mae=" << pipeline::format_double(s.mae)
                  << " baseline_mae=" << pipeline::format_double(s.baseline_mae);
        if (opts.warm_start) {
          std::cout << " warm_pred_wins=" << pipeline::format_double(s.warm_pred_wins);
        }
        std::cout << '\n';
      }
      std::cout << "mean predict seconds " << pipeline::format_double(rep.mean_predict_seconds) << '\n';
      if (time_optimize) {
        std::cout << "mean optimize seconds " << pipeline::format_double(rep.mean_optimize_seconds) << '\n';
      }
    } else if (*cu) {
      const auto m = parse_modes(modes);
      std::optional<checkpoint::Checkpoint> ckpt;
      if (!ckpt_path.empty()) {
        ckpt = checkpoint::load(ckpt_path);
      } else if (m.predicted || m.warm) {
        if (cu->count("--modes") > 0) {
          throw InvalidInput("curve: predicted and warm modes need --checkpoint");
        }
      }
      const auto rows = pipeline::energy_curve(parse_family(family), n, pipeline::parse_grid(grid),
                                               ckpt ? &*ckpt : nullptr, m, exec);
      pipeline::write_curve_csv(out, rows);
      std::cout << "wrote " << rows.size() << " rows to " << out << '\n';
    } else if (*fe) {
      features::FeatureConfig fc = default_model.feature_config();
      if (!ckpt_path.empty()) {
        fc = checkpoint::load(ckpt_path).config.feature_config();
      }
      const Geometry geom = pipeline::read_geometry(geometry_path);
      write_text(out, features::to_json(features::featurize(geom, datagen::min_weight_matching(geom), fc)) + "\n");
    }
  } catch (const std::exception &e) {
    std::cerr << "spaorb: error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
