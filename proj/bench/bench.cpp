// Serial vs parallel kernels, and model prediction vs full orbital optimization.
#include "spaorb/chem.hpp"
#include "spaorb/datagen.hpp"
#include "spaorb/model.hpp"
#include "spaorb/orbital_opt.hpp"
#include "spaorb/parallel.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>

using namespace spaorb;

namespace {

double time_it(const std::function<void()> &fn) {
  const auto t0 = std::chrono::steady_clock::now();
  fn();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void report(const char *what, double serial, double parallel) {
  std::printf("%-34s serial %9.4f s  parallel %9.4f s  speedup %5.2f\n", what, serial, parallel, serial / parallel);
}

} // namespace

int main(int argc, char **argv) {
  const int count = argc > 1 ? std::atoi(argv[1]) : 16;
  std::printf("threads: %d\n", max_threads());

  for (int n : {4, 6, 8}) {
    const datagen::GenerateSpec spec{Family::random_3d, n, count, 11};
    const double s = time_it([&] { datagen::generate_records(spec, Execution::serial); });
    const double p = time_it([&] { datagen::generate_records(spec, Execution::parallel); });
    char label[64];
    std::snprintf(label, sizeof label, "generate %d x H%d", count, n);
    report(label, s, p);
  }

  const auto records = datagen::generate_records({Family::random_3d, 8, count, 23}, Execution::parallel);
  model::ModelConfig cfg;
  cfg.seed = 5;
  const auto params = model::init_params(cfg);
  std::vector<model::TrainingExample> examples;
  for (std::size_t i = 0; i < records.size(); ++i) {
    examples.push_back(model::make_example(records[i], cfg, std::to_string(i)));
  }
  std::vector<const model::TrainingExample *> batch;
  for (const auto &e : examples) {
    batch.push_back(&e);
  }
  const losses::LossWeights w;
  {
    const double s = time_it([&] { model::model_gradients(params, cfg, batch, w, Execution::serial); });
    const double p = time_it([&] { model::model_gradients(params, cfg, batch, w, Execution::parallel); });
    report("model_gradients batch of H8", s, p);
  }

  double predict = 0.0;
  double optimize = 0.0;
  for (const auto &r : records) {
    predict += time_it([&] { model::model_forward(params, cfg, r.geometry, r.matching); });
    optimize += time_it([&] {
      const auto ints = chem::native_integrals(r.geometry);
      orbital_opt::optimize_orbitals(ints, datagen::pair_structure(r.matching),
                                     datagen::givens_guess(r.matching, r.geometry.size()));
    });
  }
  std::printf("H8 mean predict %.6f s, mean optimize %.6f s, ratio %.1f\n", predict / records.size(),
              optimize / records.size(), optimize / predict);
  return 0;
}
