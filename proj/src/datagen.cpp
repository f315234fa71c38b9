#include "spaorb/datagen.hpp"

#include "spaorb/chem.hpp"
#include "spaorb/errors.hpp"
#include "spaorb/linalg.hpp"

#include <json.hpp>

#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>

namespace spaorb::datagen {

namespace {

using ojson = nlohmann::ordered_json;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Platform-independent uniform draw in [lo, hi).
class Uniform {
public:
  explicit Uniform(std::uint64_t seed) : engine_(splitmix64(seed)) {}
  double operator()(double lo, double hi) {
    const double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * u;
  }

private:
  std::mt19937_64 engine_;
};

double spacing_draw(Uniform &rng) {
  double d = 0.0;
  do {
    d = rng(kMinNeighborDistance, kMaxNeighborDistance);
  } while (d <= kMinNeighborDistance);
  return d;
}

bool neighbors_in_range(const Matrix &coords) {
  const Vector nn = nearest_neighbor_distances(coords);
  return ((nn.array() > kMinNeighborDistance) && (nn.array() < kMaxNeighborDistance)).all();
}

// Box edge for the random families; chosen so that typical nearest-neighbor
// spacings sit inside (0.5, 4.0) Å and rejection stays cheap.
double box_edge(int n, int dims) {
  return 1.9 * std::pow(static_cast<double>(n), 1.0 / dims);
}

void check_n(int n, int lo, int hi) {
  if (n % 2 != 0 || n < lo || n > hi) {
    throw InvalidInput("atom count " + std::to_string(n) + " must be even in [" + std::to_string(lo) +
                       ", " + std::to_string(hi) + "]");
  }
}

} // namespace

Geometry structured_geometry(Family family, int n, double spacing) {
  check_n(n, 2, 16);
  Matrix c = Matrix::Zero(n, 3);
  switch (family) {
  case Family::linear_equidistant:
    for (int i = 0; i < n; ++i) {
      c(i, 0) = i * spacing;
    }
    break;
  case Family::planar_equidistant:
    for (int i = 0; i < n; ++i) {
      c(i, 0) = (i % (n / 2)) * spacing;
      c(i, 1) = (i / (n / 2)) * spacing;
    }
    break;
  case Family::ring: {
    if (n < 3) {
      // two atoms: a "ring" degenerates to a dimer
      c(1, 0) = spacing;
      break;
    }
    const double radius = spacing / (2.0 * std::sin(std::numbers::pi / n));
    for (int i = 0; i < n; ++i) {
      const double phi = 2.0 * std::numbers::pi * i / n;
      c(i, 0) = radius * std::cos(phi);
      c(i, 1) = radius * std::sin(phi);
    }
    break;
  }
  default:
    throw InvalidInput("structured_geometry: family '" + std::string(to_string(family)) +
                       "' has no fixed-spacing layout");
  }
  return Geometry::hydrogens(std::move(c), family);
}

Geometry sample_geometry(Family family, int n, std::uint64_t seed) {
  check_n(n, 4, 12);
  Uniform rng(seed);
  for (int attempt = 0; attempt < kRejectionBudget; ++attempt) {
    Matrix c = Matrix::Zero(n, 3);
    switch (family) {
    case Family::linear_equidistant:
    case Family::planar_equidistant:
    case Family::ring: {
      Geometry g = structured_geometry(family, n, spacing_draw(rng));
      c = g.coords;
      break;
    }
    case Family::linear_random: {
      double x = 0.0;
      for (int i = 1; i < n; ++i) {
        x += spacing_draw(rng);
        c(i, 0) = x;
      }
      break;
    }
    case Family::planar_random: {
      const double edge = box_edge(n, 2);
      for (int i = 0; i < n; ++i) {
        c(i, 0) = rng(0.0, edge);
        c(i, 1) = rng(0.0, edge);
      }
      break;
    }
    case Family::random_3d: {
      const double edge = box_edge(n, 3);
      for (int i = 0; i < n; ++i) {
        for (int k = 0; k < 3; ++k) {
          c(i, k) = rng(0.0, edge);
        }
      }
      break;
    }
    case Family::custom:
      throw InvalidInput("sample_geometry: cannot sample the custom family");
    }
    if (neighbors_in_range(c)) {
      return Geometry::hydrogens(std::move(c), family, seed);
    }
  }
  throw SamplingFailure("sample_geometry: rejection budget exhausted for family " +
                        std::string(to_string(family)));
}

double matching_cost(const Geometry &geom, const Matching &m) {
  double cost = 0.0;
  for (const auto &[i, j] : m.edges) {
    cost += (geom.coords.row(i) - geom.coords.row(j)).norm();
  }
  return cost;
}

Matching min_weight_matching(const Geometry &geom) {
  const int n = static_cast<int>(geom.size());
  if (n % 2 != 0 || n > 24) {
    throw InvalidInput("min_weight_matching: need an even atom count");
  }
  const Matrix d = distance_matrix(geom.coords);
  const double tie = 1e-12 * std::max(1.0, d.maxCoeff()) * n;
  const std::size_t full = (std::size_t{1} << n) - 1;
  std::vector<double> best(full + 1, std::numeric_limits<double>::quiet_NaN());
  std::vector<int> choice(full + 1, -1);

  // best[mask] = optimal cost of matching the atoms in mask; the lowest atom
  // is always paired first, so edge lists come out sorted.
  auto solve = [&](auto &&self, std::size_t mask) -> double {
    if (mask == 0) {
      return 0.0;
    }
    if (!std::isnan(best[mask])) {
      return best[mask];
    }
    const int i = std::countr_zero(mask);
    const std::size_t rest = mask & ~(std::size_t{1} << i);
    std::vector<std::pair<int, double>> options;
    double lowest = std::numeric_limits<double>::infinity();
    for (int j = i + 1; j < n; ++j) {
      if (rest >> j & 1u) {
        const double c = d(i, j) + self(self, rest & ~(std::size_t{1} << j));
        options.emplace_back(j, c);
        lowest = std::min(lowest, c);
      }
    }
    for (const auto &[j, c] : options) {
      if (c <= lowest + tie) {
        choice[mask] = j;
        best[mask] = c;
        break;
      }
    }
    return best[mask];
  };
  solve(solve, full);

  Matching m;
  std::size_t mask = full;
  while (mask != 0) {
    const int i = std::countr_zero(mask);
    const int j = choice[mask];
    m.edges.emplace_back(i, j);
    mask &= ~(std::size_t{1} << i);
    mask &= ~(std::size_t{1} << j);
  }
  return m;
}

Matrix givens_guess(const Matching &matching, Eigen::Index n) {
  Matrix m = Matrix::Identity(n, n);
  const double r = 1.0 / std::numbers::sqrt2;
  for (const auto &[i, j] : matching.edges) {
    if (i < 0 || j < 0 || i >= n || j >= n || i == j) {
      throw InvalidInput("givens_guess: edge outside the atom range");
    }
    m(i, i) = r;
    m(j, j) = r;
    m(i, j) = r;
    m(j, i) = -r;
  }
  return m;
}

spa::PairStructure pair_structure(const Matching &matching) {
  spa::PairStructure ps;
  for (const auto &[i, j] : matching.edges) {
    ps.pairs.emplace_back(std::min(i, j), std::max(i, j));
  }
  return ps;
}

DatasetRecord make_record(const Geometry &geom, const orbital_opt::OuterOptions &opts) {
  if (auto why = geometry_violation(geom)) {
    throw InvalidGeometry("make_record: " + *why);
  }
  DatasetRecord r;
  r.geometry = geom;
  r.matching = min_weight_matching(geom);
  const auto ps = pair_structure(r.matching);
  const Matrix m_init = givens_guess(r.matching, geom.size());
  const auto ints = chem::native_integrals(geom);
  r.e_init = orbital_opt::energy_at(ints, ps, m_init).energy;
  const auto oo = orbital_opt::optimize_orbitals(ints, ps, m_init, opts);
  // Training needs log(M_oo); reject records without a principal logarithm.
  (void)linalg::logm_special_orthogonal(oo.m_oo);
  r.m_oo = oo.m_oo;
  r.theta_opt = oo.theta_opt;
  r.e_spa = oo.e_spa;
  return r;
}

void validate_record(const DatasetRecord &r) {
  if (r.schema_version != kSchemaVersion) {
    throw SchemaError("unsupported schema_version " + std::to_string(r.schema_version));
  }
  if (auto why = geometry_violation(r.geometry)) {
    throw SchemaError("record geometry: " + *why);
  }
  const Eigen::Index n = r.geometry.size();
  std::vector<bool> seen(static_cast<std::size_t>(n), false);
  if (static_cast<Eigen::Index>(2 * r.matching.edges.size()) != n) {
    throw SchemaError("record edges do not form a perfect matching");
  }
  for (const auto &[i, j] : r.matching.edges) {
    if (i < 0 || j >= n || i >= j || seen[i] || seen[j]) {
      throw SchemaError("record edges do not form a perfect matching");
    }
    seen[i] = seen[j] = true;
  }
  if (r.theta_opt.size() != n / 2 || !r.theta_opt.allFinite()) {
    throw SchemaError("record theta_opt has the wrong length");
  }
  if (r.m_oo.rows() != n || r.m_oo.cols() != n || !linalg::is_special_orthogonal(r.m_oo)) {
    throw SchemaError("record m_oo is not special orthogonal");
  }
  if (!(r.e_spa <= r.e_init + 1e-9)) {
    throw SchemaError("record e_spa exceeds e_init");
  }
}

std::string record_to_json_line(const DatasetRecord &r) {
  ojson j;
  const Eigen::Index n = r.geometry.size();
  ojson coords = ojson::array();
  for (Eigen::Index i = 0; i < n; ++i) {
    coords.push_back({r.geometry.coords(i, 0), r.geometry.coords(i, 1), r.geometry.coords(i, 2)});
  }
  j["coords"] = std::move(coords);
  j["elements"] = r.geometry.elements;
  j["family"] = std::string(to_string(r.geometry.family));
  j["seed"] = r.geometry.seed;
  ojson edges = ojson::array();
  for (const auto &[a, b] : r.matching.edges) {
    edges.push_back({a, b});
  }
  j["edges"] = std::move(edges);
  j["theta_opt"] = std::vector<double>(r.theta_opt.data(), r.theta_opt.data() + r.theta_opt.size());
  ojson m = ojson::array();
  for (Eigen::Index i = 0; i < r.m_oo.rows(); ++i) {
    ojson row = ojson::array();
    for (Eigen::Index k = 0; k < r.m_oo.cols(); ++k) {
      row.push_back(r.m_oo(i, k));
    }
    m.push_back(std::move(row));
  }
  j["m_oo"] = std::move(m);
  j["e_spa"] = r.e_spa;
  j["e_init"] = r.e_init;
  j["schema_version"] = r.schema_version;
  return j.dump();
}

DatasetRecord record_from_json_line(const std::string &line) {
  DatasetRecord r;
  try {
    const ojson j = ojson::parse(line);
    r.schema_version = j.at("schema_version").get<int>();
    const auto &coords = j.at("coords");
    Matrix c(static_cast<Eigen::Index>(coords.size()), 3);
    for (std::size_t i = 0; i < coords.size(); ++i) {
      for (std::size_t k = 0; k < 3; ++k) {
        c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = coords.at(i).at(k).get<double>();
      }
    }
    r.geometry.coords = std::move(c);
    r.geometry.elements = j.at("elements").get<std::vector<std::string>>();
    r.geometry.family = parse_family(j.at("family").get<std::string>());
    r.geometry.seed = j.at("seed").get<std::uint64_t>();
    for (const auto &e : j.at("edges")) {
      r.matching.edges.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
    }
    const auto theta = j.at("theta_opt").get<std::vector<double>>();
    r.theta_opt = Eigen::Map<const Vector>(theta.data(), static_cast<Eigen::Index>(theta.size()));
    const auto &m = j.at("m_oo");
    r.m_oo.resize(static_cast<Eigen::Index>(m.size()), static_cast<Eigen::Index>(m.size()));
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (m.at(i).size() != m.size()) {
        throw SchemaError("m_oo is not square");
      }
      for (std::size_t k = 0; k < m.size(); ++k) {
        r.m_oo(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = m.at(i).at(k).get<double>();
      }
    }
    r.e_spa = j.at("e_spa").get<double>();
    r.e_init = j.at("e_init").get<double>();
  } catch (const nlohmann::json::exception &e) {
    throw SchemaError(std::string("malformed dataset record: ") + e.what());
  } catch (const InvalidInput &e) {
    throw SchemaError(std::string("malformed dataset record: ") + e.what());
  }
  validate_record(r);
  return r;
}

std::vector<DatasetRecord> read_dataset(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open dataset " + path.string());
  }
  std::vector<DatasetRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) {
      continue;
    }
    try {
      out.push_back(record_from_json_line(line));
    } catch (const SchemaError &e) {
      throw SchemaError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_dataset(const std::filesystem::path &path, const std::vector<DatasetRecord> &records) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot open " + path.string() + " for writing");
  }
  for (const auto &r : records) {
    out << record_to_json_line(r) << '\n';
  }
  if (!out) {
    throw IoError("write failed for " + path.string());
  }
}

std::uint64_t record_seed(const GenerateSpec &spec, int index, int attempt) {
  return spec.seed + static_cast<std::uint64_t>(index) +
         static_cast<std::uint64_t>(attempt) * static_cast<std::uint64_t>(std::max(spec.count, 1));
}

std::vector<DatasetRecord> generate_records(const GenerateSpec &spec, Execution exec,
                                            GenerateSummary *summary) {
  if (spec.count < 0) {
    throw InvalidInput("generate: count must be non-negative");
  }
  struct Slot {
    DatasetRecord record;
    int rejected = 0;
  };
  constexpr int kMaxAttempts = 1000;
  auto slots = map_indexed<Slot>(static_cast<std::size_t>(spec.count), exec, [&](std::size_t i) {
    Slot s;
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
      const Geometry g = sample_geometry(spec.family, spec.n, record_seed(spec, static_cast<int>(i), attempt));
      try {
        s.record = make_record(g);
        return s;
      } catch (const BranchBoundary &) {
        ++s.rejected;
      }
    }
    throw SamplingFailure("generate: record " + std::to_string(i) + " rejected " +
                          std::to_string(kMaxAttempts) + " times");
  });
  std::vector<DatasetRecord> out;
  out.reserve(slots.size());
  GenerateSummary sum;
  for (auto &s : slots) {
    sum.rejected += s.rejected;
    out.push_back(std::move(s.record));
  }
  sum.written = static_cast<int>(out.size());
  if (summary) {
    *summary = sum;
  }
  return out;
}

GenerateSummary generate_dataset(const GenerateSpec &spec, const std::filesystem::path &out,
                                 Execution exec) {
  GenerateSummary summary;
  const auto records = generate_records(spec, exec, &summary);
  write_dataset(out, records);
  return summary;
}

} // namespace spaorb::datagen
