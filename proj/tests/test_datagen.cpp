#include "oracles.hpp"

#include "spaorb/datagen.hpp"
#include "spaorb/errors.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

using namespace spaorb;
using namespace spaorb::datagen;

namespace {

std::string slurp(const std::filesystem::path &p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::filesystem::path scratch(const std::string &name) {
  const auto dir = std::filesystem::temp_directory_path() / "spaorb_test_datagen";
  std::filesystem::create_directories(dir);
  return dir / name;
}

} // namespace

TEST_CASE("ring of four with unit edges is a unit square") {
  const Geometry g = structured_geometry(Family::ring, 4, 1.0);
  const Vector nn = nearest_neighbor_distances(g.coords);
  CHECK((nn.array() - 1.0).abs().maxCoeff() < 1e-12);
  const Matrix d = distance_matrix(g.coords);
  CHECK(d(0, 2) == doctest::Approx(std::numbers::sqrt2).epsilon(1e-12));
}

TEST_CASE("sampling is deterministic and respects the distance window") {
  for (auto family : {Family::linear_equidistant, Family::linear_random, Family::planar_equidistant,
                      Family::planar_random, Family::ring, Family::random_3d}) {
    for (int n : {4, 6, 8, 10, 12}) {
      const Geometry a = sample_geometry(family, n, 99);
      const Geometry b = sample_geometry(family, n, 99);
      CHECK(a.coords == b.coords);
      CHECK(a.family == family);
      CHECK(!geometry_violation(a));
    }
  }
  CHECK(sample_geometry(Family::random_3d, 6, 1).coords != sample_geometry(Family::random_3d, 6, 2).coords);
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const Vector nn = nearest_neighbor_distances(sample_geometry(Family::random_3d, 6, seed).coords);
    REQUIRE(nn.minCoeff() > 0.5);
    REQUIRE(nn.maxCoeff() < 4.0);
  }
  CHECK_THROWS_AS(sample_geometry(Family::random_3d, 5, 0), InvalidInput);
  CHECK_THROWS_AS(sample_geometry(Family::random_3d, 14, 0), InvalidInput);
}

TEST_CASE("structured layouts") {
  const Geometry chain = structured_geometry(Family::linear_equidistant, 6, 1.5);
  CHECK(chain.coords(5, 0) == doctest::Approx(7.5));
  const Geometry grid = structured_geometry(Family::planar_equidistant, 6, 1.0);
  CHECK(grid.coords(3, 1) == 1.0);
  CHECK(grid.coords(4, 0) == 1.0);
}

TEST_CASE("matching small cases") {
  Matrix c = Matrix::Zero(4, 3);
  for (int i = 0; i < 4; ++i) {
    c(i, 0) = i;
  }
  const Matching m = min_weight_matching(Geometry::hydrogens(c));
  CHECK(m.edges == std::vector<std::pair<int, int>>{{0, 1}, {2, 3}});
  CHECK(matching_cost(Geometry::hydrogens(c), m) == doctest::Approx(2.0));
  Matrix two = Matrix::Zero(2, 3);
  two(1, 2) = 1.0;
  CHECK(min_weight_matching(Geometry::hydrogens(two)).edges == std::vector<std::pair<int, int>>{{0, 1}});
}

TEST_CASE("matching equals exhaustive enumeration") {
  std::mt19937_64 rng(41);
  for (int n : {4, 6, 8}) {
    for (int trial = 0; trial < 200; ++trial) {
      const Geometry g = oracle::random_cluster(n, rng);
      const Matching m = min_weight_matching(g);
      const auto best = oracle::exhaustive_matching(g.coords);
      REQUIRE(std::abs(matching_cost(g, m) - best.cost) < 1e-12);
      REQUIRE(m.edges == *std::min_element(best.optimal.begin(), best.optimal.end()));
    }
  }
}

TEST_CASE("tied matchings resolve to the lexicographically smallest edge list") {
  const Geometry square = structured_geometry(Family::ring, 4, 1.0);
  CHECK(min_weight_matching(square).edges == std::vector<std::pair<int, int>>{{0, 1}, {2, 3}});
}

TEST_CASE("Givens guess structure") {
  const Matching m{{{0, 1}, {2, 3}}};
  const Matrix g = givens_guess(m, 4);
  const double r = 1.0 / std::numbers::sqrt2;
  CHECK(g(0, 0) == r);
  CHECK(g(0, 1) == r);
  CHECK(g(1, 0) == -r);
  CHECK(g(2, 3) == r);
  CHECK(g(0, 2) == 0.0);
  CHECK((g.transpose() * g - Matrix::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(g.determinant() == doctest::Approx(1.0));
  const Matrix a = linalg::logm_special_orthogonal(g);
  CHECK(a(0, 1) == doctest::Approx(std::numbers::pi / 4).epsilon(1e-13));
  CHECK(a(2, 3) == doctest::Approx(std::numbers::pi / 4).epsilon(1e-13));
  CHECK(std::abs(a(0, 2)) < 1e-13);
}

TEST_CASE("dataset generation round trip and determinism") {
  const GenerateSpec spec{Family::linear_random, 4, 10, 7};
  const auto path_a = scratch("a.jsonl");
  const auto path_b = scratch("b.jsonl");
  const auto summary = generate_dataset(spec, path_a, Execution::parallel);
  CHECK(summary.written == 10);
  generate_dataset(spec, path_b, Execution::serial);
  CHECK(slurp(path_a) == slurp(path_b));

  const auto records = read_dataset(path_a);
  REQUIRE(records.size() == 10);
  for (const auto &r : records) {
    validate_record(r);
    CHECK(r.e_spa <= r.e_init + 1e-9);
    CHECK(r.schema_version == kSchemaVersion);
    const DatasetRecord back = record_from_json_line(record_to_json_line(r));
    CHECK(back.geometry.coords == r.geometry.coords);
    CHECK(back.m_oo == r.m_oo);
    CHECK(back.theta_opt == r.theta_opt);
    CHECK(back.e_spa == r.e_spa);
    CHECK(back.e_init == r.e_init);
    CHECK(back.matching == r.matching);
    CHECK(back.geometry.seed == r.geometry.seed);
    CHECK(record_to_json_line(back) == record_to_json_line(r));
  }
}

TEST_CASE("corrupted records are rejected") {
  auto r = make_record(structured_geometry(Family::linear_equidistant, 4, 1.2));
  r.m_oo(0, 0) += 1e-3;
  CHECK_THROWS_AS(validate_record(r), SchemaError);
  CHECK_THROWS_AS(record_from_json_line("{\"coords\": 3}"), SchemaError);
  const auto path = scratch("bad.jsonl");
  {
    std::ofstream out(path);
    out << "not json\n";
  }
  CHECK_THROWS_AS(read_dataset(path), SchemaError);
  CHECK_THROWS_AS(read_dataset(scratch("missing.jsonl")), IoError);
}

TEST_CASE("record seeds advance past rejected attempts") {
  const GenerateSpec spec{Family::random_3d, 4, 5, 100};
  CHECK(record_seed(spec, 0, 0) == 100);
  CHECK(record_seed(spec, 3, 0) == 103);
  CHECK(record_seed(spec, 3, 1) != record_seed(spec, 3, 0));
}
