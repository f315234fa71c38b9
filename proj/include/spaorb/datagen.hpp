#pragma once

#include "spaorb/geometry.hpp"
#include "spaorb/orbital_opt.hpp"
#include "spaorb/parallel.hpp"
#include "spaorb/spa.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace spaorb::datagen {

inline constexpr int kSchemaVersion = 1;
inline constexpr int kRejectionBudget = 10000;

struct Matching {
  std::vector<std::pair<int, int>> edges; // i < j, sorted by i

  bool operator==(const Matching &) const = default;
};

struct DatasetRecord {
  Geometry geometry;
  Matching matching;
  Vector theta_opt;
  Matrix m_oo;
  double e_spa = 0.0;
  double e_init = 0.0;
  int schema_version = kSchemaVersion;
};

/// Draws one geometry of the given family. Throws SamplingFailure when the
/// rejection budget is exhausted.
Geometry sample_geometry(Family family, int n, std::uint64_t seed);

/// Deterministic member of a structured family at a fixed spacing (Å):
/// linear_equidistant, planar_equidistant (2 x n/2 grid) or ring (edge length).
Geometry structured_geometry(Family family, int n, double spacing);

/// Exact minimum-total-length perfect matching. Among (numerically) tied
/// optima the lexicographically smallest edge list wins.
Matching min_weight_matching(const Geometry &geom);

double matching_cost(const Geometry &geom, const Matching &m);

/// Identity with a (1/√2)[[1,1],[-1,1]] block on every matched (i, j).
Matrix givens_guess(const Matching &matching, Eigen::Index n);

spa::PairStructure pair_structure(const Matching &matching);

/// Full reference pipeline for one geometry: matching, Givens guess, native
/// integrals, orbital optimization. Throws BranchBoundary when the optimized
/// rotation has no principal real logarithm.
DatasetRecord make_record(const Geometry &geom, const orbital_opt::OuterOptions &opts = {});

/// Checks the stored invariants; throws SchemaError describing the first failure.
void validate_record(const DatasetRecord &r);

std::string record_to_json_line(const DatasetRecord &r);
DatasetRecord record_from_json_line(const std::string &line);

std::vector<DatasetRecord> read_dataset(const std::filesystem::path &path);
void write_dataset(const std::filesystem::path &path, const std::vector<DatasetRecord> &records);

struct GenerateSpec {
  Family family = Family::random_3d;
  int n = 4;
  int count = 0;
  std::uint64_t seed = 0;
};

struct GenerateSummary {
  int written = 0;
  int rejected = 0;
};

/// Seed of attempt `attempt` for record `index`.
std::uint64_t record_seed(const GenerateSpec &spec, int index, int attempt);

/// Produces spec.count records in memory; record i is independent of the
/// others, so the parallel and serial paths agree bit for bit.
std::vector<DatasetRecord> generate_records(const GenerateSpec &spec, Execution exec,
                                            GenerateSummary *summary = nullptr);

/// generate_records followed by a JSON Lines write.
GenerateSummary generate_dataset(const GenerateSpec &spec, const std::filesystem::path &out,
                                 Execution exec = Execution::parallel);

} // namespace spaorb::datagen
