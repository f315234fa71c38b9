#include "spaorb/datagen.hpp"
#include "spaorb/errors.hpp"
#include "spaorb/parallel.hpp"

#include <doctest.h>

#include <stdexcept>
#include <string>

using namespace spaorb;

TEST_CASE("results are stored by index") {
  for (auto exec : {Execution::serial, Execution::parallel}) {
    const auto out = map_indexed<std::size_t>(1000, exec, [](std::size_t i) { return i * i; });
    for (std::size_t i = 0; i < out.size(); ++i) {
      REQUIRE(out[i] == i * i);
    }
  }
  CHECK(map_indexed<int>(0, Execution::parallel, [](std::size_t) { return 1; }).empty());
  CHECK(max_threads() >= 1);
}

TEST_CASE("the lowest failing index is reported") {
  for (auto exec : {Execution::serial, Execution::parallel}) {
    try {
      map_indexed<int>(100, exec, [](std::size_t i) -> int {
        if (i % 30 == 7) {
          throw std::runtime_error(std::to_string(i));
        }
        return 0;
      });
      FAIL("expected an exception");
    } catch (const std::runtime_error &e) {
      CHECK(std::string(e.what()) == "7");
    }
  }
}

TEST_CASE("serial and parallel generation write identical datasets") {
  datagen::GenerateSpec spec;
  spec.family = Family::random_3d;
  spec.n = 6;
  spec.count = 8;
  spec.seed = 12;
  const auto a = datagen::generate_records(spec, Execution::serial);
  const auto b = datagen::generate_records(spec, Execution::parallel);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(datagen::record_to_json_line(a[i]) == datagen::record_to_json_line(b[i]));
  }
}
