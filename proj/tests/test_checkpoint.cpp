#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "vsgno/checkpoint.hpp"
#include "vsgno/errors.hpp"

using namespace vsgno;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "vsgno_checkpoint_tests";
  fs::create_directories(dir);
  return dir / name;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void spit(const fs::path& p, const std::string& bytes) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  f << bytes;
}

}  // namespace

TEST_SUITE("checkpoint") {
  TEST_CASE("round trip is bit exact and keeps metadata") {
    ModelConfig c = oracle::tiny_config(OperatorMode::full, SpikingMode::bypass);
    c.spike_steps = 3;
    const VsGnoModel m = VsGnoModel::create(c, 77, 5);
    const fs::path p = scratch("roundtrip.bin");
    write_checkpoint(p, m, {{"gamma", 0.5}}, true);
    const Checkpoint ck = read_checkpoint(p);
    CHECK(ck.echo_truth);
    CHECK(ck.metadata["gamma"] == 0.5);
    CHECK(ck.model.edge_count() == 77);
    CHECK(config_to_json(ck.model.config()) == config_to_json(c));
    const auto a = m.named_parameters(), b = ck.model.named_parameters();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].first == b[i].first);
      CHECK(std::equal(a[i].second.values().begin(), a[i].second.values().end(), b[i].second.values().begin()));
    }
    CHECK(slurp(p).substr(0, 8) == "VSGNOCK1");
  }

  TEST_CASE("structural damage is reported") {
    const VsGnoModel m = VsGnoModel::create(oracle::tiny_config(OperatorMode::spectral_only, SpikingMode::on), 10, 1);
    const fs::path p = scratch("damaged.bin");
    write_checkpoint(p, m);
    const std::string good = slurp(p);

    spit(p, good.substr(0, good.size() - 8));
    CHECK_THROWS_AS(read_checkpoint(p), FormatError);
    spit(p, good + "x");
    CHECK_THROWS_AS(read_checkpoint(p), FormatError);
    spit(p, "NOTACKPT" + good.substr(8));
    CHECK_THROWS_AS(read_checkpoint(p), FormatError);
    CHECK_THROWS_AS(read_checkpoint(scratch("missing.bin")), IoError);
  }

  TEST_CASE("model config json is strict") {
    nlohmann::json j = config_to_json(ModelConfig{});
    CHECK(config_to_json(config_from_json(j)) == j);
    j["colour"] = "blue";
    CHECK_THROWS_AS(config_from_json(j), ConfigError);
    j = config_to_json(ModelConfig{});
    j["layers"] = "four";
    CHECK_THROWS_AS(config_from_json(j), ConfigError);
  }
}
