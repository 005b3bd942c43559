#include <doctest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "mfdal/checkpoint.hpp"
#include "mfdal/errors.hpp"
#include "support.hpp"

using namespace mfdal;
using mfdal::testing::MicroProblem;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() /
             ("mfdal_" + name + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("checkpoint round trip is bit-exact") {
  auto p = MicroProblem::make(6);
  train(p.model, p.levels, p.reference_ids, 25);
  TempDir dir("roundtrip");
  save_checkpoint(p.model, dir.path, {ModelType::sfnp, "heat", 2, -1, 1});
  CHECK(fs::exists(dir.path / "manifest.json"));
  CHECK(fs::file_size(dir.path / "params.bin") % 8 == 0);

  const auto loaded = load_checkpoint(dir.path);
  CHECK(loaded.info.type == ModelType::sfnp);
  CHECK(loaded.info.task == "heat");
  CHECK(loaded.info.high_level == 1);
  const auto& m = loaded.model;
  CHECK(m.parameters() == p.model.parameters());
  CHECK(m.trained());
  CHECK(m.epochs_trained() == 25);
  CHECK(m.config().seed == p.model.config().seed);
  CHECK(m.output_scaling()[1].scale == p.model.output_scaling()[1].scale);

  Eigen::MatrixXd x(3, 1);
  x << 0.05, 0.45, 0.9;
  for (int k = 0; k < 2; ++k) {
    const auto a = predict(p.model, p.levels, k, x);
    const auto b = predict(m, p.levels, k, x);
    CHECK(a.mean == b.mean);
    CHECK(a.var == b.var);
  }
  // Training continues identically from a restored model.
  auto resumed = loaded.model;
  train(p.model, p.levels, p.reference_ids, 5);
  train(resumed, p.levels, p.reference_ids, 5);
  CHECK(resumed.parameters() == p.model.parameters());
}

TEST_CASE("checkpoint errors") {
  auto p = MicroProblem::make(6);
  TempDir dir("errors");
  save_checkpoint(p.model, dir.path);

  SUBCASE("truncated parameters") {
    const auto size = fs::file_size(dir.path / "params.bin");
    fs::resize_file(dir.path / "params.bin", size - 12);
    CHECK_THROWS_AS(load_checkpoint(dir.path), ParseError);
  }
  SUBCASE("missing manifest") {
    fs::remove(dir.path / "manifest.json");
    CHECK_THROWS_AS(load_checkpoint(dir.path), ParseError);
  }
  SUBCASE("version mismatch") {
    nlohmann::json j;
    std::ifstream(dir.path / "manifest.json") >> j;
    j["version"] = kCheckpointVersion + 1;
    std::ofstream(dir.path / "manifest.json") << j.dump();
    CHECK_THROWS_AS(load_checkpoint(dir.path), IncompatibleCheckpoint);
  }
  SUBCASE("wrong latent dimension names both values") {
    SurrogateConfig cfg = p.model.config();
    cfg.latent_dim = 3;
    const SurrogateModel expected(1, {2, 2}, cfg, FeatureScaling::identity(1));
    try {
      load_checkpoint(dir.path, expected);
      FAIL("expected IncompatibleCheckpoint");
    } catch (const IncompatibleCheckpoint& e) {
      const std::string msg = e.what();
      CHECK(msg.find("is 2") != std::string::npos);
      CHECK(msg.find("expects 3") != std::string::npos);
    }
    CHECK_NOTHROW(load_checkpoint(dir.path, p.model));
  }
  SUBCASE("garbage manifest") {
    std::ofstream(dir.path / "manifest.json") << "{ not json";
    CHECK_THROWS_AS(load_checkpoint(dir.path), ParseError);
  }
}
