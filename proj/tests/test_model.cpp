#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "faceaudit/model.hpp"
#include "helpers.hpp"

using namespace faceaudit;
using test_helpers::TempDir;

namespace {

Tensor3 random_input(const ArchSpec& arch, std::mt19937& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Tensor3 x(arch.input_channels, arch.input_side, arch.input_side);
  for (double& v : x.v) v = unit(rng);
  return x;
}

// Central finite difference of (d_female*female + d_male*male).
Tensor3 fd_gradient(const CompactNet& net, const Tensor3& x, double d_female, double d_male,
                    double h) {
  Tensor3 g(x.channels, x.height, x.width);
  Tensor3 probe = x;
  for (std::size_t i = 0; i < x.v.size(); ++i) {
    probe.v[i] = x.v[i] + h;
    const LogitVector hi = net.logits(probe);
    probe.v[i] = x.v[i] - h;
    const LogitVector lo = net.logits(probe);
    probe.v[i] = x.v[i];
    g.v[i] = (d_female * (hi.female - lo.female) + d_male * (hi.male - lo.male)) / (2.0 * h);
  }
  return g;
}

double rel_error(const Tensor3& a, const Tensor3& b) {
  double diff = 0.0, ref = 0.0;
  for (std::size_t i = 0; i < a.v.size(); ++i) {
    diff += (a.v[i] - b.v[i]) * (a.v[i] - b.v[i]);
    ref += a.v[i] * a.v[i];
  }
  return std::sqrt(diff) / std::max(std::sqrt(ref), 1e-12);
}

std::vector<TrainExample> brightness_dataset(int n, int side, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> noise(-0.1, 0.1);
  std::vector<TrainExample> data;
  for (int i = 0; i < n; ++i) {
    const bool male = i % 2 == 1;
    TrainExample ex;
    ex.label = male ? Gender::Male : Gender::Female;
    ex.x = Tensor3(1, side, side);
    for (double& v : ex.x.v) v = std::clamp((male ? 0.8 : 0.2) + noise(rng), 0.0, 1.0);
    data.push_back(std::move(ex));
  }
  return data;
}

}  // namespace

TEST_CASE("score_from_logits is the logistic link of the logit gap") {
  CHECK(score_from_logits({2.0, 5.0}).s == doctest::Approx(0.9525741268224334).epsilon(1e-12));
  CHECK(score_from_logits({5.0, 2.0}).s == doctest::Approx(1.0 - 0.9525741268224334).epsilon(1e-12));
  CHECK(score_from_logits({1.5, 1.5}).s == doctest::Approx(0.5));
  CHECK(score_from_logits({1.5, 1.5}).decision() == Gender::Female);  // ties go female
  CHECK(score_from_logits({0.0, 1000.0}).s == doctest::Approx(1.0));
  CHECK(score_from_logits({1000.0, 0.0}).s == doctest::Approx(0.0));
}

TEST_CASE("arch validation rejects impossible stacks") {
  CHECK_NOTHROW(ArchSpec{}.validate());
  CHECK_THROWS_AS((ArchSpec{2, 32, {8}, {}}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((ArchSpec{1, 2, {8, 16}, {}}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((ArchSpec{1, 0, {}, {}}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((ArchSpec{1, 32, {8}, {0}}.validate()), std::invalid_argument);
}

TEST_CASE("forward pass rejects mismatched input shapes") {
  const ArchSpec arch{1, 8, {4}, {}};
  const CompactNet net(arch, 1);
  CHECK_THROWS_AS(net.logits(Tensor3(1, 8, 7)), InputShapeError);
  CHECK_THROWS_AS(net.logits(Tensor3(3, 8, 8)), InputShapeError);
  CHECK_NOTHROW(net.logits(Tensor3(1, 8, 8)));
}

TEST_CASE("seeded init is deterministic") {
  const ArchSpec arch{1, 8, {4}, {3}};
  const CompactNet a(arch, 42), b(arch, 42), c(arch, 43);
  CHECK(a.flatten_parameters() == b.flatten_parameters());
  CHECK(a.flatten_parameters() != c.flatten_parameters());
}

TEST_CASE("analytic input gradient matches central differences") {
  std::mt19937 rng(101);
  const std::vector<ArchSpec> archs = {
      {1, 8, {4}, {}}, {1, 8, {4}, {6}}, {3, 8, {4, 8}, {}}, {1, 4, {}, {5}}, {1, 12, {6}, {4, 3}},
  };
  std::uniform_real_distribution<double> dir(-1.0, 1.0);
  for (int trial = 0; trial < 6; ++trial) {
    const ArchSpec& arch = archs[trial % archs.size()];
    const CompactNet net(arch, 200 + static_cast<unsigned>(trial));
    const Tensor3 x = random_input(arch, rng);
    const double df = dir(rng), dm = dir(rng);
    const Tensor3 analytic = net.input_gradient(x, df, dm);
    const Tensor3 numeric = fd_gradient(net, x, df, dm, 1e-5);
    CHECK(rel_error(numeric, analytic) <= 1e-4);
  }
}

TEST_CASE("input_gradient composes logit objectives linearly") {
  const ArchSpec arch{1, 8, {4}, {}};
  const CompactNet net(arch, 7);
  std::mt19937 rng(8);
  const Tensor3 x = random_input(arch, rng);

  const Tensor3 gf = net.input_gradient(x, 1.0, 0.0);
  const Tensor3 gm = net.input_gradient(x, 0.0, 1.0);
  const Tensor3 combo = net.input_gradient(x, 2.0, -3.0);
  for (std::size_t i = 0; i < combo.v.size(); ++i)
    CHECK(combo.v[i] == doctest::Approx(2.0 * gf.v[i] - 3.0 * gm.v[i]).epsilon(1e-9));

  LogitObjective gap;
  gap.value = [](const LogitVector& lv) { return lv.male - lv.female; };
  gap.gradient = [](const LogitVector&) { return std::array<double, 2>{-1.0, 1.0}; };
  const Tensor3 via_objective = input_gradient(net, x, gap);
  for (std::size_t i = 0; i < via_objective.v.size(); ++i)
    CHECK(via_objective.v[i] == doctest::Approx(gm.v[i] - gf.v[i]).epsilon(1e-9));
}

TEST_CASE("training separates a brightness toy problem") {
  TrainConfig config;
  config.input_side = 8;
  config.conv_channels = {4};
  config.epochs = 12;
  config.seed = 5;
  const auto data = brightness_dataset(24, 8, 9);

  std::vector<double> losses;
  const CompactNet net = train(config, data, &losses);
  REQUIRE(losses.size() == static_cast<std::size_t>(config.epochs) + 1);
  CHECK(losses.back() < losses.front());
  CHECK(dataset_accuracy(net, data) == 1.0);
  CHECK(dataset_loss(net, data) == doctest::Approx(losses.back()));
}

TEST_CASE("training is deterministic for a fixed seed") {
  TrainConfig config;
  config.input_side = 8;
  config.conv_channels = {4};
  config.epochs = 3;
  const auto data = brightness_dataset(12, 8, 14);
  const CompactNet a = train(config, data);
  const CompactNet b = train(config, data);
  CHECK(a.flatten_parameters() == b.flatten_parameters());
}

TEST_CASE("single-class data is rejected") {
  TrainConfig config;
  config.input_side = 8;
  config.conv_channels = {4};
  auto data = brightness_dataset(10, 8, 3);
  for (auto& ex : data) ex.label = Gender::Female;
  CHECK_THROWS_AS(train(config, data), DegenerateDataError);
  CHECK_THROWS_AS(train(config, {}), DegenerateDataError);
}

TEST_CASE("checkpoint round trip preserves arch and parameters") {
  TempDir dir("ckpt");
  const ArchSpec arch{1, 8, {4}, {3}};
  const CompactNet net(arch, 77);
  net.save(dir.path / "model.bin");

  const CompactNet loaded = CompactNet::load(dir.path / "model.bin");
  CHECK(loaded.arch() == arch);
  CHECK(loaded.flatten_parameters() == net.flatten_parameters());

  std::mt19937 rng(12);
  const Tensor3 x = random_input(arch, rng);
  CHECK(loaded.logits(x).female == net.logits(x).female);
  CHECK(loaded.logits(x).male == net.logits(x).male);
}

TEST_CASE("corrupt checkpoints are rejected") {
  TempDir dir("ckpt_bad");
  CHECK_THROWS_AS(CompactNet::load(dir.path / "missing.bin"), CheckpointError);

  std::ofstream bad(dir.path / "bad.bin", std::ios::binary);
  bad << "NOTMODEL and then some";
  bad.close();
  CHECK_THROWS_AS(CompactNet::load(dir.path / "bad.bin"), CheckpointError);

  const CompactNet net(ArchSpec{1, 8, {4}, {}}, 1);
  net.save(dir.path / "model.bin");
  std::filesystem::resize_file(dir.path / "model.bin",
                               std::filesystem::file_size(dir.path / "model.bin") - 16);
  CHECK_THROWS_AS(CompactNet::load(dir.path / "model.bin"), CheckpointError);
}

TEST_CASE("preprocessor keeps same-size gray inputs exact") {
  RasterImage img(4, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) {
      const auto v = static_cast<std::uint8_t>(16 * (4 * y + x));
      img.at(x, y) = {v, v, v};
    }
  const Preprocessor prep{4, 1};
  const Tensor3 t = prep.run(img);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) {
      const double luma = img.at(x, y).r;  // gray pixel: luma equals the value
      CHECK(t.at(0, y, x) == doctest::Approx(luma / 255.0).epsilon(1e-12));
    }
}

TEST_CASE("preprocessor resizes and splits channels") {
  RasterImage img(8, 8);
  for (auto& p : img.pixels()) p = {200, 100, 50};
  const Preprocessor prep3{4, 3};
  const Tensor3 t = prep3.run(img);
  CHECK(t.channels == 3);
  CHECK(t.height == 4);
  CHECK(t.at(0, 0, 0) == doctest::Approx(200.0 / 255.0));
  CHECK(t.at(1, 1, 2) == doctest::Approx(100.0 / 255.0));
  CHECK(t.at(2, 3, 3) == doctest::Approx(50.0 / 255.0));

  const Preprocessor prep1{2, 1};
  const Tensor3 g = prep1.run(img);
  const double luma = 0.299 * 200 + 0.587 * 100 + 0.114 * 50;
  CHECK(g.at(0, 0, 0) == doctest::Approx(luma / 255.0).epsilon(1e-12));
}
