#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "doctest.h"
#include "s2o/dataset.hpp"
#include "s2o/error.hpp"
#include "s2o/losses.hpp"
#include "s2o/network.hpp"
#include "s2o/random.hpp"

using namespace s2o;
using namespace s2o::data;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "s2o_test_dataset";
  fs::create_directories(dir);
  return dir / name;
}

void write_bytes(const fs::path& p, const std::vector<unsigned char>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an s2o::Error");
  return ErrorKind::Io;
}

const std::vector<unsigned char> kImages{0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2,
                                         0, 255, 51, 102, 1, 2, 3, 254};
const std::vector<unsigned char> kLabels{0, 0, 8, 1, 0, 0, 0, 2, 1, 0};

}  // namespace

TEST_CASE("load_idx parses a hand-crafted pair") {
  write_bytes(scratch("img"), kImages);
  write_bytes(scratch("lab"), kLabels);
  const Dataset ds = load_idx(scratch("img"), scratch("lab"));
  const Matrix expected{{0.0, 1.0, 0.2, 0.4}, {1 / 255.0, 2 / 255.0, 3 / 255.0, 254 / 255.0}};
  CHECK(ds.inputs == expected);
  CHECK(ds.labels == std::vector<int>{1, 0});
  CHECK(ds.num_classes == 2);
}

TEST_CASE("load_idx error kinds") {
  write_bytes(scratch("img"), kImages);
  write_bytes(scratch("lab"), kLabels);
  CHECK(kind_of([] { load_idx(scratch("img"), scratch("img")); }) == ErrorKind::BadMagic);

  auto short_img = kImages;
  short_img.pop_back();
  write_bytes(scratch("img_short"), short_img);
  CHECK(kind_of([] { load_idx(scratch("img_short"), scratch("lab")); }) == ErrorKind::Truncated);

  auto three = kLabels;
  three[7] = 3;
  three.push_back(1);
  write_bytes(scratch("lab3"), three);
  CHECK(kind_of([] { load_idx(scratch("img"), scratch("lab3")); }) == ErrorKind::CountMismatch);

  CHECK(kind_of([] { load_idx(scratch("missing"), scratch("lab")); }) == ErrorKind::Io);
}

TEST_CASE("write/load round-trip is bit-identical") {
  Rng rng(5);
  Dataset ds;
  ds.name = "rt";
  ds.num_classes = 10;
  ds.inputs = Matrix(13, 12);
  for (double& v : ds.inputs.data()) v = static_cast<double>(rng.engine()() % 256) / 255.0;
  for (int i = 0; i < 13; ++i) ds.labels.push_back(i % 10);
  write_idx(ds, 3, 4, scratch("rt_img"), scratch("rt_lab"));
  const Dataset back = load_idx(scratch("rt_img"), scratch("rt_lab"), 10);
  CHECK(back.inputs == ds.inputs);
  CHECK(back.labels == ds.labels);
}

TEST_CASE("synth_blobs") {
  const Dataset tight = synth_blobs(3, 5, 4, 0.0, 1);
  for (std::size_t i = 3; i < tight.size(); ++i)
    for (std::size_t j = 0; j < 4; ++j) CHECK(tight.inputs(i, j) == tight.inputs(i % 3, j));

  const Dataset a = synth_blobs(4, 20, 6, 0.3, 9);
  const Dataset b = synth_blobs(4, 20, 6, 0.3, 9);
  CHECK(a.inputs == b.inputs);
  CHECK(a.labels == b.labels);
  for (double v : a.inputs.data()) CHECK((v >= 0.0 && v <= 1.0));
  for (int c = 0; c < 4; ++c) CHECK(std::count(a.labels.begin(), a.labels.end(), c) == 20);
}

TEST_CASE("synth_blobs: far clusters are linearly separable after 100 steps") {
  // Pick a seed whose two centers are far apart, then train a linear probe.
  Dataset ds;
  for (std::uint64_t seed = 0;; ++seed) {
    ds = synth_blobs(2, 100, 8, 0.05, seed);
    double d2 = 0.0;
    for (std::size_t j = 0; j < 8; ++j) d2 += std::pow(ds.inputs(0, j) - ds.inputs(1, j), 2);
    if (d2 > 1.0) break;
  }
  const std::vector<std::size_t> widths{8, 2};
  nn::Network net = nn::Network::he_init(widths, 3);
  for (int step = 0; step < 100; ++step) {
    const auto g = nn::backward(net, nn::forward(net, ds.inputs), {nn::LossKind::CrossEntropy, ds.labels});
    Matrix w = net.layer(0).weight;
    w.axpy(-1.0, g.layers[0]);
    net.set_weight(0, w);
  }
  const Matrix z = nn::logits(net, ds.inputs);
  int correct = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) correct += (z(i, 1) > z(i, 0)) == (ds.labels[i] == 1);
  CHECK(correct >= 198);
}

TEST_CASE("batches") {
  const Dataset ds = synth_blobs(3, 7, 2, 0.1, 4);
  const auto single = batches(ds, 100, 1);
  REQUIRE(single.size() == 1);
  auto sorted = single[0].labels;
  auto orig = ds.labels;
  std::sort(sorted.begin(), sorted.end());
  std::sort(orig.begin(), orig.end());
  CHECK(sorted == orig);

  const auto parts = batches(ds, 5, 2);
  CHECK(parts.size() == 5);
  CHECK(parts.back().labels.size() == 1);
  std::vector<int> all;
  for (const auto& b : parts) all.insert(all.end(), b.labels.begin(), b.labels.end());
  std::sort(all.begin(), all.end());
  CHECK(all == orig);

  const auto again = batches(ds, 5, 2);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    CHECK(parts[i].inputs == again[i].inputs);
    CHECK(parts[i].labels == again[i].labels);
  }
  CHECK(kind_of([&] { batches(ds, 0, 1); }) == ErrorKind::InvalidArgument);
}
