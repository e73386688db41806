#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "s2o/matrix.hpp"

namespace s2o::data {

/// Labelled samples; one row of `inputs` per sample, features in [0, 1].
struct Dataset {
  Matrix inputs;
  std::vector<int> labels;
  int num_classes = 0;
  std::string name;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t dim() const noexcept { return inputs.cols(); }

  /// Throws InvalidArgument if any invariant is broken.
  void validate() const;
};

struct Batch {
  Matrix inputs;
  std::vector<int> labels;
};

/// Reads an IDX image file (magic 0x00000803) and label file (magic 0x00000801).
/// Pixels are scaled to [0, 1] by /255. num_classes defaults to max label + 1.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 int num_classes = 0);

/// Writes `ds` as an IDX pair with image shape rows x cols (rows * cols == ds.dim()).
/// Inputs are quantized with round(255 x).
void write_idx(const Dataset& ds, std::size_t rows, std::size_t cols,
               const std::filesystem::path& images, const std::filesystem::path& labels);

/// Balanced Gaussian clusters around seeded uniform-random centers, clipped to [0, 1].
Dataset synth_blobs(int num_classes, std::size_t per_class, std::size_t dim, double spread,
                    std::uint64_t seed);

Dataset subset(const Dataset& ds, std::span<const std::size_t> indices);
/// First `count` samples after a seeded shuffle.
Dataset sample(const Dataset& ds, std::size_t count, std::uint64_t seed);

/// Seeded shuffle into batches of `batch_size`; the last batch may be short.
std::vector<Batch> batches(const Dataset& ds, std::size_t batch_size, std::uint64_t epoch_seed);

}  // namespace s2o::data
