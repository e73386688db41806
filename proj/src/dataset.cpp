#include "s2o/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>

#include "s2o/error.hpp"
#include "s2o/random.hpp"

namespace s2o::data {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t offset,
                        const std::filesystem::path& path) {
  if (buf.size() < offset + 4) throw Error(ErrorKind::Truncated, path.string() + ": header");
  return (std::uint32_t{buf[offset]} << 24) | (std::uint32_t{buf[offset + 1]} << 16) |
         (std::uint32_t{buf[offset + 2]} << 8) | std::uint32_t{buf[offset + 3]};
}

void put_be32(std::ofstream& out, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                         static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(bytes, 4);
}

}  // namespace

void Dataset::validate() const {
  if (inputs.rows() != labels.size())
    throw Error(ErrorKind::InvalidArgument, name + ": inputs/labels row count mismatch");
  if (num_classes < 1) throw Error(ErrorKind::InvalidArgument, name + ": num_classes < 1");
  for (int y : labels)
    if (y < 0 || y >= num_classes)
      throw Error(ErrorKind::InvalidLabel, name + ": label " + std::to_string(y));
  for (double v : inputs.data())
    if (!(v >= 0.0 && v <= 1.0))
      throw Error(ErrorKind::InvalidArgument, name + ": input outside [0,1]");
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 int num_classes) {
  const auto img = read_file(images);
  const auto lab = read_file(labels);

  if (read_be32(img, 0, images) != kImageMagic)
    throw Error(ErrorKind::BadMagic, images.string() + ": not an IDX image file");
  if (read_be32(lab, 0, labels) != kLabelMagic)
    throw Error(ErrorKind::BadMagic, labels.string() + ": not an IDX label file");

  const std::size_t count = read_be32(img, 4, images);
  const std::size_t rows = read_be32(img, 8, images);
  const std::size_t cols = read_be32(img, 12, images);
  const std::size_t label_count = read_be32(lab, 4, labels);
  if (count != label_count)
    throw Error(ErrorKind::CountMismatch, std::to_string(count) + " images vs " +
                                              std::to_string(label_count) + " labels");

  const std::size_t pixels = rows * cols;
  if (img.size() < 16 + count * pixels) throw Error(ErrorKind::Truncated, images.string());
  if (lab.size() < 8 + count) throw Error(ErrorKind::Truncated, labels.string());

  Dataset ds;
  ds.name = images.filename().string();
  ds.inputs = Matrix(count, pixels);
  ds.labels.resize(count);
  int max_label = -1;
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t p = 0; p < pixels; ++p)
      ds.inputs(i, p) = static_cast<double>(img[16 + i * pixels + p]) / 255.0;
    ds.labels[i] = lab[8 + i];
    max_label = std::max(max_label, ds.labels[i]);
  }
  ds.num_classes = num_classes > 0 ? num_classes : max_label + 1;
  ds.validate();
  return ds;
}

void write_idx(const Dataset& ds, std::size_t rows, std::size_t cols,
               const std::filesystem::path& images, const std::filesystem::path& labels) {
  if (rows * cols != ds.dim())
    throw Error(ErrorKind::InvalidShape, "image shape does not match dataset dimension");
  std::ofstream img(images, std::ios::binary);
  std::ofstream lab(labels, std::ios::binary);
  if (!img || !lab) throw Error(ErrorKind::Io, "cannot create IDX output files");

  put_be32(img, kImageMagic);
  put_be32(img, static_cast<std::uint32_t>(ds.size()));
  put_be32(img, static_cast<std::uint32_t>(rows));
  put_be32(img, static_cast<std::uint32_t>(cols));
  for (double v : ds.inputs.data()) {
    const long q = std::lround(std::clamp(v, 0.0, 1.0) * 255.0);
    img.put(static_cast<char>(static_cast<unsigned char>(q)));
  }
  put_be32(lab, kLabelMagic);
  put_be32(lab, static_cast<std::uint32_t>(ds.size()));
  for (int y : ds.labels) lab.put(static_cast<char>(static_cast<unsigned char>(y)));
  if (!img || !lab) throw Error(ErrorKind::Io, "write failed");
}

Dataset synth_blobs(int num_classes, std::size_t per_class, std::size_t dim, double spread,
                    std::uint64_t seed) {
  if (num_classes < 1 || per_class < 1 || dim < 1 || spread < 0.0)
    throw Error(ErrorKind::InvalidArgument, "synth_blobs: arguments must be positive");
  Rng center_rng(derive_seed(seed, "centers"));
  Matrix centers(static_cast<std::size_t>(num_classes), dim);
  for (double& c : centers.data()) c = center_rng.uniform();

  Rng rng(derive_seed(seed, "samples"));
  const std::size_t n = per_class * static_cast<std::size_t>(num_classes);
  Dataset ds;
  ds.name = "blobs";
  ds.num_classes = num_classes;
  ds.inputs = Matrix(n, dim);
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = static_cast<int>(i % static_cast<std::size_t>(num_classes));
    ds.labels[i] = y;
    for (std::size_t j = 0; j < dim; ++j) {
      const double noise = rng.normal();
      ds.inputs(i, j) = std::clamp(centers(static_cast<std::size_t>(y), j) + spread * noise, 0.0, 1.0);
    }
  }
  return ds;
}

Dataset subset(const Dataset& ds, std::span<const std::size_t> indices) {
  Dataset out;
  out.name = ds.name;
  out.num_classes = ds.num_classes;
  out.inputs = Matrix(indices.size(), ds.dim());
  out.labels.resize(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::size_t src = indices[i];
    if (src >= ds.size()) throw Error(ErrorKind::InvalidArgument, "subset index out of range");
    std::copy_n(ds.inputs.row(src).begin(), ds.dim(), out.inputs.row(i).begin());
    out.labels[i] = ds.labels[src];
  }
  return out;
}

Dataset sample(const Dataset& ds, std::size_t count, std::uint64_t seed) {
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 engine(seed);
  std::shuffle(idx.begin(), idx.end(), engine);
  idx.resize(std::min(count, idx.size()));
  return subset(ds, idx);
}

std::vector<Batch> batches(const Dataset& ds, std::size_t batch_size, std::uint64_t epoch_seed) {
  if (batch_size < 1) throw Error(ErrorKind::InvalidArgument, "batch_size must be >= 1");
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 engine(epoch_seed);
  std::shuffle(idx.begin(), idx.end(), engine);

  std::vector<Batch> out;
  for (std::size_t start = 0; start < idx.size(); start += batch_size) {
    const std::size_t end = std::min(idx.size(), start + batch_size);
    Dataset part = subset(ds, std::span(idx).subspan(start, end - start));
    out.push_back({std::move(part.inputs), std::move(part.labels)});
  }
  return out;
}

}  // namespace s2o::data
