#include "flguard/dataset.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "flguard/errors.hpp"

namespace flguard {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

// Reads the whole file; gzip input is inflated transparently (zlib falls back
// to raw bytes when the gzip magic is absent).
std::vector<unsigned char> read_file(const std::string& path) {
  gzFile f = gzopen(path.c_str(), "rb");
  if (!f) throw LoadError("cannot open " + path);
  std::vector<unsigned char> out;
  unsigned char buf[1 << 16];
  int n;
  while ((n = gzread(f, buf, sizeof(buf))) > 0) {
    out.insert(out.end(), buf, buf + n);
  }
  bool bad = n < 0;
  gzclose(f);
  if (bad) throw LoadError("read error in " + path);
  return out;
}

std::uint32_t be32(const unsigned char* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
         (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

void put_be32(std::ofstream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

LabeledDataset load_idx(const std::string& images_path,
                        const std::string& labels_path) {
  auto img = read_file(images_path);
  auto lab = read_file(labels_path);

  if (img.size() < 16) throw LoadError("truncated image file " + images_path);
  if (be32(img.data()) != kImageMagic) {
    throw LoadError("unexpected magic in " + images_path);
  }
  const std::uint32_t n = be32(img.data() + 4);
  const std::uint32_t rows = be32(img.data() + 8);
  const std::uint32_t cols = be32(img.data() + 12);
  const std::size_t dim = std::size_t(rows) * cols;
  if (img.size() != 16 + std::size_t(n) * dim) {
    throw LoadError("truncated image payload in " + images_path);
  }

  if (lab.size() < 8) throw LoadError("truncated label file " + labels_path);
  if (be32(lab.data()) != kLabelMagic) {
    throw LoadError("unexpected magic in " + labels_path);
  }
  const std::uint32_t nl = be32(lab.data() + 4);
  if (lab.size() != 8 + std::size_t(nl)) {
    throw LoadError("truncated label payload in " + labels_path);
  }
  if (n != nl) {
    throw LoadError("image/label count mismatch: " + std::to_string(n) +
                    " vs " + std::to_string(nl));
  }

  LabeledDataset ds;
  ds.features = DenseMatrix(n, dim);
  ds.labels.resize(n);
  int max_label = 0;
  for (std::uint32_t i = 0; i < n; ++i) {
    const unsigned char* px = img.data() + 16 + std::size_t(i) * dim;
    double* row = ds.features.data.data() + std::size_t(i) * dim;
    for (std::size_t j = 0; j < dim; ++j) row[j] = px[j] / 255.0;
    ds.labels[i] = lab[8 + i];
    max_label = std::max(max_label, ds.labels[i]);
  }
  ds.num_classes = max_label + 1;
  return ds;
}

void write_idx(const LabeledDataset& ds, const std::string& images_path,
               const std::string& labels_path, std::uint32_t image_rows,
               std::uint32_t image_cols) {
  const std::size_t dim = ds.dim();
  if (image_rows == 0 || image_cols == 0) {
    image_rows = 1;
    image_cols = static_cast<std::uint32_t>(dim);
  }
  if (std::size_t(image_rows) * image_cols != dim) {
    throw ConfigError("write_idx: rows*cols != feature dimension");
  }

  std::ofstream img(images_path, std::ios::binary);
  if (!img) throw LoadError("cannot write " + images_path);
  put_be32(img, kImageMagic);
  put_be32(img, static_cast<std::uint32_t>(ds.size()));
  put_be32(img, image_rows);
  put_be32(img, image_cols);
  std::vector<unsigned char> row_bytes(dim);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const double* row = ds.features.data.data() + i * dim;
    for (std::size_t j = 0; j < dim; ++j) {
      double v = std::clamp(row[j], 0.0, 1.0);
      row_bytes[j] = static_cast<unsigned char>(std::llround(v * 255.0));
    }
    img.write(reinterpret_cast<const char*>(row_bytes.data()),
              static_cast<std::streamsize>(dim));
  }

  std::ofstream lab(labels_path, std::ios::binary);
  if (!lab) throw LoadError("cannot write " + labels_path);
  put_be32(lab, kLabelMagic);
  put_be32(lab, static_cast<std::uint32_t>(ds.size()));
  for (int label : ds.labels) {
    unsigned char b = static_cast<unsigned char>(label);
    lab.write(reinterpret_cast<const char*>(&b), 1);
  }
}

LabeledDataset synth_classification(RngStream& stream, std::size_t n,
                                    std::size_t dim, int num_classes,
                                    double cluster_spread) {
  if (num_classes < 1 || n < static_cast<std::size_t>(num_classes)) {
    throw ConfigError("synth_classification: need n >= num_classes");
  }
  // Class means sit near 0.5 with per-coordinate offsets scaled so the
  // expected inter-mean distance is O(1) regardless of dim; cluster_spread
  // then controls class overlap directly.
  const double mean_scale = 0.5 / std::sqrt(static_cast<double>(dim));
  DenseMatrix means(num_classes, dim);
  for (int c = 0; c < num_classes; ++c) {
    for (std::size_t j = 0; j < dim; ++j) {
      means.at(c, j) = 0.5 + mean_scale * stream.next_gaussian();
    }
  }

  LabeledDataset ds;
  ds.features = DenseMatrix(n, dim);
  ds.labels.resize(n);
  ds.num_classes = num_classes;
  for (std::size_t i = 0; i < n; ++i) {
    const int c = static_cast<int>(i % num_classes);
    ds.labels[i] = c;
    double* row = ds.features.data.data() + i * dim;
    for (std::size_t j = 0; j < dim; ++j) {
      double v = means.at(c, j) + cluster_spread * stream.next_gaussian();
      row[j] = std::clamp(v, 0.0, 1.0);
    }
  }
  return ds;
}

ClientPartition shard_noniid(const LabeledDataset& ds, std::size_t num_shards,
                             std::size_t shards_per_client,
                             RngStream& stream) {
  if (num_shards == 0 || shards_per_client == 0 ||
      num_shards % shards_per_client != 0) {
    throw ConfigError("shard_noniid: num_shards must divide by shards_per_client");
  }
  if (ds.size() == 0 || ds.size() % num_shards != 0) {
    throw ConfigError("shard_noniid: dataset size must divide by num_shards");
  }

  // Sort by label, ties by original index.
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return ds.labels[a] < ds.labels[b];
                   });

  const std::size_t shard_size = ds.size() / num_shards;
  std::vector<std::size_t> shard_ids(num_shards);
  std::iota(shard_ids.begin(), shard_ids.end(), 0);
  shuffle(stream, shard_ids);

  ClientPartition part;
  part.assignments.resize(num_shards / shards_per_client);
  for (std::size_t c = 0; c < part.assignments.size(); ++c) {
    auto& idx = part.assignments[c];
    idx.reserve(shards_per_client * shard_size);
    for (std::size_t j = 0; j < shards_per_client; ++j) {
      const std::size_t shard = shard_ids[c * shards_per_client + j];
      for (std::size_t k = 0; k < shard_size; ++k) {
        idx.push_back(order[shard * shard_size + k]);
      }
    }
  }
  return part;
}

}  // namespace flguard
