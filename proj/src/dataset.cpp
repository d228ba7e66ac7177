#include "kkm/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace kkm {

void DataSet::validate() const {
  if (n == 0 || d == 0) throw InputError("dataset is empty");
  if (values.size() != n * d) throw InternalError("dataset shape mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i]))
      throw InputError("non-finite value at flat index " + std::to_string(i));
  }
  if (!labels.empty() && labels.size() != n)
    throw InputError("label count " + std::to_string(labels.size()) +
                     " does not match sample count " + std::to_string(n));
}

std::uint64_t dataset_fingerprint(const DataSet& data) {
  std::uint64_t h = fnv1a64(&data.n, sizeof(data.n));
  h = fnv1a64(&data.d, sizeof(data.d), h);
  h = fnv1a64(data.values.data(), data.values.size() * sizeof(float), h);
  if (!data.labels.empty())
    h = fnv1a64(data.labels.data(), data.labels.size() * sizeof(std::int32_t), h);
  return h;
}

namespace {

std::ifstream open_or_throw(const std::string& path, bool binary) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw InputError("cannot open " + path);
  return in;
}

double parse_real(const std::string& token, const std::string& path,
                  std::size_t line_no) {
  try {
    std::size_t used = 0;
    double v = std::stod(token, &used);
    while (used < token.size() && std::isspace(static_cast<unsigned char>(token[used])))
      ++used;
    if (used != token.size()) throw std::invalid_argument(token);
    return v;
  } catch (const std::exception&) {
    throw FormatError(path + ":" + std::to_string(line_no) +
                      ": non-numeric field '" + token + "'");
  }
}

}  // namespace

DataSet load_csv(const std::string& path, bool has_labels) {
  std::ifstream in = open_or_throw(path, false);
  DataSet ds;
  ds.provenance = path + " (csv)";
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string token;
    std::vector<double> fields;
    while (std::getline(ss, token, ',')) fields.push_back(parse_real(token, path, line_no));
    if (fields.empty()) continue;
    if (width == 0) {
      width = fields.size();
      if (has_labels && width < 2)
        throw FormatError(path + ": labeled rows need at least 2 columns");
    } else if (fields.size() != width) {
      throw FormatError(path + ":" + std::to_string(line_no) + ": ragged row (" +
                        std::to_string(fields.size()) + " fields, expected " +
                        std::to_string(width) + ")");
    }
    const std::size_t dim = has_labels ? width - 1 : width;
    for (std::size_t k = 0; k < dim; ++k)
      ds.values.push_back(static_cast<float>(fields[k]));
    if (has_labels) ds.labels.push_back(static_cast<std::int32_t>(fields[width - 1]));
    ++ds.n;
    ds.d = dim;
  }
  if (ds.n == 0) throw InputError(path + ": no samples");
  ds.validate();
  return ds;
}

void save_csv(const DataSet& data, const std::string& path, bool with_labels) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path);
  char buf[64];
  for (std::size_t i = 0; i < data.n; ++i) {
    const float* r = data.row(i);
    for (std::size_t k = 0; k < data.d; ++k) {
      std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(r[k]));
      out << buf << (k + 1 < data.d || (with_labels && data.has_labels()) ? "," : "");
    }
    if (with_labels && data.has_labels()) out << data.labels[i];
    out << '\n';
  }
}

DataSet load_libsvm(const std::string& path, std::size_t dim) {
  if (dim == 0) throw InputError("libsvm dimension must be positive");
  std::ifstream in = open_or_throw(path, false);
  DataSet ds;
  ds.provenance = path + " (libsvm, dim=" + std::to_string(dim) + ")";
  ds.d = dim;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    std::string token;
    if (!(ss >> token)) continue;
    ds.labels.push_back(static_cast<std::int32_t>(parse_real(token, path, line_no)));
    std::vector<float> row(dim, 0.0f);
    while (ss >> token) {
      auto colon = token.find(':');
      if (colon == std::string::npos)
        throw FormatError(path + ":" + std::to_string(line_no) +
                          ": expected idx:val, got '" + token + "'");
      const double idx = parse_real(token.substr(0, colon), path, line_no);
      const double val = parse_real(token.substr(colon + 1), path, line_no);
      if (idx < 1 || idx > static_cast<double>(dim) || idx != std::floor(idx))
        throw FormatError(path + ":" + std::to_string(line_no) +
                          ": feature index " + token.substr(0, colon) +
                          " outside [1, " + std::to_string(dim) + "]");
      row[static_cast<std::size_t>(idx) - 1] = static_cast<float>(val);
    }
    ds.values.insert(ds.values.end(), row.begin(), row.end());
    ++ds.n;
  }
  if (ds.n == 0) throw InputError(path + ": no samples");
  ds.validate();
  return ds;
}

namespace {

constexpr std::uint32_t kIdxImagesU8 = 0x00000803u;
constexpr std::uint32_t kIdxImagesF32 = 0x00000D03u;
constexpr std::uint32_t kIdxLabelsU8 = 0x00000801u;

std::uint32_t read_be32(std::ifstream& in, const std::string& path,
                        std::size_t offset) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw FormatError(path + ": truncated at byte offset " + std::to_string(offset));
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

void write_be32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<char*>(b), 4);
}

}  // namespace

DataSet load_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream in = open_or_throw(images_path, true);
  const std::uint32_t magic = read_be32(in, images_path, 0);
  if (magic != kIdxImagesU8 && magic != kIdxImagesF32)
    throw FormatError(images_path + ": bad image magic at byte offset 0 (got 0x" +
                      [&] { char b[16]; std::snprintf(b, sizeof b, "%08x", magic); return std::string(b); }() +
                      ")");
  const std::uint32_t count = read_be32(in, images_path, 4);
  const std::uint32_t rows = read_be32(in, images_path, 8);
  const std::uint32_t cols = read_be32(in, images_path, 12);
  if (count == 0 || rows == 0 || cols == 0)
    throw FormatError(images_path + ": zero dimension in header");

  DataSet ds;
  ds.n = count;
  ds.d = static_cast<std::size_t>(rows) * cols;
  ds.values.resize(ds.n * ds.d);
  ds.provenance = images_path + " (idx)";

  if (magic == kIdxImagesU8) {
    std::vector<unsigned char> raw(ds.n * ds.d);
    if (!in.read(reinterpret_cast<char*>(raw.data()),
                 static_cast<std::streamsize>(raw.size())))
      throw FormatError(images_path + ": truncated pixel payload at byte offset " +
                        std::to_string(16 + in.gcount()));
    for (std::size_t i = 0; i < raw.size(); ++i)
      ds.values[i] = static_cast<float>(raw[i]) / 255.0f;
  } else {
    std::vector<unsigned char> raw(ds.n * ds.d * 4);
    if (!in.read(reinterpret_cast<char*>(raw.data()),
                 static_cast<std::streamsize>(raw.size())))
      throw FormatError(images_path + ": truncated pixel payload at byte offset " +
                        std::to_string(16 + in.gcount()));
    for (std::size_t i = 0; i < ds.n * ds.d; ++i) {
      std::uint32_t bits = (std::uint32_t(raw[4 * i]) << 24) |
                           (std::uint32_t(raw[4 * i + 1]) << 16) |
                           (std::uint32_t(raw[4 * i + 2]) << 8) |
                           std::uint32_t(raw[4 * i + 3]);
      float f;
      std::memcpy(&f, &bits, 4);
      ds.values[i] = f;
    }
  }

  if (!labels_path.empty()) {
    std::ifstream lin = open_or_throw(labels_path, true);
    const std::uint32_t lmagic = read_be32(lin, labels_path, 0);
    if (lmagic != kIdxLabelsU8)
      throw FormatError(labels_path + ": bad label magic at byte offset 0");
    const std::uint32_t lcount = read_be32(lin, labels_path, 4);
    if (lcount != count)
      throw FormatError(labels_path + ": label count " + std::to_string(lcount) +
                        " does not match image count " + std::to_string(count));
    std::vector<unsigned char> raw(lcount);
    if (!lin.read(reinterpret_cast<char*>(raw.data()), lcount))
      throw FormatError(labels_path + ": truncated label payload at byte offset " +
                        std::to_string(8 + lin.gcount()));
    ds.labels.assign(raw.begin(), raw.end());
  }
  ds.validate();
  return ds;
}

void save_idx(const DataSet& data, const std::string& images_path,
              const std::string& labels_path) {
  std::ofstream out(images_path, std::ios::binary);
  if (!out) throw InputError("cannot write " + images_path);
  write_be32(out, kIdxImagesF32);
  write_be32(out, static_cast<std::uint32_t>(data.n));
  write_be32(out, static_cast<std::uint32_t>(data.d));
  write_be32(out, 1);
  for (std::size_t i = 0; i < data.values.size(); ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, &data.values[i], 4);
    write_be32(out, bits);
  }
  if (!labels_path.empty()) {
    if (!data.has_labels()) throw InputError("dataset has no labels to save");
    std::ofstream lout(labels_path, std::ios::binary);
    if (!lout) throw InputError("cannot write " + labels_path);
    write_be32(lout, kIdxLabelsU8);
    write_be32(lout, static_cast<std::uint32_t>(data.n));
    for (std::size_t i = 0; i < data.n; ++i) {
      const auto v = static_cast<unsigned char>(data.labels[i]);
      lout.write(reinterpret_cast<const char*>(&v), 1);
    }
  }
}

DataSet generate_toy2d(std::size_t per_cluster_n, std::uint64_t seed) {
  if (per_cluster_n == 0) throw InputError("per_cluster_n must be positive");
  static constexpr double kCenters[4][2] = {
      {0.25, 0.25}, {0.25, 0.75}, {0.75, 0.25}, {0.75, 0.75}};
  static constexpr double kSigma = 0.2;
  DataSet ds;
  ds.n = 4 * per_cluster_n;
  ds.d = 2;
  ds.values.reserve(ds.n * 2);
  ds.labels.reserve(ds.n);
  ds.provenance = "toy2d(per_cluster_n=" + std::to_string(per_cluster_n) +
                  ", seed=" + std::to_string(seed) + ")";
  Rng rng(derive_seed(seed, "toy2d"));
  for (int c = 0; c < 4; ++c) {
    for (std::size_t i = 0; i < per_cluster_n; ++i) {
      ds.values.push_back(static_cast<float>(kCenters[c][0] + kSigma * rng.next_normal()));
      ds.values.push_back(static_cast<float>(kCenters[c][1] + kSigma * rng.next_normal()));
      ds.labels.push_back(c);
    }
  }
  return ds;
}

DataSet generate_noisy_copies(const DataSet& base, int copies,
                              double noise_fraction, std::uint64_t seed) {
  base.validate();
  if (copies < 1) throw InputError("copies must be >= 1");
  if (noise_fraction < 0.0 || noise_fraction > 1.0)
    throw InputError("noise_fraction must be in [0, 1]");
  const std::size_t k = static_cast<std::size_t>(noise_fraction * static_cast<double>(base.d));

  DataSet ds;
  ds.n = base.n * static_cast<std::size_t>(copies);
  ds.d = base.d;
  ds.values.resize(ds.n * ds.d);
  if (base.has_labels()) ds.labels.resize(ds.n);
  ds.provenance = base.provenance + " (x" + std::to_string(copies) + ", noise " +
                  std::to_string(noise_fraction) + ")";

  Rng rng(derive_seed(seed, "noisy"));
  std::vector<std::uint32_t> feat(base.d);
  std::size_t out = 0;
  for (std::size_t i = 0; i < base.n; ++i) {
    for (int c = 0; c < copies; ++c, ++out) {
      float* dst = ds.row(out);
      std::copy(base.row(i), base.row(i) + base.d, dst);
      // partial Fisher-Yates: first k entries are a uniform distinct sample
      for (std::uint32_t f = 0; f < base.d; ++f) feat[f] = f;
      for (std::size_t f = 0; f < k; ++f) {
        const std::size_t j = f + static_cast<std::size_t>(rng.next_below(base.d - f));
        std::swap(feat[f], feat[j]);
        const float noise = static_cast<float>(rng.next_unit() - 0.5);
        dst[feat[f]] = std::clamp(dst[feat[f]] + noise, 0.0f, 1.0f);
      }
      if (base.has_labels()) ds.labels[out] = base.labels[i];
    }
  }
  return ds;
}

}  // namespace kkm
