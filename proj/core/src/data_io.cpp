#include "twoway/data_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "twoway/error.hpp"

namespace twoway {
namespace {

static_assert(std::endian::native == std::endian::little,
              "paired-views I/O assumes a little-endian host");

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t offset,
                        const std::string& path) {
  if (offset + 4 > bytes.size()) {
    throw FormatError(path + ": truncated header at byte offset " + std::to_string(offset));
  }
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void expect_magic(const std::vector<std::uint8_t>& bytes, std::uint32_t magic,
                  const std::string& path) {
  const std::uint32_t got = read_be32(bytes, 0, path);
  if (got != magic) {
    std::ostringstream msg;
    msg << path << ": bad magic number 0x" << std::hex << got << " at byte offset 0 (expected 0x"
        << magic << ")";
    throw FormatError(msg.str());
  }
}

std::string join(const std::string& dir, const char* name) {
  return (std::filesystem::path(dir) / name).string();
}

template <class T>
void write_le(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T read_le(std::istream& in, const std::string& path) {
  T value{};
  const auto offset = static_cast<long long>(in.tellg());
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw FormatError(path + ": truncated at byte offset " + std::to_string(offset));
  return value;
}

// Matrix rows x cols stored column-major on disk.
void write_column_major(std::ostream& out, const Matrix& m) {
  Vector column(m.rows());
  for (std::size_t c = 0; c < m.cols(); ++c) {
    for (std::size_t r = 0; r < m.rows(); ++r) column[r] = m(r, c);
    out.write(reinterpret_cast<const char*>(column.data()),
              static_cast<std::streamsize>(column.size() * sizeof(double)));
  }
}

Matrix read_column_major(std::istream& in, std::size_t rows, std::size_t cols,
                         const std::string& path) {
  Matrix m(rows, cols);
  Vector column(rows);
  for (std::size_t c = 0; c < cols; ++c) {
    const auto offset = static_cast<long long>(in.tellg());
    in.read(reinterpret_cast<char*>(column.data()),
            static_cast<std::streamsize>(rows * sizeof(double)));
    if (!in) throw FormatError(path + ": truncated at byte offset " + std::to_string(offset));
    for (std::size_t r = 0; r < rows; ++r) m(r, c) = column[r];
  }
  return m;
}

void apply_rows(Matrix& m, const Vector& shift, const Vector& scale) {
  if (shift.empty()) return;
  if (shift.size() != m.rows() || scale.size() != m.rows()) {
    throw ShapeError("input transform does not match feature dimension");
  }
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (double& v : m.row(r)) v = (v - shift[r]) * scale[r];
}

}  // namespace

std::string to_string(Split split) {
  switch (split) {
    case Split::kTrain:
      return "train";
    case Split::kValidation:
      return "validation";
    case Split::kTest:
      return "test";
  }
  return "?";
}

std::size_t PairedDataset::count(Split split) const {
  return static_cast<std::size_t>(std::count(splits.begin(), splits.end(), split));
}

std::vector<std::size_t> PairedDataset::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < splits.size(); ++i)
    if (splits[i] == split) out.push_back(i);
  return out;
}

void PairedDataset::validate() const {
  if (y.cols() != x.cols() || splits.size() != x.cols()) {
    throw ShapeError("paired dataset: x, y and split tags disagree on the sample count");
  }
  if (!labels.empty() && labels.size() != x.cols()) {
    throw ShapeError("paired dataset: label count differs from sample count");
  }
}

PairedDataset select_columns(const PairedDataset& data, std::span<const std::size_t> indices) {
  PairedDataset out;
  out.x = gather_columns(data.x, indices);
  out.y = gather_columns(data.y, indices);
  out.splits.reserve(indices.size());
  for (std::size_t i : indices) out.splits.push_back(data.splits.at(i));
  if (!data.labels.empty()) {
    for (std::size_t i : indices) out.labels.push_back(data.labels[i]);
  }
  return out;
}

PairedDataset subset(const PairedDataset& data, Split split) {
  const auto idx = data.indices(split);
  return select_columns(data, idx);
}

void shuffle_columns(PairedDataset& data, Rng& rng) {
  std::vector<std::size_t> perm(data.size());
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm);
  data = select_columns(data, perm);
}

PairedDataset concatenate(std::span<const PairedDataset> parts) {
  if (parts.empty()) return {};
  const std::size_t dx = parts[0].dim_x();
  const std::size_t dy = parts[0].dim_y();
  std::size_t n = 0;
  bool labelled = true;
  for (const auto& p : parts) {
    if (p.dim_x() != dx || p.dim_y() != dy) throw ShapeError("concatenate: view dims differ");
    n += p.size();
    labelled = labelled && p.labels.size() == p.size();
  }
  PairedDataset out;
  out.x = Matrix(dx, n);
  out.y = Matrix(dy, n);
  std::size_t first = 0;
  for (const auto& p : parts) {
    for (std::size_t r = 0; r < dx; ++r)
      std::copy(p.x.row(r).begin(), p.x.row(r).end(),
                out.x.row(r).begin() + static_cast<std::ptrdiff_t>(first));
    for (std::size_t r = 0; r < dy; ++r)
      std::copy(p.y.row(r).begin(), p.y.row(r).end(),
                out.y.row(r).begin() + static_cast<std::ptrdiff_t>(first));
    out.splits.insert(out.splits.end(), p.splits.begin(), p.splits.end());
    if (labelled) out.labels.insert(out.labels.end(), p.labels.begin(), p.labels.end());
    first += p.size();
  }
  return out;
}

IdxImages read_idx_images(const std::string& path) {
  const auto bytes = read_file(path);
  expect_magic(bytes, 0x00000803u, path);
  IdxImages img;
  img.count = read_be32(bytes, 4, path);
  img.rows = read_be32(bytes, 8, path);
  img.cols = read_be32(bytes, 12, path);
  const std::size_t need = img.count * img.rows * img.cols;
  if (bytes.size() < 16 + need) {
    throw FormatError(path + ": truncated pixel data at byte offset " +
                      std::to_string(bytes.size()) + " (expected " + std::to_string(16 + need) +
                      " bytes)");
  }
  img.pixels.assign(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(need));
  return img;
}

std::vector<std::uint8_t> read_idx_labels(const std::string& path) {
  const auto bytes = read_file(path);
  expect_magic(bytes, 0x00000801u, path);
  const std::size_t n = read_be32(bytes, 4, path);
  if (bytes.size() < 8 + n) {
    throw FormatError(path + ": truncated label data at byte offset " +
                      std::to_string(bytes.size()));
  }
  return std::vector<std::uint8_t>(bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(n));
}

PairedDataset mnist_halves(const IdxImages& images, HalfCut cut) {
  const std::size_t rows = images.rows;
  const std::size_t cols = images.cols;
  if (cut == HalfCut::kLeftRight && cols % 2 != 0) {
    throw FormatError("image width must be even for a left/right cut");
  }
  if (cut == HalfCut::kTopBottom && rows % 2 != 0) {
    throw FormatError("image height must be even for a top/bottom cut");
  }
  const std::size_t half = rows * cols / 2;
  PairedDataset out;
  out.x = Matrix(half, images.count);
  out.y = Matrix(half, images.count);
  out.splits.assign(images.count, Split::kTrain);
  for (std::size_t s = 0; s < images.count; ++s) {
    const std::uint8_t* px = images.pixels.data() + s * rows * cols;
    std::size_t fx = 0;
    std::size_t fy = 0;
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        const double v = px[r * cols + c] / 255.0;
        const bool first =
            cut == HalfCut::kLeftRight ? c < cols / 2 : r < rows / 2;
        if (first) {
          out.x(fx++, s) = v;
        } else {
          out.y(fy++, s) = v;
        }
      }
    }
  }
  return out;
}

PairedDataset load_mnist_halves(const std::string& image_path,
                                const std::optional<std::string>& label_path, HalfCut cut) {
  PairedDataset out = mnist_halves(read_idx_images(image_path), cut);
  if (label_path) {
    out.labels = read_idx_labels(*label_path);
    if (out.labels.size() != out.size()) {
      throw FormatError(*label_path + ": label count does not match the image count");
    }
  }
  return out;
}

PairedDataset load_mnist_benchmark(const std::string& dir, const MnistBenchmarkOptions& options) {
  auto labels_if_present = [&](const char* name) -> std::optional<std::string> {
    const std::string p = join(dir, name);
    if (std::filesystem::exists(p)) return p;
    return std::nullopt;
  };
  PairedDataset train = load_mnist_halves(join(dir, "train-images-idx3-ubyte"),
                                          labels_if_present("train-labels-idx1-ubyte"),
                                          options.cut);
  PairedDataset test = load_mnist_halves(join(dir, "t10k-images-idx3-ubyte"),
                                         labels_if_present("t10k-labels-idx1-ubyte"),
                                         options.cut);
  if (options.validation >= train.size()) {
    throw FormatError("validation hold-out exceeds the training file size");
  }
  const std::size_t first_val = train.size() - options.validation;
  std::size_t n_train = first_val;
  if (options.max_train > 0) n_train = std::min(n_train, options.max_train);
  std::vector<std::size_t> keep(n_train);
  std::iota(keep.begin(), keep.end(), 0);
  for (std::size_t i = first_val; i < train.size(); ++i) keep.push_back(i);
  PairedDataset kept = select_columns(train, keep);
  for (std::size_t i = n_train; i < kept.size(); ++i) kept.splits[i] = Split::kValidation;
  test.splits.assign(test.size(), Split::kTest);
  const PairedDataset parts[] = {std::move(kept), std::move(test)};
  return concatenate(parts);
}

void save_paired_views(const PairedDataset& data, const std::string& path) {
  data.validate();
  if (data.dim_x() == 0 || data.dim_y() == 0) throw ShapeError("paired views need d >= 1");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open for writing: " + path);
  out.write("PVW1", 4);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(data.size()));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(data.dim_x()));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(data.dim_y()));
  write_column_major(out, data.x);
  write_column_major(out, data.y);
  for (Split s : data.splits) write_le<std::uint8_t>(out, static_cast<std::uint8_t>(s));
  if (!out) throw FormatError("failed writing " + path);
}

PairedDataset load_paired_views(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "PVW1", 4) != 0) {
    throw FormatError(path + ": bad magic at byte offset 0 (expected PVW1)");
  }
  const std::size_t n = read_le<std::uint32_t>(in, path);
  const std::size_t dx = read_le<std::uint32_t>(in, path);
  const std::size_t dy = read_le<std::uint32_t>(in, path);
  if (dx == 0 || dy == 0) throw FormatError(path + ": zero view dimension in header");
  const auto file_size = std::filesystem::file_size(path);
  const std::uintmax_t expected = 16 + (dx + dy) * n * sizeof(double) + n;
  if (file_size != expected) {
    throw FormatError(path + ": size " + std::to_string(file_size) +
                      " bytes inconsistent with header (expected " + std::to_string(expected) +
                      ")");
  }
  PairedDataset out;
  out.x = read_column_major(in, dx, n, path);
  out.y = read_column_major(in, dy, n, path);
  out.splits.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto tag = read_le<std::uint8_t>(in, path);
    if (tag > 2) {
      throw FormatError(path + ": invalid split tag at byte offset " +
                        std::to_string(expected - n + i));
    }
    out.splits.push_back(static_cast<Split>(tag));
  }
  return out;
}

PairedDataset synth_shared_latent(const SharedLatentParams& p) {
  const std::size_t n = p.n + p.n_validation + p.n_test;
  if (p.n == 0) throw ParameterError("synthetic data needs n >= 1 training columns");
  if (p.dim_x == 0 || p.dim_y == 0) throw ParameterError("view dims must be positive");
  if (p.latent_dim > std::min(p.dim_x, p.dim_y)) {
    throw ParameterError("latent_dim exceeds a view dimension");
  }
  if (p.spectrum.size() != p.latent_dim) {
    throw ParameterError("spectrum must list one correlation per latent dimension");
  }
  for (double rho : p.spectrum)
    if (!(rho >= 0.0 && rho <= 1.0)) throw ParameterError("spectrum entries must lie in [0, 1]");
  if (!(p.noise >= 0.0) || !std::isfinite(p.noise)) throw ParameterError("noise must be >= 0");

  Rng rng(p.seed);
  Matrix u(p.dim_x, n);
  Matrix w(p.dim_y, n);
  for (std::size_t i = 0; i < p.latent_dim; ++i) {
    const double a = std::sqrt(p.spectrum[i]);
    const double b = std::sqrt(1.0 - p.spectrum[i]);
    for (std::size_t s = 0; s < n; ++s) {
      const double shared = rng.gaussian();
      u(i, s) = a * shared + b * rng.gaussian();
      w(i, s) = a * shared + b * rng.gaussian();
    }
  }
  for (std::size_t i = p.latent_dim; i < p.dim_x; ++i)
    for (std::size_t s = 0; s < n; ++s) u(i, s) = p.noise * rng.gaussian();
  for (std::size_t i = p.latent_dim; i < p.dim_y; ++i)
    for (std::size_t s = 0; s < n; ++s) w(i, s) = p.noise * rng.gaussian();

  PairedDataset out;
  out.x = matmul(random_orthogonal(rng, p.dim_x), u);
  out.y = matmul(random_orthogonal(rng, p.dim_y), w);
  out.splits.assign(p.n, Split::kTrain);
  out.splits.insert(out.splits.end(), p.n_validation, Split::kValidation);
  out.splits.insert(out.splits.end(), p.n_test, Split::kTest);
  return out;
}

InputTransform standardize(PairedDataset& data, bool unit_variance) {
  data.validate();
  const auto train = data.indices(Split::kTrain);
  if (train.empty()) throw ParameterError("standardize: training split is empty");
  InputTransform t;
  auto fit = [&](const Matrix& m, Vector& shift, Vector& scale) {
    const Moments mo = row_stats(gather_columns(m, train));
    shift = mo.means;
    scale.assign(m.rows(), 1.0);
    if (unit_variance) {
      for (std::size_t r = 0; r < m.rows(); ++r)
        if (mo.variances[r] > 1e-12) scale[r] = 1.0 / std::sqrt(mo.variances[r]);
    }
  };
  fit(data.x, t.shift_x, t.scale_x);
  fit(data.y, t.shift_y, t.scale_y);
  apply_transform(t, data.x, data.y);
  return t;
}

void apply_transform(const InputTransform& transform, Matrix& x, Matrix& y) {
  apply_rows(x, transform.shift_x, transform.scale_x);
  apply_rows(y, transform.shift_y, transform.scale_y);
}

std::vector<std::vector<std::size_t>> load_ground_truth(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open ground-truth file " + path);
  std::vector<std::vector<std::size_t>> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    long long q = 0;
    if (!(fields >> q)) continue;
    if (q < 0) throw FormatError(path + ":" + std::to_string(line_no) + ": negative query index");
    if (static_cast<std::size_t>(q) >= out.size()) out.resize(static_cast<std::size_t>(q) + 1);
    long long g = 0;
    while (fields >> g) {
      if (g < 0) throw FormatError(path + ":" + std::to_string(line_no) + ": negative id");
      out[static_cast<std::size_t>(q)].push_back(static_cast<std::size_t>(g));
    }
    if (!fields.eof()) {
      throw FormatError(path + ":" + std::to_string(line_no) + ": malformed entry");
    }
  }
  return out;
}

}  // namespace twoway
