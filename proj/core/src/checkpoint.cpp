#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "twoway/error.hpp"
#include "twoway/log.hpp"
#include "twoway/network.hpp"

namespace twoway {
namespace {

constexpr char kMagic[4] = {'T', 'W', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  template <class T>
  void put(T value) {
    out_.write(reinterpret_cast<const char*>(&value), sizeof(T));
  }
  void put_doubles(std::span<const double> values) {
    out_.write(reinterpret_cast<const char*>(values.data()),
               static_cast<std::streamsize>(values.size() * sizeof(double)));
  }
  void put_vector(const Vector& v) {
    put<std::uint64_t>(v.size());
    put_doubles(v);
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  template <class T>
  T get(const char* what) {
    T value{};
    in_.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in_) throw FormatError(std::string("checkpoint truncated while reading ") + what);
    return value;
  }
  void get_doubles(std::span<double> values, const char* what) {
    in_.read(reinterpret_cast<char*>(values.data()),
             static_cast<std::streamsize>(values.size() * sizeof(double)));
    if (!in_) throw FormatError(std::string("checkpoint truncated while reading ") + what);
  }
  Vector get_vector(const char* what) {
    const auto n = get<std::uint64_t>(what);
    if (n > (std::uint64_t{1} << 32)) throw FormatError(std::string("implausible length for ") + what);
    Vector v(n);
    get_doubles(v, what);
    return v;
  }

 private:
  std::istream& in_;
};

template <class Enum>
Enum enum_from(std::uint8_t raw, std::uint8_t max, const char* what) {
  if (raw > max) throw FormatError(std::string("invalid ") + what + " code in checkpoint");
  return static_cast<Enum>(raw);
}

}  // namespace

void save_checkpoint(std::ostream& out, const TwoWayModel& model, const InputTransform& transform) {
  Writer w(out);
  const ModelConfig& cfg = model.config();
  out.write(kMagic, 4);
  w.put<std::uint32_t>(kVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(model.depth()));
  for (std::size_t d : cfg.dims) w.put<std::uint64_t>(d);
  for (std::size_t i = 1; i <= model.depth(); ++i) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(cfg.blocks_for_layer(i)));
  }
  w.put<double>(cfg.leakiness);
  w.put<double>(cfg.dropout_p);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(cfg.dropout));
  w.put<std::uint8_t>(static_cast<std::uint8_t>(cfg.batch_norm));
  w.put<std::uint8_t>(static_cast<std::uint8_t>(cfg.mid_tap));
  w.put<std::uint8_t>(0);

  auto& mutable_model = const_cast<TwoWayModel&>(model);
  const auto registry = parameter_registry(mutable_model);
  std::uint64_t total = 0;
  for (const auto& view : registry) total += view.values.size();
  w.put<std::uint64_t>(total);
  for (const auto& view : registry) w.put_doubles(view.values);

  if (model.has_batch_norm()) {
    for (Direction channel : {Direction::kForward, Direction::kBackward}) {
      for (std::size_t i = 1; i < model.depth(); ++i) {
        const BatchNormParams& bn = model.batch_norm(channel, i);
        w.put_doubles(bn.running_mean);
        w.put_doubles(bn.running_var);
        w.put<std::uint64_t>(bn.updates);
        w.put<double>(bn.momentum);
        w.put<double>(bn.epsilon);
      }
    }
  }
  w.put_vector(transform.shift_x);
  w.put_vector(transform.scale_x);
  w.put_vector(transform.shift_y);
  w.put_vector(transform.scale_y);
  if (!out) throw FormatError("failed to write checkpoint");
}

void save_checkpoint(const std::string& path, const TwoWayModel& model,
                     const InputTransform& transform) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open checkpoint for writing: " + path);
  save_checkpoint(out, model, transform);
}

Checkpoint load_checkpoint(std::istream& in) {
  Reader r(in);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw FormatError("not a checkpoint (bad magic)");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto k = r.get<std::uint32_t>("depth");
  if (k == 0 || k > 1024) throw FormatError("implausible depth in checkpoint");
  ModelConfig cfg;
  for (std::uint32_t i = 0; i <= k; ++i) {
    const auto d = r.get<std::uint64_t>("dims");
    if (d == 0 || d > (std::uint64_t{1} << 28)) throw FormatError("implausible dimension");
    cfg.dims.push_back(d);
  }
  bool any_blocks = false;
  for (std::uint32_t i = 0; i < k; ++i) {
    cfg.blocks.push_back(r.get<std::uint32_t>("blocks"));
    any_blocks = any_blocks || cfg.blocks.back() != 1;
  }
  if (!any_blocks) cfg.blocks.clear();
  cfg.leakiness = r.get<double>("leakiness");
  cfg.dropout_p = r.get<double>("dropout_p");
  cfg.dropout = enum_from<DropoutKind>(r.get<std::uint8_t>("dropout"), 2, "dropout");
  cfg.batch_norm = enum_from<BnPlacement>(r.get<std::uint8_t>("batch norm"), 2, "batch norm");
  cfg.mid_tap = enum_from<MidTap>(r.get<std::uint8_t>("mid tap"), 1, "mid tap");
  r.get<std::uint8_t>("padding");

  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint holds an invalid model: ") + e.what());
  }
  // Parameters are overwritten below; the initial values do not matter.
  Rng rng(0);
  TwoWayModel model = [&] {
    auto previous = log::set_sink([](std::string_view, std::string_view) {});
    TwoWayModel m = TwoWayModel::create(cfg, rng);
    log::set_sink(previous);
    return m;
  }();

  const auto total = r.get<std::uint64_t>("parameter count");
  auto registry = parameter_registry(model);
  std::uint64_t expected = 0;
  for (const auto& view : registry) expected += view.values.size();
  if (total != expected) {
    throw FormatError("checkpoint parameter count " + std::to_string(total) +
                      " does not match its architecture (" + std::to_string(expected) + ")");
  }
  for (auto& view : registry) r.get_doubles(view.values, view.name.c_str());

  if (model.has_batch_norm()) {
    for (Direction channel : {Direction::kForward, Direction::kBackward}) {
      for (std::size_t i = 1; i < model.depth(); ++i) {
        BatchNormParams& bn = model.batch_norm(channel, i);
        r.get_doubles(bn.running_mean, "running mean");
        r.get_doubles(bn.running_var, "running variance");
        bn.updates = r.get<std::uint64_t>("update count");
        bn.momentum = r.get<double>("momentum");
        bn.epsilon = r.get<double>("epsilon");
      }
    }
  }
  Checkpoint out{std::move(model), {}};
  out.input_transform.shift_x = r.get_vector("input transform");
  out.input_transform.scale_x = r.get_vector("input transform");
  out.input_transform.shift_y = r.get_vector("input transform");
  out.input_transform.scale_y = r.get_vector("input transform");
  return out;
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint: " + path);
  return load_checkpoint(in);
}

}  // namespace twoway
