#include "tcmap/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace tcmap {

namespace {

constexpr char kMagic[8] = {'T', 'C', 'M', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

}  // namespace

void save_checkpoint(const FieldModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
  out.write(kMagic, sizeof(kMagic));

  const FieldConfig& c = model.config();
  write_pod(out, static_cast<std::int32_t>(c.dims));
  write_pod(out, static_cast<std::int32_t>(c.levels));
  write_pod(out, static_cast<std::int32_t>(c.base_resolution));
  write_pod(out, c.growth);
  write_pod(out, static_cast<std::int32_t>(c.features_per_level));
  write_pod(out, static_cast<std::int32_t>(c.encoding_bins));
  write_pod(out, static_cast<std::int32_t>(c.decoder.hidden_width));
  write_pod(out, static_cast<std::int32_t>(c.decoder.hidden_layers));
  write_pod(out, static_cast<std::int32_t>(c.decoder.activation));
  write_pod(out, static_cast<std::int32_t>(c.decoder.latent_dim));
  write_pod(out, static_cast<std::int32_t>(c.color_channels));
  write_pod(out, c.domain.lo);
  write_pod(out, c.domain.hi);
  write_pod(out, static_cast<std::int32_t>(c.hash_enabled ? 1 : 0));
  write_pod(out, static_cast<std::uint64_t>(c.hash_table_size));

  const auto& v = model.params().values;
  write_pod(out, static_cast<std::uint64_t>(v.size()));
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
  if (!out) throw std::runtime_error("checkpoint: write failure " + path);
}

FieldModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);

  FieldConfig c;
  c.dims = read_pod<std::int32_t>(in);
  c.levels = read_pod<std::int32_t>(in);
  c.base_resolution = read_pod<std::int32_t>(in);
  c.growth = read_pod<double>(in);
  c.features_per_level = read_pod<std::int32_t>(in);
  c.encoding_bins = read_pod<std::int32_t>(in);
  c.decoder.hidden_width = read_pod<std::int32_t>(in);
  c.decoder.hidden_layers = read_pod<std::int32_t>(in);
  c.decoder.activation = static_cast<Activation>(read_pod<std::int32_t>(in));
  c.decoder.latent_dim = read_pod<std::int32_t>(in);
  c.color_channels = read_pod<std::int32_t>(in);
  c.domain.lo = read_pod<Vec>(in);
  c.domain.hi = read_pod<Vec>(in);
  c.hash_enabled = read_pod<std::int32_t>(in) != 0;
  c.hash_table_size = read_pod<std::uint64_t>(in);

  FieldModel model(c, 0);
  const std::uint64_t n = read_pod<std::uint64_t>(in);
  if (n != model.layout().total)
    throw std::runtime_error("checkpoint: parameter count mismatch in " + path);
  ParamVector p;
  p.layout = model.layout_ptr();
  p.values.resize(n);
  in.read(reinterpret_cast<char*>(p.values.data()),
          static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) throw std::runtime_error("checkpoint: truncated parameters in " + path);
  model.set_params(p);
  return model;
}

}  // namespace tcmap
