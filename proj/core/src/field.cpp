#include "tcmap/field.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tcmap {

namespace {

constexpr std::uint64_t kHashPrimes[kMaxDims] = {1ULL, 2654435761ULL, 805459861ULL};

double activate(Activation a, double z) {
  switch (a) {
    case Activation::Softplus: return softplus(z);
    case Activation::Relu: return z > 0.0 ? z : 0.0;
    case Activation::Identity: return z;
    case Activation::Tanh: return std::tanh(z);
  }
  return z;
}

double activate_grad(Activation a, double z) {
  switch (a) {
    case Activation::Softplus: return sigmoid(z);
    case Activation::Relu: return z > 0.0 ? 1.0 : 0.0;
    case Activation::Identity: return 1.0;
    case Activation::Tanh: {
      double t = std::tanh(z);
      return 1.0 - t * t;
    }
  }
  return 1.0;
}

}  // namespace

Activation activation_from_string(const std::string& name) {
  if (name == "softplus") return Activation::Softplus;
  if (name == "relu") return Activation::Relu;
  if (name == "identity") return Activation::Identity;
  if (name == "tanh") return Activation::Tanh;
  throw std::invalid_argument("unknown activation: " + name);
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Softplus: return "softplus";
    case Activation::Relu: return "relu";
    case Activation::Identity: return "identity";
    case Activation::Tanh: return "tanh";
  }
  return "softplus";
}

std::size_t FieldModel::MlpDims::param_count() const {
  std::size_t n = static_cast<std::size_t>(width) * in + width;
  for (int l = 1; l < hidden; ++l) n += static_cast<std::size_t>(width) * width + width;
  n += static_cast<std::size_t>(out) * width + out;
  return n;
}

FieldModel::FieldModel(FieldConfig config, std::uint64_t seed) : config_(config) {
  if (config_.dims < 1 || config_.dims > kMaxDims)
    throw std::invalid_argument("field: dims must be in [1,3]");
  if (config_.levels < 1) throw std::invalid_argument("field: levels must be >= 1");
  if (config_.base_resolution < 2)
    throw std::invalid_argument("field: base resolution must be >= 2");
  if (config_.growth <= 1.0 && config_.levels > 1)
    throw std::invalid_argument("field: growth must be > 1 for multi-level grids");
  if (config_.features_per_level < 1)
    throw std::invalid_argument("field: features_per_level must be >= 1");
  if (config_.encoding_bins < 2) throw std::invalid_argument("field: encoding_bins must be >= 2");
  if (config_.decoder.hidden_layers < 1 || config_.decoder.hidden_width < 1 ||
      config_.decoder.latent_dim < 1)
    throw std::invalid_argument("field: malformed decoder spec");
  if (config_.color_channels != 3) throw std::invalid_argument("field: color channels must be 3");
  for (int d = 0; d < config_.dims; ++d)
    if (!(config_.domain.extent(d) > 0.0))
      throw std::invalid_argument("field: degenerate domain bounds");

  auto layout = std::make_shared<ParamLayout>();
  std::size_t offset = 0;
  int prev_nodes = 0;
  for (int l = 0; l < config_.levels; ++l) {
    GridLevel level;
    level.nodes = static_cast<int>(std::lround(config_.base_resolution * std::pow(config_.growth, l)));
    if (level.nodes < 2) throw std::invalid_argument("field: level resolution must be >= 2");
    if (level.nodes <= prev_nodes)
      throw std::invalid_argument("field: level resolutions must strictly increase");
    prev_nodes = level.nodes;
    std::size_t dense = 1;
    for (int d = 0; d < config_.dims; ++d) dense *= static_cast<std::size_t>(level.nodes);
    level.hashed = config_.hash_enabled && dense > config_.hash_table_size;
    level.entries = level.hashed ? config_.hash_table_size : dense;
    level.param_begin = offset;
    std::size_t count = level.entries * static_cast<std::size_t>(config_.features_per_level);
    layout->grid_levels.push_back({offset, offset + count});
    offset += count;
    grid_.push_back(level);
  }
  layout->grid = {0, offset};

  geo_dims_ = {config_.encoding_dim() + config_.feature_dim(), config_.decoder.hidden_width,
               config_.decoder.hidden_layers, config_.decoder.latent_dim + 1};
  col_dims_ = {config_.encoding_dim() + config_.decoder.latent_dim, config_.decoder.hidden_width,
               config_.decoder.hidden_layers, config_.color_channels};

  layout->geometry = {offset, offset + geo_dims_.param_count()};
  offset = layout->geometry.end;
  layout->color = {offset, offset + col_dims_.param_count()};
  offset = layout->color.end;
  layout->total = offset;
  layout_ = std::move(layout);

  params_.layout = layout_;
  params_.values.assign(layout_->total, 0.0);

  Rng rng(mix_seed(seed, 0x6d6f64656cULL));
  std::uniform_real_distribution<double> grid_init(-1e-4, 1e-4);
  for (std::size_t i = layout_->grid.begin; i < layout_->grid.end; ++i)
    params_.values[i] = grid_init(rng);

  auto init_mlp = [&](const MlpDims& dims, std::size_t begin) {
    std::size_t off = begin;
    int in = dims.in;
    for (int l = 0; l <= dims.hidden; ++l) {
      int out = (l == dims.hidden) ? dims.out : dims.width;
      double bound = std::sqrt(6.0 / (in + out));
      std::uniform_real_distribution<double> w(-bound, bound);
      for (int i = 0; i < out * in; ++i) params_.values[off++] = w(rng);
      off += out;  // biases stay zero
      in = dims.width;
    }
  };
  init_mlp(geo_dims_, layout_->geometry.begin);
  init_mlp(col_dims_, layout_->color.begin);
}

void FieldModel::set_params(const ParamVector& p) {
  if (p.values.size() != layout_->total)
    throw std::invalid_argument("set_params: length mismatch");
  params_.values = p.values;
}

void FieldModel::encode(const Vec& x, std::span<double> out) const {
  const int bins = config_.encoding_bins;
  const double sig = 1.0 / bins;
  const double inv2s2 = 1.0 / (2.0 * sig * sig);
  Vec u = config_.domain.normalize(x, config_.dims);
  for (int d = 0; d < config_.dims; ++d) {
    double t = u[d];
    for (int j = 0; j < bins; ++j) {
      double c = (j + 0.5) / bins;
      double r = t - c;
      out[static_cast<std::size_t>(d) * bins + j] = std::exp(-r * r * inv2s2);
    }
  }
}

std::size_t FieldModel::node_param_index(int level,
                                         const std::array<int, kMaxDims>& coords) const {
  const GridLevel& g = grid_[level];
  std::size_t entry;
  if (g.hashed) {
    std::uint64_t h = 0;
    for (int d = 0; d < config_.dims; ++d)
      h ^= static_cast<std::uint64_t>(coords[d]) * kHashPrimes[d];
    entry = h % g.entries;
  } else {
    entry = static_cast<std::size_t>(coords[0]);
    for (int d = 1; d < config_.dims; ++d)
      entry = entry * static_cast<std::size_t>(g.nodes) + static_cast<std::size_t>(coords[d]);
  }
  return g.param_begin + entry * static_cast<std::size_t>(config_.features_per_level);
}

void FieldModel::build_stencil(const Vec& x, InterpStencil& stencil) const {
  const int D = config_.dims;
  const int corners = 1 << D;
  const std::size_t n = static_cast<std::size_t>(config_.levels) * corners;
  stencil.index.resize(n);
  stencil.weight.resize(n);
  Vec u = config_.domain.normalize(x, D);
  std::size_t k = 0;
  for (int l = 0; l < config_.levels; ++l) {
    const GridLevel& g = grid_[l];
    std::array<int, kMaxDims> base{0, 0, 0};
    std::array<double, kMaxDims> frac{0.0, 0.0, 0.0};
    for (int d = 0; d < D; ++d) {
      double t = u[d] * (g.nodes - 1);
      int i0 = std::min(static_cast<int>(t), g.nodes - 2);
      base[d] = i0;
      frac[d] = t - i0;
    }
    for (int c = 0; c < corners; ++c) {
      std::array<int, kMaxDims> coords = base;
      double w = 1.0;
      for (int d = 0; d < D; ++d) {
        if (c & (1 << d)) {
          coords[d] += 1;
          w *= frac[d];
        } else {
          w *= 1.0 - frac[d];
        }
      }
      stencil.index[k] = node_param_index(l, coords);
      stencil.weight[k] = w;
      ++k;
    }
  }
}

void FieldModel::gather_features(const InterpStencil& stencil, std::span<double> out) const {
  const int F = config_.features_per_level;
  const int corners = 1 << config_.dims;
  const double* v = params_.values.data();
  std::size_t k = 0;
  for (int l = 0; l < config_.levels; ++l) {
    for (int f = 0; f < F; ++f) out[static_cast<std::size_t>(l) * F + f] = 0.0;
    for (int c = 0; c < corners; ++c, ++k) {
      const double w = stencil.weight[k];
      const double* node = v + stencil.index[k];
      for (int f = 0; f < F; ++f) out[static_cast<std::size_t>(l) * F + f] += w * node[f];
    }
  }
}

void FieldModel::scatter_features(const InterpStencil& stencil, std::span<const double> dfeat,
                                  GradientVector& grad) const {
  const int F = config_.features_per_level;
  const int corners = 1 << config_.dims;
  std::size_t k = 0;
  for (int l = 0; l < config_.levels; ++l) {
    for (int c = 0; c < corners; ++c, ++k) {
      const double w = stencil.weight[k];
      double* g = grad.values.data() + stencil.index[k];
      for (int f = 0; f < F; ++f) g[f] += w * dfeat[static_cast<std::size_t>(l) * F + f];
    }
  }
}

std::vector<double> FieldModel::interpolate(const Vec& x) const {
  InterpStencil st;
  build_stencil(x, st);
  std::vector<double> out(static_cast<std::size_t>(config_.feature_dim()));
  gather_features(st, out);
  return out;
}

void FieldModel::mlp_forward(const MlpDims& dims, std::size_t param_begin,
                             std::span<const double> input, MlpCache& cache) const {
  const double* p = params_.values.data();
  std::size_t off = param_begin;
  const double* cur = input.data();
  int in = dims.in;
  for (int l = 0; l < dims.hidden; ++l) {
    auto& pre = cache.pre[l];
    auto& post = cache.post[l];
    for (int i = 0; i < dims.width; ++i) {
      const double* row = p + off + static_cast<std::size_t>(i) * in;
      double z = 0.0;
      for (int j = 0; j < in; ++j) z += row[j] * cur[j];
      pre[i] = z;
    }
    off += static_cast<std::size_t>(dims.width) * in;
    for (int i = 0; i < dims.width; ++i) {
      pre[i] += p[off + i];
      post[i] = activate(config_.decoder.activation, pre[i]);
    }
    off += dims.width;
    cur = post.data();
    in = dims.width;
  }
  for (int i = 0; i < dims.out; ++i) {
    const double* row = p + off + static_cast<std::size_t>(i) * in;
    double z = 0.0;
    for (int j = 0; j < in; ++j) z += row[j] * cur[j];
    cache.out[i] = z;
  }
  off += static_cast<std::size_t>(dims.out) * in;
  for (int i = 0; i < dims.out; ++i) cache.out[i] += p[off + i];
}

void FieldModel::mlp_backward(const MlpDims& dims, std::size_t param_begin,
                              std::span<const double> input, const MlpCache& cache,
                              std::span<const double> dout, std::span<double> dinput,
                              GradientVector& grad, BackwardScratch& scratch) const {
  const double* p = params_.values.data();
  double* g = grad.values.data();

  // Walk layer offsets forward once, then apply the chain rule in reverse.
  auto& w_off = scratch.w_off;
  auto& b_off = scratch.b_off;
  w_off.resize(dims.hidden + 1);
  b_off.resize(dims.hidden + 1);
  std::size_t off = param_begin;
  int in = dims.in;
  for (int l = 0; l <= dims.hidden; ++l) {
    int out = (l == dims.hidden) ? dims.out : dims.width;
    w_off[l] = off;
    off += static_cast<std::size_t>(out) * in;
    b_off[l] = off;
    off += out;
    in = dims.width;
  }

  auto& delta = scratch.delta;
  delta.assign(dout.begin(), dout.end());
  auto& dprev = scratch.dprev;
  dprev.assign(dims.width, 0.0);
  for (int l = dims.hidden; l >= 0; --l) {
    const int out_n = (l == dims.hidden) ? dims.out : dims.width;
    const int in_n = (l == 0) ? dims.in : dims.width;
    const double* below = (l == 0) ? input.data() : cache.post[l - 1].data();

    if (l < dims.hidden) {
      // delta currently holds d/d(post); convert to d/d(pre).
      for (int i = 0; i < out_n; ++i)
        delta[i] *= activate_grad(config_.decoder.activation, cache.pre[l][i]);
    }
    for (int i = 0; i < out_n; ++i) {
      const double di = delta[i];
      double* grow = g + w_off[l] + static_cast<std::size_t>(i) * in_n;
      for (int j = 0; j < in_n; ++j) grow[j] += di * below[j];
      g[b_off[l] + i] += di;
    }
    if (l == 0) {
      for (int j = 0; j < in_n; ++j) {
        double acc = 0.0;
        for (int i = 0; i < out_n; ++i)
          acc += p[w_off[l] + static_cast<std::size_t>(i) * in_n + j] * delta[i];
        dinput[j] += acc;
      }
    } else {
      dprev.assign(in_n, 0.0);
      for (int i = 0; i < out_n; ++i) {
        const double di = delta[i];
        const double* row = p + w_off[l] + static_cast<std::size_t>(i) * in_n;
        for (int j = 0; j < in_n; ++j) dprev[j] += row[j] * di;
      }
      delta.assign(dprev.begin(), dprev.begin() + in_n);
    }
  }
}

void FieldModel::init_cache(PointCache& cache) const {
  const int H = config_.decoder.hidden_layers;
  auto init_mlp_cache = [&](MlpCache& c, int out) {
    c.pre.assign(H, std::vector<double>(config_.decoder.hidden_width, 0.0));
    c.post = c.pre;
    c.out.assign(out, 0.0);
  };
  cache.enc.assign(static_cast<std::size_t>(config_.encoding_dim()), 0.0);
  cache.feat.assign(static_cast<std::size_t>(config_.feature_dim()), 0.0);
  cache.geo_in.assign(cache.enc.size() + cache.feat.size(), 0.0);
  init_mlp_cache(cache.geo, config_.decoder.latent_dim + 1);
  cache.h.assign(static_cast<std::size_t>(config_.decoder.latent_dim), 0.0);
  cache.col_in.assign(cache.enc.size() + cache.h.size(), 0.0);
  init_mlp_cache(cache.col, config_.color_channels);
}

void FieldModel::decode_geometry(std::span<const double> enc, std::span<const double> feat,
                                 std::span<double> h_out, double& s_out) const {
  if (static_cast<int>(enc.size()) != config_.encoding_dim() ||
      static_cast<int>(feat.size()) != config_.feature_dim())
    throw std::invalid_argument("decode_geometry: input dimension mismatch");
  std::vector<double> input(enc.begin(), enc.end());
  input.insert(input.end(), feat.begin(), feat.end());
  MlpCache cache;
  cache.pre.assign(geo_dims_.hidden, std::vector<double>(geo_dims_.width, 0.0));
  cache.post = cache.pre;
  cache.out.assign(geo_dims_.out, 0.0);
  mlp_forward(geo_dims_, layout_->geometry.begin, input, cache);
  for (int i = 0; i < config_.decoder.latent_dim; ++i) h_out[i] = cache.out[i];
  s_out = cache.out[config_.decoder.latent_dim];
}

Color FieldModel::decode_color(std::span<const double> enc, std::span<const double> h) const {
  if (static_cast<int>(enc.size()) != config_.encoding_dim() ||
      static_cast<int>(h.size()) != config_.decoder.latent_dim)
    throw std::invalid_argument("decode_color: input dimension mismatch");
  std::vector<double> input(enc.begin(), enc.end());
  input.insert(input.end(), h.begin(), h.end());
  MlpCache cache;
  cache.pre.assign(col_dims_.hidden, std::vector<double>(col_dims_.width, 0.0));
  cache.post = cache.pre;
  cache.out.assign(col_dims_.out, 0.0);
  mlp_forward(col_dims_, layout_->color.begin, input, cache);
  Color c;
  for (int i = 0; i < config_.color_channels; ++i) c[i] = sigmoid(cache.out[i]);
  return c;
}

void FieldModel::forward_from_inputs(PointCache& cache) const {
  mlp_forward(geo_dims_, layout_->geometry.begin, cache.geo_in, cache.geo);
  for (int i = 0; i < config_.decoder.latent_dim; ++i) cache.h[i] = cache.geo.out[i];
  cache.s = cache.geo.out[config_.decoder.latent_dim];

  std::copy(cache.enc.begin(), cache.enc.end(), cache.col_in.begin());
  std::copy(cache.h.begin(), cache.h.end(), cache.col_in.begin() + cache.enc.size());
  mlp_forward(col_dims_, layout_->color.begin, cache.col_in, cache.col);
  for (int i = 0; i < config_.color_channels; ++i) cache.c[i] = sigmoid(cache.col.out[i]);
}

void FieldModel::forward_point(const Vec& x, PointCache& cache) const {
  if (cache.enc.size() != static_cast<std::size_t>(config_.encoding_dim())) init_cache(cache);
  encode(x, cache.enc);
  build_stencil(x, cache.stencil);
  gather_features(cache.stencil, cache.feat);
  std::copy(cache.enc.begin(), cache.enc.end(), cache.geo_in.begin());
  std::copy(cache.feat.begin(), cache.feat.end(), cache.geo_in.begin() + cache.enc.size());
  forward_from_inputs(cache);
}

PointOutput FieldModel::eval_point(const Vec& x) const {
  PointCache cache;
  forward_point(x, cache);
  return {cache.s, cache.c};
}

void FieldModel::backward_point(const PointCache& cache, double ds, const double* dc,
                                GradientVector& grad, BackwardScratch& scratch) const {
  const int latent = config_.decoder.latent_dim;
  auto& dgeo_out = scratch.dgeo_out;
  dgeo_out.assign(static_cast<std::size_t>(latent) + 1, 0.0);
  dgeo_out[latent] = ds;

  if (dc != nullptr) {
    auto& dcol_out = scratch.dcol_out;
    dcol_out.resize(static_cast<std::size_t>(config_.color_channels));
    bool any = false;
    for (int i = 0; i < config_.color_channels; ++i) {
      dcol_out[i] = dc[i] * cache.c[i] * (1.0 - cache.c[i]);
      any = any || dcol_out[i] != 0.0;
    }
    if (any) {
      auto& dcol_in = scratch.dcol_in;
      dcol_in.assign(cache.col_in.size(), 0.0);
      mlp_backward(col_dims_, layout_->color.begin, cache.col_in, cache.col, dcol_out, dcol_in,
                   grad, scratch);
      for (int i = 0; i < latent; ++i) dgeo_out[i] = dcol_in[cache.enc.size() + i];
    }
  }

  auto& dgeo_in = scratch.dgeo_in;
  dgeo_in.assign(cache.geo_in.size(), 0.0);
  mlp_backward(geo_dims_, layout_->geometry.begin, cache.geo_in, cache.geo, dgeo_out, dgeo_in,
               grad, scratch);
  scatter_features(cache.stencil,
                   std::span<const double>(dgeo_in.data() + cache.enc.size(), cache.feat.size()),
                   grad);
}

void FieldModel::backward_point(const PointCache& cache, double ds, const double* dc,
                                GradientVector& grad) const {
  BackwardScratch scratch;
  backward_point(cache, ds, dc, grad, scratch);
}

}  // namespace tcmap
