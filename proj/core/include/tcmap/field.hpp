#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tcmap/common.hpp"
#include "tcmap/params.hpp"

namespace tcmap {

enum class Activation { Softplus, Relu, Identity, Tanh };

Activation activation_from_string(const std::string& name);
std::string to_string(Activation a);

struct DecoderSpec {
  int hidden_width = 32;
  int hidden_layers = 1;
  Activation activation = Activation::Softplus;
  int latent_dim = 8;
};

struct FieldConfig {
  int dims = 2;
  int levels = 4;
  int base_resolution = 8;  // grid nodes per axis at the coarsest level
  double growth = 2.0;
  int features_per_level = 2;
  int encoding_bins = 16;
  DecoderSpec decoder;
  int color_channels = 3;
  Aabb domain;
  // Optional spatial-hash indexing for levels whose dense node count exceeds
  // the table size. Off by default: dense storage, no collisions.
  bool hash_enabled = false;
  std::size_t hash_table_size = 512;

  int encoding_dim() const { return dims * encoding_bins; }
  int feature_dim() const { return levels * features_per_level; }
};

// Dense flat storage sizes and index helpers for one resolution level.
struct GridLevel {
  int nodes = 0;               // nodes per axis
  std::size_t entries = 0;     // stored nodes (or hash buckets)
  std::size_t param_begin = 0; // offset of feature 0 of entry 0
  bool hashed = false;
};

// Multilinear interpolation stencil: for each (level, corner) the parameter
// index of that node's first feature plus its interpolation weight.
struct InterpStencil {
  std::vector<std::size_t> index;
  std::vector<double> weight;
};

struct MlpCache {
  std::vector<std::vector<double>> pre;   // per hidden layer, pre-activation
  std::vector<std::vector<double>> post;  // per hidden layer, post-activation
  std::vector<double> out;
};

// Per-point forward cache; reusable across calls to avoid allocation.
struct PointCache {
  InterpStencil stencil;
  std::vector<double> enc;
  std::vector<double> feat;
  std::vector<double> geo_in;
  MlpCache geo;
  std::vector<double> h;
  double s = 0.0;
  std::vector<double> col_in;
  MlpCache col;
  Color c{0.0, 0.0, 0.0};
};

struct PointOutput {
  double s = 0.0;
  Color c{0.0, 0.0, 0.0};
};

// Reusable buffers for backward_point; avoids per-call allocation in the
// inner training loop.
struct BackwardScratch {
  std::vector<double> dgeo_out, dcol_out, dcol_in, dgeo_in, delta, dprev;
  std::vector<std::size_t> w_off, b_off;
};

// The neural implicit map: multi-resolution feature grid, one-blob positional
// encoding, geometry decoder (latent h + SDF value s) and color decoder.
// Evaluation is a pure function of (params, x); mutation of the parameter
// vector is single-writer.
class FieldModel {
 public:
  FieldModel(FieldConfig config, std::uint64_t seed);

  const FieldConfig& config() const { return config_; }
  const ParamLayout& layout() const { return *layout_; }
  std::shared_ptr<const ParamLayout> layout_ptr() const { return layout_; }
  const std::vector<GridLevel>& grid_levels() const { return grid_; }

  ParamVector& params() { return params_; }
  const ParamVector& params() const { return params_; }
  void set_params(const ParamVector& p);

  /// One-blob encoding of x (normalized into [0,1]^D); `out` has dims*bins entries.
  void encode(const Vec& x, std::span<double> out) const;

  /// Multilinear interpolation stencil at x (clamped into the domain box).
  void build_stencil(const Vec& x, InterpStencil& stencil) const;
  void gather_features(const InterpStencil& stencil, std::span<double> out) const;
  void scatter_features(const InterpStencil& stencil, std::span<const double> dfeat,
                        GradientVector& grad) const;

  /// Interpolated feature vector at x, concatenated across levels (L*F entries).
  std::vector<double> interpolate(const Vec& x) const;

  /// Geometry decode from explicit inputs: (h, s) = F_tau(enc, feat).
  void decode_geometry(std::span<const double> enc, std::span<const double> feat,
                       std::span<double> h_out, double& s_out) const;

  /// Color decode: c = F_phi(enc, h), mapped into [0,1] per channel.
  Color decode_color(std::span<const double> enc, std::span<const double> h) const;

  /// Full point evaluation (s, c) at a world point.
  PointOutput eval_point(const Vec& x) const;

  /// Forward pass at x with all intermediates cached for backward.
  void forward_point(const Vec& x, PointCache& cache) const;

  /// Decoder-only forward: requires cache.enc, cache.feat and cache.geo_in to
  /// be filled already (positions cached, parameters fresh).
  void forward_from_inputs(PointCache& cache) const;

  /// Accumulates d(loss)/d(params) given d(loss)/ds and d(loss)/dc at a
  /// cached point. `dc` may be null when only the SDF head is involved.
  void backward_point(const PointCache& cache, double ds, const double* dc, GradientVector& grad,
                      BackwardScratch& scratch) const;
  void backward_point(const PointCache& cache, double ds, const double* dc,
                      GradientVector& grad) const;

  void init_cache(PointCache& cache) const;

  // Node bookkeeping used by the smoothness term.
  std::size_t node_param_index(int level, const std::array<int, kMaxDims>& coords) const;

 private:
  struct MlpDims {
    int in = 0, width = 0, hidden = 1, out = 0;
    std::size_t param_count() const;
  };

  void mlp_forward(const MlpDims& dims, std::size_t param_begin,
                   std::span<const double> input, MlpCache& cache) const;
  void mlp_backward(const MlpDims& dims, std::size_t param_begin,
                    std::span<const double> input, const MlpCache& cache,
                    std::span<const double> dout, std::span<double> dinput,
                    GradientVector& grad, BackwardScratch& scratch) const;

  FieldConfig config_;
  std::shared_ptr<const ParamLayout> layout_;
  std::vector<GridLevel> grid_;
  ParamVector params_;
  MlpDims geo_dims_;
  MlpDims col_dims_;
};

}  // namespace tcmap
