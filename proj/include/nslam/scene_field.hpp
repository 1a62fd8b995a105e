#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "nslam/encoding.hpp"

namespace nslam {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// One affine layer, weight stored (out x in) row-major.
struct Layer {
  RowMat weight;
  Eigen::VectorXd bias;

  int in_dim() const { return static_cast<int>(weight.cols()); }
  int out_dim() const { return static_cast<int>(weight.rows()); }
};

/// ReLU between layers, no activation after the last one.
struct MlpParams {
  std::vector<Layer> layers;

  static MlpParams create(int in_dim, int hidden_width, int hidden_layers, int out_dim,
                          std::mt19937_64& rng);
  int in_dim() const { return layers.front().in_dim(); }
  int out_dim() const { return layers.back().out_dim(); }
  int hidden_width() const { return layers.size() > 1 ? layers.front().out_dim() : 0; }
  MlpParams zeros_like() const;
};

struct FieldConfig {
  HashGridConfig grid;
  OneBlobConfig oneblob;
  int hidden_width = 32;
  int hidden_layers = 1;  // "2-layer" MLP: input -> hidden -> output
  int h_dim = 15;
  double sdf_bias_init = 0.1;  // +tr: untouched space starts as free space
  double grid_init_scale = 1e-4;
};

/// All learnable scene parameters: hash features, geometry and color decoders.
struct SceneParams {
  HashGridParams grid;
  MlpParams geo;    // [one-blob | grid] -> [sdf | h]
  MlpParams color;  // [one-blob | h] -> rgb logits
  SceneBounds bounds;
  OneBlobConfig oneblob;
  int h_dim = 15;

  static SceneParams create(const FieldConfig& cfg, const SceneBounds& bounds, std::mt19937_64& rng);

  /// Checks the decoder shapes against the encodings.
  void validate() const;

  /// Contiguous blocks of every learnable scalar, in a fixed order.
  std::vector<std::span<double>> blocks();
  std::vector<std::span<const double>> blocks() const;
  std::size_t num_params() const;
  /// FNV-1a over the raw bytes of every parameter.
  std::uint64_t checksum() const;
};

/// Gradient buffers shaped like SceneParams.
struct SceneGrads {
  std::vector<double> grid;
  MlpParams geo;
  MlpParams color;

  static SceneGrads zeros_like(const SceneParams& params);
  void set_zero();
  SceneGrads& operator+=(const SceneGrads& other);
  std::vector<std::span<double>> blocks();
  std::vector<std::span<const double>> blocks() const;
};

struct FieldOutput {
  double sdf = 0;
  Vec3 color = Vec3::Zero();
  Eigen::VectorXd h;
};

/// Cached forward intermediates for one batch.
struct FieldTape {
  std::size_t n = 0;
  std::vector<Vec3> u;             // normalized positions
  std::vector<RowMat> geo_acts;    // [0] = encoded input, then each layer output
  std::vector<RowMat> color_acts;  // [0] = [one-blob | h], then each layer output
  RowMat color;                    // sigmoid output, n x 3
};

struct FieldBatch {
  Eigen::VectorXd sdf;
  RowMat color;  // n x 3
  RowMat h;      // n x h_dim
};

/// Evaluates s, h = geo(one_blob(x), grid(x)); c = sigmoid(color(one_blob(x), h)).
/// Throws Errc::OutOfBounds for positions outside params.bounds. Each row is
/// computed by the same kernel, so results do not depend on the batch size.
FieldBatch field_forward(const SceneParams& params, std::span<const Vec3> xs,
                         FieldTape* tape = nullptr);
FieldOutput field_forward(const SceneParams& params, const Vec3& x);

/// SDF only (skips the color decoder); used for meshing.
void field_sdf(const SceneParams& params, std::span<const Vec3> xs, std::span<double> out);

struct BackwardRequest {
  SceneGrads* param_grads = nullptr;  // accumulated (+=)
  std::vector<Vec3>* x_grads = nullptr;  // overwritten, world units
};

/// Reverse pass for a recorded batch. Throws Errc::TapeMismatch when the
/// gradient sizes do not match the tape.
void field_backward(const SceneParams& params, const FieldTape& tape, std::span<const double> grad_sdf,
                    const RowMat& grad_color, const BackwardRequest& request);

/// Hash of the discrete state of a recorded pass: ReLU activation pattern and
/// the grid cell of every sample on every level. Two passes with equal
/// signatures lie on the same smooth piece of the field.
std::uint64_t field_signature(const SceneParams& params, const FieldTape& tape);

/// Checkpoint file: text header with configuration, then raw little-endian doubles.
void save_checkpoint(const SceneParams& params, const std::filesystem::path& path);
SceneParams load_checkpoint(const std::filesystem::path& path);

}  // namespace nslam
