#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "maskvo/geometry.hpp"
#include "maskvo/rng.hpp"
#include "maskvo/tensor.hpp"
#include "maskvo/vision.hpp"

namespace maskvo::learn {

/// Relative motion as a minimal 6-vector: translation, then so(3) log
/// coordinates (radians, norm < pi).
struct Pose6Dof {
  geometry::Vec3 translation = geometry::Vec3::Zero();
  geometry::Vec3 rotation = geometry::Vec3::Zero();
};

/// Throws DegenerateRotation when the rotation angle is within 1e-6 of pi,
/// where the log map loses its sign.
Pose6Dof pose6_from_pose(const geometry::Pose& pose);
geometry::Pose pose_from_pose6(const Pose6Dof& p);

/// Four 3x3 stride-2 convolutions with ReLU, channel plan 2 -> 8 -> 16 -> 32
/// -> channels; total downsampling 16x.
struct FeatureNetParams {
  std::vector<Tensor> weights;  // four {Cout, Cin, 3, 3} tensors
  std::vector<Tensor> biases;   // four {Cout} tensors
  int channels = 32;
};

/// Single-head self-attention projections over tokens of dimension channels.
struct AttentionParams {
  Tensor w_q, w_k, w_v;  // {d, d}
  int dim = 32;
};

/// One long-short-term recurrent cell (gate order: input, forget, output,
/// cell) plus a linear 6-dof head.
struct PoseNetParams {
  static constexpr int kHidden = 64;
  Tensor w_input;   // {C, 4 * kHidden}
  Tensor w_hidden;  // {kHidden, 4 * kHidden}
  Tensor b_gates;   // {4 * kHidden}
  Tensor w_head;    // {kHidden, 6}
  Tensor b_head;    // {6}
};

struct ModelParams {
  FeatureNetParams feature;
  AttentionParams attention;
  PoseNetParams pose;
  int channels = 32;

  /// Trainable tensors in fixed declaration order; this order defines the
  /// optimizer state layout and the checkpoint payload.
  std::vector<Tensor> parameters() const;
  static std::vector<std::string> parameter_names();
};

/// Glorot-uniform weights (+-sqrt(6 / (fan_in + fan_out))), zero biases, drawn
/// in declaration order so a seed fixes the whole model.
ModelParams init_model(int channels, Rng& rng);

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int epochs = 100;
  int window_size = 4;
  double keep_fraction = 0.51;
  int channels = 32;
  int image_downscale = 1;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

/// Block-mean downscale by an integer factor (trailing remainder rows and
/// columns are cropped).
vision::Image downscale(const vision::Image& img, int factor);

/// Scales both images to [0,1], zero-pads to multiples of 16, stacks them as
/// two channels and runs the conv stack; output is {C, ceil(H/16), ceil(W/16)}.
Tensor featurenet_forward(const FeatureNetParams& params, const vision::Image& a,
                          const vision::Image& b);

struct AttentionOutput {
  Tensor attended;  // {T, C} re-weighted tokens
  Tensor scores;    // {T} attention received per token; sums to 1
};

/// Tokens X ({M*N, C}) from spatial flattening; A = softmax(X Wq (X Wk)^T /
/// sqrt(d)); attended = A (X Wv); scores_j = mean_i A_ij.
AttentionOutput attention_forward(const AttentionParams& params, const Tensor& features);

struct PoseNetOutput {
  std::vector<Tensor> raw;      // one {6} tensor per step, differentiable
  std::vector<Pose6Dof> poses;  // decoded copies of raw
};

/// Recurrent state starts at zero for each window; the head emits
/// translation-first 6-dof rows, one per pooled input vector.
PoseNetOutput posenet_forward(const PoseNetParams& params,
                              const std::vector<Tensor>& window_features);

/// Mean over all 6*W components of the squared gap between predictions and
/// the motion proxies (converted through the so(3) log).
Tensor consistency_loss(const std::vector<Tensor>& pred,
                        const std::vector<geometry::Pose>& proxies);

struct TrainingWindow {
  std::vector<vision::Image> frames;    // window_size + 1 consecutive frames
  std::vector<geometry::Pose> proxies;  // window_size inertial relative motions
};

struct TrainResult {
  ModelParams model;
  std::vector<double> loss_history;  // mean window loss per epoch
};

/// Adam over per-window losses, one window per step, deterministic for a
/// fixed (seed, data, config). Throws TrainingDiverged when the loss leaves
/// the finite range, naming the last finite epoch.
TrainResult train(const TrainConfig& config, const std::vector<TrainingWindow>& windows);

/// Keeps the ceil(rho * rows * cols) highest-scoring tokens as true blocks;
/// ties broken toward the lower flat index.
vision::BinaryMask extract_mask(const Tensor& scores, double keep_fraction, int block_size,
                                int rows, int cols);

/// featurenet + attention + extract_mask for one frame pair.
vision::BinaryMask infer_mask(const ModelParams& model, const vision::Image& a,
                              const vision::Image& b, double keep_fraction, int block_size);

struct Checkpoint {
  ModelParams model;
  TrainConfig config;
};

/// Binary container: one JSON header line (shapes, config, seed) followed by
/// little-endian 64-bit floats in declaration order.
void save_checkpoint(const std::string& path, const ModelParams& model, const TrainConfig& config);
Checkpoint load_checkpoint(const std::string& path);

/// CSV with an `epoch,loss` header and one row per epoch (1-based).
void save_loss_history(const std::string& path, const std::vector<double>& history);
std::vector<double> load_loss_history(const std::string& path);

}  // namespace maskvo::learn
