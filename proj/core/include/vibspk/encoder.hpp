#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace vibspk {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Added inside the square root of std pooling (as floor^2) so a
// zero-variance dimension pools to exactly this value with a finite
// gradient.
inline constexpr double kStdFloor = 1e-6;

enum class Activation { Linear, Tanh };

// y = act(W x + b)
struct DenseLayer {
  Matrix W;
  Vector b;

  Eigen::Index in_dim() const { return W.cols(); }
  Eigen::Index out_dim() const { return W.rows(); }
};

// Frame-level dense stack followed by mean+std statistics pooling.
struct EncoderParams {
  std::vector<DenseLayer> layers;
  Activation activation = Activation::Tanh;

  Eigen::Index in_dim() const { return layers.front().in_dim(); }
  Eigen::Index frame_out_dim() const { return layers.back().out_dim(); }
  Eigen::Index pooled_dim() const { return 2 * frame_out_dim(); }
};

struct FeatureMatrix {
  Matrix frames;  // T x D
  std::string utterance_id;
  std::string speaker_id;  // empty when unlabeled
};

// Per-layer activations kept for the backward pass.
struct EncoderCache {
  std::vector<Matrix> activations;  // activations[0] = input frames, T x dim
  Vector mean;                      // F
  Vector sdev;                      // F, floored
  Vector pooled;                    // 2F
};

// (mean_1..mean_F, std_1..std_F); population std with variance floored
// by kStdFloor^2 inside the sqrt.
Vector stats_pooling(const Matrix& frame_outputs);

// d(pooled)/d(frame_outputs) contraction with an upstream gradient.
Matrix stats_pooling_backward(const Matrix& frame_outputs, const Vector& mean,
                              const Vector& sdev, const Vector& d_pooled);

Vector encoder_forward(const Matrix& frames, const EncoderParams& params,
                       EncoderCache* cache = nullptr);

struct EncoderGrads {
  std::vector<DenseLayer> layers;  // same shapes as params
};

EncoderGrads encoder_zero_grads(const EncoderParams& params);

// Accumulates parameter gradients into `grads`; optionally returns the
// gradient w.r.t. the input frames.
void encoder_backward(const EncoderParams& params, const EncoderCache& cache,
                      const Vector& d_pooled, EncoderGrads& grads,
                      Matrix* d_frames = nullptr);

}  // namespace vibspk
