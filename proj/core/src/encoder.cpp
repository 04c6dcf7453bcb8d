#include "vibspk/encoder.hpp"

#include <cmath>
#include <stdexcept>

namespace vibspk {

Vector stats_pooling(const Matrix& H) {
  if (H.rows() < 1) throw std::invalid_argument("stats_pooling: empty input");
  const Eigen::Index T = H.rows();
  const Eigen::Index F = H.cols();
  Vector pooled(2 * F);
  const Vector mean = H.colwise().mean();
  for (Eigen::Index f = 0; f < F; ++f) {
    const double var = (H.col(f).array() - mean(f)).square().sum() / double(T);
    pooled(f) = mean(f);
    pooled(F + f) = std::sqrt(var + kStdFloor * kStdFloor);
  }
  return pooled;
}

Matrix stats_pooling_backward(const Matrix& H, const Vector& mean,
                              const Vector& sdev, const Vector& d_pooled) {
  const Eigen::Index T = H.rows();
  const Eigen::Index F = H.cols();
  Matrix dH(T, F);
  for (Eigen::Index f = 0; f < F; ++f) {
    const double dm = d_pooled(f);
    const double ds = d_pooled(F + f);
    // d(sdev_f)/d(h_tf) = (h_tf - mean_f) / (T * sdev_f); the mean
    // dependence cancels in the population variance.
    dH.col(f) = (dm / double(T)) +
                (ds / (double(T) * sdev(f))) * (H.col(f).array() - mean(f));
  }
  return dH;
}

namespace {

inline Matrix apply_layer(const DenseLayer& layer, Activation act,
                          const Matrix& in) {
  Matrix z = (in * layer.W.transpose()).rowwise() + layer.b.transpose();
  if (act == Activation::Tanh) z = z.array().tanh();
  return z;
}

}  // namespace

Vector encoder_forward(const Matrix& frames, const EncoderParams& params,
                       EncoderCache* cache) {
  if (params.layers.empty())
    throw std::invalid_argument("encoder: no layers configured");
  if (frames.cols() != params.in_dim())
    throw std::invalid_argument(
        "encoder: feature dim does not match first layer input");
  if (!frames.allFinite())
    throw std::invalid_argument("encoder: non-finite input frames");

  Matrix a = frames;
  std::vector<Matrix> acts;
  acts.push_back(a);
  for (const auto& layer : params.layers) {
    if (layer.in_dim() != a.cols())
      throw std::invalid_argument("encoder: inconsistent layer shapes");
    a = apply_layer(layer, params.activation, a);
    acts.push_back(a);
  }

  const Eigen::Index F = a.cols();
  Vector pooled = stats_pooling(a);
  if (cache) {
    cache->activations = std::move(acts);
    cache->mean = pooled.head(F);
    cache->sdev = pooled.tail(F);
    cache->pooled = pooled;
  }
  return pooled;
}

EncoderGrads encoder_zero_grads(const EncoderParams& params) {
  EncoderGrads g;
  g.layers.reserve(params.layers.size());
  for (const auto& layer : params.layers) {
    g.layers.push_back({Matrix::Zero(layer.W.rows(), layer.W.cols()),
                        Vector::Zero(layer.b.size())});
  }
  return g;
}

void encoder_backward(const EncoderParams& params, const EncoderCache& cache,
                      const Vector& d_pooled, EncoderGrads& grads,
                      Matrix* d_frames) {
  const Matrix& H = cache.activations.back();
  Matrix da = stats_pooling_backward(H, cache.mean, cache.sdev, d_pooled);

  for (std::size_t k = params.layers.size(); k-- > 0;) {
    const DenseLayer& layer = params.layers[k];
    const Matrix& in = cache.activations[k];
    const Matrix& out = cache.activations[k + 1];
    // dz = da * act'(z); tanh' = 1 - out^2
    Matrix dz = (params.activation == Activation::Tanh)
                    ? (da.array() * (1.0 - out.array().square())).matrix()
                    : da;
    grads.layers[k].W.noalias() += dz.transpose() * in;
    grads.layers[k].b += dz.colwise().sum().transpose();
    if (k > 0 || d_frames) da = dz * layer.W;
    if (k == 0 && d_frames) *d_frames = da;
  }
}

}  // namespace vibspk
