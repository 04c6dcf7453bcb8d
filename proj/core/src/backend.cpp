#include "vibspk/backend.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <stdexcept>

namespace vibspk {

Vector fit_center(const EmbeddingSet& set) {
  if (set.size() < 1) throw std::invalid_argument("fit_center: empty set");
  return set.rows.colwise().mean().transpose();
}

Vector apply_center(const Vector& v, const Vector& mean) { return v - mean; }

Vector length_normalize(const Vector& v) {
  const double n = v.norm();
  if (n == 0.0)
    throw std::domain_error("length_normalize: zero vector has no direction");
  return v / n;
}

namespace {

struct SpeakerGroup {
  Eigen::Index count = 0;
  Vector sum;
};

std::map<std::string, SpeakerGroup> group_by_speaker(const EmbeddingSet& set) {
  if (set.speakers.size() != std::size_t(set.size()))
    throw std::invalid_argument("labels required for fitting");
  std::map<std::string, SpeakerGroup> groups;
  for (Eigen::Index i = 0; i < set.size(); ++i) {
    auto& g = groups[set.speakers[i]];
    if (g.count == 0) g.sum = Vector::Zero(set.dim());
    g.sum += set.rows.row(i).transpose();
    ++g.count;
  }
  return groups;
}

}  // namespace

Matrix fit_lda(const EmbeddingSet& set, Eigen::Index out_dim) {
  const auto groups = group_by_speaker(set);
  const Eigen::Index dim = set.dim();
  const Eigen::Index n_classes = Eigen::Index(groups.size());
  if (n_classes < 2)
    throw std::invalid_argument("fit_lda: need at least 2 speakers");
  if (out_dim < 1 || out_dim > std::min<Eigen::Index>(dim, n_classes - 1))
    throw std::invalid_argument("fit_lda: out_dim too large");

  const Vector global = set.rows.colwise().mean().transpose();
  Matrix sb = Matrix::Zero(dim, dim);
  Matrix sw = Matrix::Zero(dim, dim);
  for (const auto& [label, g] : groups) {
    const Vector mean = g.sum / double(g.count);
    const Vector d = mean - global;
    sb.noalias() += double(g.count) * (d * d.transpose());
  }
  for (Eigen::Index i = 0; i < set.size(); ++i) {
    const auto& g = groups.at(set.speakers[i]);
    const Vector d =
        set.rows.row(i).transpose() - g.sum / double(g.count);
    sw.noalias() += d * d.transpose();
  }
  sb /= double(set.size());
  sw /= double(set.size());
  sw += (1e-6 * sw.trace() / double(dim)) * Matrix::Identity(dim, dim);

  Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> solver(sb, sw);
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("fit_lda: eigendecomposition failed");
  // eigenvalues come back ascending; take the top out_dim, descending
  Matrix proj(dim, out_dim);
  for (Eigen::Index k = 0; k < out_dim; ++k)
    proj.col(k) = solver.eigenvectors().col(dim - 1 - k);
  return proj;
}

Vector PreprocessChain::apply(const Vector& v) const {
  Vector x = length_normalize(v - center_mean);
  if (lda.size() > 0) x = lda.transpose() * x;
  if (post_lda_length_norm) x = length_normalize(x);
  return x;
}

PreprocessChain fit_preprocess(const EmbeddingSet& train, Eigen::Index lda_dim,
                               bool post_lda_length_norm) {
  PreprocessChain chain;
  chain.center_mean = fit_center(train);
  chain.post_lda_length_norm = post_lda_length_norm;
  if (lda_dim > 0) {
    EmbeddingSet centered = train;
    for (Eigen::Index i = 0; i < train.size(); ++i)
      centered.rows.row(i) =
          length_normalize(train.rows.row(i).transpose() - chain.center_mean)
              .transpose();
    chain.lda = fit_lda(centered, lda_dim);
  } else {
    chain.lda = Matrix(0, 0);
  }
  return chain;
}

namespace {

// Clamp the eigenvalues of a symmetric matrix below; returns true if any
// clamping happened.
bool floor_spd(Matrix& m, double floor_val) {
  m = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(m);
  if (es.eigenvalues().minCoeff() >= floor_val) return false;
  Vector ev = es.eigenvalues().cwiseMax(floor_val);
  m = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  return true;
}

double log_normal(const Vector& x, const Vector& mean,
                  const Eigen::LLT<Matrix>& llt, double log_det) {
  const Eigen::Index d = x.size();
  const Vector diff = x - mean;
  const double quad = diff.dot(llt.solve(diff));
  return -0.5 * (double(d) * std::log(2.0 * std::numbers::pi) + log_det + quad);
}

double llt_log_det(const Eigen::LLT<Matrix>& llt) {
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

}  // namespace

double plda_log_likelihood(const TwoCovPlda& model, const EmbeddingSet& set) {
  const auto groups = group_by_speaker(set);
  const Eigen::Index d = model.dim();
  const double log2pi = std::log(2.0 * std::numbers::pi);

  const Eigen::LLT<Matrix> w_llt(model.within);
  const double log_det_w = llt_log_det(w_llt);

  // cache B + W/n factorizations per distinct count
  std::map<Eigen::Index, std::pair<Eigen::LLT<Matrix>, double>> marg;

  double ll = 0.0;
  for (const auto& [label, g] : groups) {
    const Eigen::Index n = g.count;
    const Vector mean = g.sum / double(n);
    double tr_scatter = 0.0;
    for (Eigen::Index i = 0; i < set.size(); ++i) {
      if (set.speakers[i] != label) continue;
      const Vector diff = set.rows.row(i).transpose() - mean;
      tr_scatter += diff.dot(w_llt.solve(diff));
    }
    auto it = marg.find(n);
    if (it == marg.end()) {
      Matrix cov = model.between + model.within / double(n);
      Eigen::LLT<Matrix> llt(cov);
      it = marg.emplace(n, std::make_pair(std::move(llt), 0.0)).first;
      it->second.second = llt_log_det(it->second.first);
    }
    ll += -0.5 * (double(n * d) * log2pi + double(n) * log_det_w + tr_scatter);
    ll += 0.5 * double(d) * log2pi +
          0.5 * (log_det_w - double(d) * std::log(double(n)));
    ll += log_normal(mean, model.mean, it->second.first, it->second.second);
  }
  return ll;
}

PldaFitResult fit_plda(const EmbeddingSet& set, int iterations) {
  const auto groups = group_by_speaker(set);
  const Eigen::Index d = set.dim();
  const Eigen::Index n_total = set.size();
  if (groups.size() < 2)
    throw std::invalid_argument("fit_plda: need at least 2 speakers");

  PldaFitResult result;
  TwoCovPlda& m = result.model;
  m.mean = set.rows.colwise().mean().transpose();
  Matrix total = Matrix::Zero(d, d);
  for (Eigen::Index i = 0; i < n_total; ++i) {
    const Vector diff = set.rows.row(i).transpose() - m.mean;
    total.noalias() += diff * diff.transpose();
  }
  total /= double(n_total);
  m.between = 0.5 * total;
  m.within = 0.5 * total;
  const double floor_val = std::max(1e-10 * total.trace() / double(d), 1e-300);
  result.degenerate |= floor_spd(m.between, floor_val);
  result.degenerate |= floor_spd(m.within, floor_val);

  result.log_likelihoods.push_back(plda_log_likelihood(m, set));

  for (int it = 0; it < iterations; ++it) {
    const Eigen::LLT<Matrix> b_llt(m.between);
    const Eigen::LLT<Matrix> w_llt(m.within);
    const Matrix b_inv = b_llt.solve(Matrix::Identity(d, d));
    const Matrix w_inv = w_llt.solve(Matrix::Identity(d, d));

    // posterior covariance per distinct utterance count
    std::map<Eigen::Index, Matrix> post_cov;
    for (const auto& [label, g] : groups) {
      if (!post_cov.count(g.count)) {
        const Matrix prec = b_inv + double(g.count) * w_inv;
        post_cov[g.count] = prec.llt().solve(Matrix::Identity(d, d));
      }
    }

    Vector mean_acc = Vector::Zero(d);
    Matrix b_acc = Matrix::Zero(d, d);
    Matrix w_acc = Matrix::Zero(d, d);
    std::map<std::string, Vector> post_means;
    const Vector b_inv_mu = b_inv * m.mean;
    for (const auto& [label, g] : groups) {
      const Vector xbar = g.sum / double(g.count);
      const Matrix& cov = post_cov.at(g.count);
      const Vector yhat = cov * (b_inv_mu + double(g.count) * (w_inv * xbar));
      post_means[label] = yhat;
      mean_acc += yhat;
      b_acc += cov;
      w_acc += double(g.count) * cov;
    }
    for (Eigen::Index i = 0; i < n_total; ++i) {
      const Vector diff =
          set.rows.row(i).transpose() - post_means.at(set.speakers[i]);
      w_acc.noalias() += diff * diff.transpose();
    }
    const Vector new_mean = mean_acc / double(groups.size());
    for (const auto& [label, g] : groups) {
      const Vector diff = post_means.at(label) - new_mean;
      b_acc.noalias() += diff * diff.transpose();
    }

    m.mean = new_mean;
    m.between = b_acc / double(groups.size());
    m.within = w_acc / double(n_total);
    result.degenerate |= floor_spd(m.between, floor_val);
    result.degenerate |= floor_spd(m.within, floor_val);

    result.log_likelihoods.push_back(plda_log_likelihood(m, set));
  }
  return result;
}

PldaScorer::PldaScorer(const TwoCovPlda& model) : dim_(model.dim()) {
  mean_ = model.mean;
  const Matrix total = model.between + model.within;
  total_.compute(total);
  Matrix joint(2 * dim_, 2 * dim_);
  joint.topLeftCorner(dim_, dim_) = total;
  joint.bottomRightCorner(dim_, dim_) = total;
  joint.topRightCorner(dim_, dim_) = model.between;
  joint.bottomLeftCorner(dim_, dim_) = model.between;
  joint_.compute(joint);
  if (total_.info() != Eigen::Success || joint_.info() != Eigen::Success)
    throw std::runtime_error("PldaScorer: covariance not positive definite");
  log_det_total_ = llt_log_det(total_);
  log_det_joint_ = llt_log_det(joint_);
}

double PldaScorer::score(const Vector& enroll, const Vector& test) const {
  if (enroll.size() != dim_ || test.size() != dim_)
    throw std::invalid_argument("plda_score: dimension mismatch");
  Vector pair(2 * dim_);
  pair.head(dim_) = enroll;
  pair.tail(dim_) = test;
  Vector pair_mean(2 * dim_);
  pair_mean.head(dim_) = mean_;
  pair_mean.tail(dim_) = mean_;
  const double same = log_normal(pair, pair_mean, joint_, log_det_joint_);
  const double diff = log_normal(enroll, mean_, total_, log_det_total_) +
                      log_normal(test, mean_, total_, log_det_total_);
  return same - diff;
}

double plda_score(const TwoCovPlda& model, const Vector& enroll,
                  const Vector& test) {
  return PldaScorer(model).score(enroll, test);
}

double cosine_score(const Vector& enroll, const Vector& test) {
  return length_normalize(enroll).dot(length_normalize(test));
}

double adaptive_snorm(double raw, const CohortScores& enroll_cohort,
                      const CohortScores& test_cohort, Eigen::Index top_k) {
  auto side_stats = [top_k](const CohortScores& cohort) {
    if (top_k < 2 || std::size_t(top_k) > cohort.scores.size())
      throw std::invalid_argument("adaptive_snorm: bad top-k for cohort size");
    std::vector<double> top = cohort.scores;
    std::partial_sort(top.begin(), top.begin() + top_k, top.end(),
                      std::greater<double>());
    double mean = 0.0;
    for (Eigen::Index i = 0; i < top_k; ++i) mean += top[i];
    mean /= double(top_k);
    double var = 0.0;
    for (Eigen::Index i = 0; i < top_k; ++i)
      var += (top[i] - mean) * (top[i] - mean);
    var /= double(top_k);
    return std::make_pair(mean, std::max(std::sqrt(var), 1e-8));
  };
  const auto [mu_e, sd_e] = side_stats(enroll_cohort);
  const auto [mu_t, sd_t] = side_stats(test_cohort);
  return 0.5 * ((raw - mu_e) / sd_e + (raw - mu_t) / sd_t);
}

Vector average_enrollment(const std::vector<Vector>& embeddings) {
  if (embeddings.empty())
    throw std::invalid_argument("average_enrollment: empty list");
  Vector sum = embeddings.front();
  for (std::size_t i = 1; i < embeddings.size(); ++i) {
    if (embeddings[i].size() != sum.size())
      throw std::invalid_argument("average_enrollment: dimension mismatch");
    sum += embeddings[i];
  }
  return sum / double(embeddings.size());
}

}  // namespace vibspk
