#pragma once

#include <string>
#include <vector>

#include "vibspk/encoder.hpp"

namespace vibspk {

struct EmbeddingSet {
  Matrix rows;                        // N x E
  std::vector<std::string> speakers;  // may be empty for unlabeled sets
  std::vector<std::string> utterances;

  Eigen::Index size() const { return rows.rows(); }
  Eigen::Index dim() const { return rows.cols(); }
};

Vector fit_center(const EmbeddingSet& set);
Vector apply_center(const Vector& v, const Vector& mean);

Vector length_normalize(const Vector& v);

// Generalized-eigenproblem LDA on labeled embeddings. Within-class
// scatter regularized by 1e-6 * (trace/dim) * I. Returns E x out_dim
// with columns ordered by decreasing eigenvalue; apply as P^T x.
Matrix fit_lda(const EmbeddingSet& set, Eigen::Index out_dim);

// Fitted preprocessing, applied as center -> length-normalize ->
// LDA-project (-> optional second length-normalize).
struct PreprocessChain {
  Vector center_mean;
  Matrix lda;  // empty (0x0) when LDA disabled
  bool post_lda_length_norm = false;

  Vector apply(const Vector& v) const;
};

PreprocessChain fit_preprocess(const EmbeddingSet& train, Eigen::Index lda_dim,
                               bool post_lda_length_norm);

// Two-covariance PLDA: speaker mean y ~ N(mu, B), observation x|y ~ N(y, W).
struct TwoCovPlda {
  Vector mean;
  Matrix between;  // B, symmetric PSD
  Matrix within;   // W, symmetric PD

  Eigen::Index dim() const { return mean.size(); }
};

struct PldaFitResult {
  TwoCovPlda model;
  std::vector<double> log_likelihoods;  // per EM iteration (after update)
  bool degenerate = false;              // within covariance hit the floor
};

// EM initialized with mean = data mean and B = W = total covariance / 2.
PldaFitResult fit_plda(const EmbeddingSet& set, int iterations);

// Marginal training log-likelihood of labeled data under the model.
double plda_log_likelihood(const TwoCovPlda& model, const EmbeddingSet& set);

// log p(e,t | same speaker) - log p(e,t | different speakers).
double plda_score(const TwoCovPlda& model, const Vector& enroll,
                  const Vector& test);

// Precomputed factorizations for scoring many trials.
class PldaScorer {
 public:
  explicit PldaScorer(const TwoCovPlda& model);
  double score(const Vector& enroll, const Vector& test) const;

 private:
  Vector mean_;
  Eigen::LLT<Matrix> total_;  // B + W
  Eigen::LLT<Matrix> joint_;  // [[B+W, B], [B, B+W]]
  double log_det_total_ = 0.0;
  double log_det_joint_ = 0.0;
  Eigen::Index dim_ = 0;
};

double cosine_score(const Vector& enroll, const Vector& test);

struct CohortScores {
  std::vector<double> scores;
};

// Adaptive s-norm: standardize against the mean/std of the top-k cohort
// scores of each trial side, averaged over the two sides.
double adaptive_snorm(double raw, const CohortScores& enroll_cohort,
                      const CohortScores& test_cohort, Eigen::Index top_k);

Vector average_enrollment(const std::vector<Vector>& embeddings);

}  // namespace vibspk
