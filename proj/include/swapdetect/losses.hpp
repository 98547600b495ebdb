#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "swapdetect/features.hpp"
#include "swapdetect/types.hpp"

namespace swapdetect {

inline constexpr double kNormEpsilon = 1e-12;
inline constexpr double kProbEpsilon = 1e-7;

struct LossValue {
  double value = 0.0;
};

// Batch of feature-stack pairs with pair labels: 1 = real-real, 0 = fake-real.
struct PairBatch {
  std::vector<StyleFeatureStack> ref_stacks;
  std::vector<StyleFeatureStack> sus_stacks;
  std::vector<double> labels;

  std::size_t size() const { return labels.size(); }
};

void validate(const PairBatch& batch);

template <class DerivedA, class DerivedB>
typename DerivedA::Scalar cosine_similarity(
    const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  const Scalar na = a.norm();
  const Scalar nb = b.norm();
  if (na <= Scalar(kNormEpsilon) || nb <= Scalar(kNormEpsilon))
    throw DegenerateInputError("cosine_similarity: near-zero vector norm");
  return a.dot(b) / (na * nb);
}

// Cosine plus its gradients with respect to both arguments.
template <class DerivedA, class DerivedB>
typename DerivedA::Scalar cosine_similarity_grad(
    const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b,
    Vec<typename DerivedA::Scalar>& grad_a,
    Vec<typename DerivedA::Scalar>& grad_b) {
  using Scalar = typename DerivedA::Scalar;
  const Scalar na = a.norm();
  const Scalar nb = b.norm();
  if (na <= Scalar(kNormEpsilon) || nb <= Scalar(kNormEpsilon))
    throw DegenerateInputError("cosine_similarity: near-zero vector norm");
  const Scalar inv = Scalar(1) / (na * nb);
  const Scalar cos = a.dot(b) * inv;
  grad_a = b * inv - (cos / (na * na)) * a;
  grad_b = a * inv - (cos / (nb * nb)) * b;
  return cos;
}

struct SilResult {
  double value = 0.0;
  // dL/d(stacked vector), per pair, for the reference and suspicious sides.
  std::vector<Vecd> ref_grads;
  std::vector<Vecd> sus_grads;
};

// Per-layer cosine objective over a pair batch: real-real pairs are pulled
// together (1 - cos) and fake-real pairs pushed apart (+cos), summed over
// layers and averaged over pairs. Value lies in [-L, 2L].
SilResult stacked_identity_loss_with_grad(const PairBatch& batch,
                                          bool want_grads = true);
LossValue stacked_identity_loss(const PairBatch& batch);

struct BceResult {
  double value = 0.0;
  Vecd prediction_grads;
};

// Mean binary cross entropy. Predictions are clamped to
// [kProbEpsilon, 1 - kProbEpsilon] before the logs.
BceResult bce_loss_with_grad(const Vecd& predictions, const Vecd& labels,
                             bool want_grads = true);
LossValue bce_loss(const Vecd& predictions, const Vecd& labels);

// L_final = L_BCE + alpha * L_SIL.
LossValue final_loss(const LossValue& bce, const LossValue& sil, double alpha);

struct ReconResult {
  double value = 0.0;
  Vecd x1_grads;
  Vecd x2_grads;
  Vecd xhat_grads;
};

// Squared-error reconstruction objective against both pair members:
// |x1 - xhat|^2 + |x2 - xhat|^2.
template <class D1, class D2, class D3>
double reconstruction_loss_value(const Eigen::MatrixBase<D1>& x1,
                                 const Eigen::MatrixBase<D2>& x2,
                                 const Eigen::MatrixBase<D3>& xhat) {
  if (x1.size() != x2.size() || x1.size() != xhat.size())
    throw ValidationError("reconstruction_loss: length mismatch");
  return (x1 - xhat).squaredNorm() + (x2 - xhat).squaredNorm();
}

ReconResult reconstruction_loss_with_grad(const Vecd& x1, const Vecd& x2,
                                          const Vecd& xhat,
                                          bool want_grads = true);
LossValue reconstruction_loss(const Vecd& x1, const Vecd& x2, const Vecd& xhat);

}  // namespace swapdetect
