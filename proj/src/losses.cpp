#include "swapdetect/losses.hpp"

#include <sstream>

namespace swapdetect {

void validate(const PairBatch& batch) {
  if (batch.size() == 0) throw ValidationError("empty pair batch");
  if (batch.ref_stacks.size() != batch.size() ||
      batch.sus_stacks.size() != batch.size())
    throw ValidationError("pair batch stack/label count mismatch");
  const auto& offsets = batch.ref_stacks[0].layer_offsets;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch.labels[i] != 0.0 && batch.labels[i] != 1.0)
      throw ValidationError("pair label must be 0 or 1");
    if (batch.ref_stacks[i].layer_offsets != offsets ||
        batch.sus_stacks[i].layer_offsets != offsets)
      throw ValidationError("pair batch stacks have mismatched layer offsets");
  }
}

SilResult stacked_identity_loss_with_grad(const PairBatch& batch,
                                          bool want_grads) {
  validate(batch);
  const std::size_t n = batch.size();
  const double inv_n = 1.0 / static_cast<double>(n);

  SilResult result;
  if (want_grads) {
    result.ref_grads.reserve(n);
    result.sus_grads.reserve(n);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const StyleFeatureStack& ref = batch.ref_stacks[i];
    const StyleFeatureStack& sus = batch.sus_stacks[i];
    Vecd gref, gsus;
    if (want_grads) {
      gref = Vecd::Zero(ref.stacked.size());
      gsus = Vecd::Zero(sus.stacked.size());
    }
    for (Index l = 0; l < ref.layers(); ++l) {
      const auto f1 = ref.layer_slice(l);
      const auto f2 = sus.layer_slice(l);
      double cos;
      Vecd g1, g2;
      try {
        cos = want_grads ? cosine_similarity_grad(f1, f2, g1, g2)
                         : cosine_similarity(f1, f2);
      } catch (const DegenerateInputError&) {
        std::ostringstream msg;
        msg << "stacked_identity_loss: degenerate layer vector (pair " << i
            << ", layer " << l << ")";
        throw DegenerateInputError(msg.str());
      }
      // y=1 contributes (1 - cos), y=0 contributes +cos.
      const double sign = batch.labels[i] == 1.0 ? -1.0 : 1.0;
      result.value += inv_n * (batch.labels[i] == 1.0 ? 1.0 - cos : cos);
      if (want_grads) {
        const auto& [begin, end] = ref.layer_offsets[static_cast<std::size_t>(l)];
        gref.segment(begin, end - begin) += sign * inv_n * g1;
        gsus.segment(begin, end - begin) += sign * inv_n * g2;
      }
    }
    if (want_grads) {
      result.ref_grads.push_back(std::move(gref));
      result.sus_grads.push_back(std::move(gsus));
    }
  }
  if (!std::isfinite(result.value))
    throw NumericError("stacked_identity_loss: non-finite value");
  return result;
}

LossValue stacked_identity_loss(const PairBatch& batch) {
  return {stacked_identity_loss_with_grad(batch, false).value};
}

BceResult bce_loss_with_grad(const Vecd& predictions, const Vecd& labels,
                             bool want_grads) {
  if (predictions.size() != labels.size())
    throw ValidationError("bce_loss: prediction/label length mismatch");
  if (predictions.size() == 0) throw ValidationError("bce_loss: empty batch");

  const Index n = predictions.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  BceResult result;
  if (want_grads) result.prediction_grads = Vecd::Zero(n);
  for (Index i = 0; i < n; ++i) {
    const double y = labels[i];
    if (y != 0.0 && y != 1.0)
      throw ValidationError("bce_loss: label must be 0 or 1");
    const bool clamped_low = predictions[i] < kProbEpsilon;
    const bool clamped_high = predictions[i] > 1.0 - kProbEpsilon;
    const double p = clamped_low     ? kProbEpsilon
                     : clamped_high ? 1.0 - kProbEpsilon
                                    : predictions[i];
    result.value -= inv_n * (y * std::log(p) + (1.0 - y) * std::log1p(-p));
    if (want_grads && !clamped_low && !clamped_high)
      result.prediction_grads[i] = inv_n * (p - y) / (p * (1.0 - p));
  }
  if (!std::isfinite(result.value))
    throw NumericError("bce_loss: non-finite value");
  return result;
}

LossValue bce_loss(const Vecd& predictions, const Vecd& labels) {
  return {bce_loss_with_grad(predictions, labels, false).value};
}

LossValue final_loss(const LossValue& bce, const LossValue& sil, double alpha) {
  if (alpha < 0.0) throw ConfigError("final_loss: alpha must be >= 0");
  if (!std::isfinite(bce.value) || !std::isfinite(sil.value))
    throw NumericError("final_loss: non-finite input");
  return {bce.value + alpha * sil.value};
}

ReconResult reconstruction_loss_with_grad(const Vecd& x1, const Vecd& x2,
                                          const Vecd& xhat, bool want_grads) {
  ReconResult result;
  result.value = reconstruction_loss_value(x1, x2, xhat);
  if (!std::isfinite(result.value))
    throw NumericError("reconstruction_loss: non-finite value");
  if (want_grads) {
    result.x1_grads = 2.0 * (x1 - xhat);
    result.x2_grads = 2.0 * (x2 - xhat);
    result.xhat_grads = -result.x1_grads - result.x2_grads;
  }
  return result;
}

LossValue reconstruction_loss(const Vecd& x1, const Vecd& x2, const Vecd& xhat) {
  return {reconstruction_loss_value(x1, x2, xhat)};
}

}  // namespace swapdetect
