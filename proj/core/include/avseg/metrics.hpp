#pragma once

#include <cstdint>
#include <vector>

#include "avseg/errors.hpp"
#include "avseg/tensor.hpp"

namespace avseg {

// Evaluation metrics M_J (mean IoU) and M_F (F-score) over binarized
// probability masks. Empty-prediction/empty-truth pairs score 1.0 (a correct
// "no object" call); other zero-denominator cases score 0.

template <typename T>
struct MaskPair {
  Tensor<T> pred;  // probabilities in [0,1]
  Tensor<T> gt;    // strictly binary {0,1}
};

namespace metrics_detail {

struct Counts {
  int64_t tp = 0, fp = 0, fn = 0;
};

template <typename T>
Counts count_pair(const Tensor<T>& pred, const Tensor<T>& gt, double threshold) {
  if (!pred.same_shape(gt)) {
    throw ShapeError("metric pair: pred/gt shape mismatch " + shape_str(pred.shape()) +
                     " vs " + shape_str(gt.shape()));
  }
  Counts c;
  for (int64_t i = 0; i < pred.numel(); ++i) {
    const double p = static_cast<double>(pred[i]);
    if (p < 0.0 || p > 1.0) throw ValueError("metric pair: prediction outside [0,1]");
    const T g = gt[i];
    if (g != T(0) && g != T(1)) throw ValueError("metric pair: ground truth not binary");
    const bool pb = p >= threshold;
    const bool gb = g == T(1);
    if (pb && gb) ++c.tp;
    else if (pb) ++c.fp;
    else if (gb) ++c.fn;
  }
  return c;
}

}  // namespace metrics_detail

template <typename T>
double pair_iou(const Tensor<T>& pred, const Tensor<T>& gt, double threshold = 0.5) {
  const auto c = metrics_detail::count_pair(pred, gt, threshold);
  const int64_t uni = c.tp + c.fp + c.fn;
  if (uni == 0) return 1.0;  // both empty
  return static_cast<double>(c.tp) / static_cast<double>(uni);
}

// F_beta = (1+b) * P * R / (b * P + R) with b = beta_sq; beta_sq = 1 is the
// literal harmonic mean of precision and recall.
template <typename T>
double pair_fscore(const Tensor<T>& pred, const Tensor<T>& gt, double threshold,
                   double beta_sq) {
  const auto c = metrics_detail::count_pair(pred, gt, threshold);
  if (c.tp + c.fp + c.fn == 0) return 1.0;  // both empty
  if (c.tp == 0) return 0.0;
  const double prec = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  const double rec = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  return (1.0 + beta_sq) * prec * rec / (beta_sq * prec + rec);
}

template <typename T>
double miou(const std::vector<MaskPair<T>>& pairs, double threshold = 0.5) {
  if (pairs.empty()) throw ValueError("miou: empty sequence");
  double acc = 0.0;
  for (const auto& p : pairs) acc += pair_iou(p.pred, p.gt, threshold);
  return acc / static_cast<double>(pairs.size());
}

template <typename T>
double fscore(const std::vector<MaskPair<T>>& pairs, double threshold = 0.5,
              double beta_sq = 0.3) {
  if (pairs.empty()) throw ValueError("fscore: empty sequence");
  double acc = 0.0;
  for (const auto& p : pairs) acc += pair_fscore(p.pred, p.gt, threshold, beta_sq);
  return acc / static_cast<double>(pairs.size());
}

}  // namespace avseg
