#pragma once

#include "avseg/ops.hpp"

namespace avseg {

// Training objectives. bce_loss/iou_loss/total_loss are differentiable graph
// ops; the evaluation metrics live in metrics.hpp.

template <typename T>
Var<T> bce_loss(Graph<T>& g, Var<T> pred_logits, Tensor<T> gt) {
  return bce_with_logits_mean(g, pred_logits, std::move(gt));
}

template <typename T>
Var<T> iou_loss(Graph<T>& g, Var<T> pred_probs, Tensor<T> gt, T eps = T(1e-6)) {
  return soft_iou_loss(g, pred_probs, std::move(gt), eps);
}

// L = BCE(logits, gt) + IoU(sigmoid(logits), gt)
template <typename T>
Var<T> total_loss(Graph<T>& g, Var<T> pred_logits, Tensor<T> gt) {
  Var<T> bce = bce_loss(g, pred_logits, gt);
  Var<T> iou = iou_loss(g, sigmoid(g, pred_logits), std::move(gt));
  return add(g, bce, iou);
}

// Plain scalar conveniences (throwaway graph).
template <typename T>
T bce_loss_value(const Tensor<T>& logits, const Tensor<T>& gt) {
  Graph<T> g;
  return bce_loss(g, g.input(logits), gt).value()[0];
}

template <typename T>
T iou_loss_value(const Tensor<T>& probs, const Tensor<T>& gt) {
  Graph<T> g;
  return iou_loss(g, g.input(probs), gt).value()[0];
}

template <typename T>
T total_loss_value(const Tensor<T>& logits, const Tensor<T>& gt) {
  Graph<T> g;
  return total_loss(g, g.input(logits), gt).value()[0];
}

}  // namespace avseg
