#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "b2b/tensor.hpp"

namespace b2b {

/// Scaled dot-product attention for one head:
/// softmax(q·kᵀ/√d with masked scores at −∞)·v.
/// `masked`, when non-empty, holds q.rows()×k.rows() flags (nonzero = masked).
inline Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v,
                        const std::vector<std::uint8_t>& masked = {}) {
  detail::require_2d(q, "attention");
  detail::require_2d(k, "attention");
  detail::require_2d(v, "attention");
  if (q.cols() != k.cols())
    throw ShapeError("attention: query " + shape_str(q.shape()) + " and key " +
                     shape_str(k.shape()) + " head dims differ");
  if (k.rows() != v.rows())
    throw ShapeError("attention: key " + shape_str(k.shape()) + " and value " +
                     shape_str(v.shape()) + " lengths differ");
  if (!masked.empty() && masked.size() != q.rows() * k.rows())
    throw ShapeError("attention: mask does not match score matrix " +
                     shape_str({q.rows(), k.rows()}));
  Tensor scores = scale(matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(q.cols())));
  if (!masked.empty()) scores = masked_fill_neg_inf(scores, masked);
  return matmul(softmax(scores, 1), v);
}

/// Geometry of a batched multi-head attention call. Queries are rows
/// [b*q_len + t], keys/values rows [b*kv_len + s]; heads split the columns.
struct AttentionLayout {
  std::size_t batch = 1;
  std::size_t q_len = 0;
  std::size_t kv_len = 0;
  std::size_t heads = 1;
  bool causal = false;                    // query t sees keys s <= t
  std::vector<std::uint8_t> key_valid;    // batch*kv_len, empty = all valid
};

/// Fused batched multi-head scaled dot-product attention with its own
/// backward. A query with no visible key produces a zero row.
inline Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                                   const AttentionLayout& lay) {
  detail::require_2d(q, "multi_head_attention");
  detail::require_2d(k, "multi_head_attention");
  detail::require_2d(v, "multi_head_attention");
  const std::size_t B = lay.batch, T = lay.q_len, S = lay.kv_len, H = lay.heads;
  const std::size_t D = q.cols();
  if (q.rows() != B * T || k.rows() != B * S || v.rows() != B * S || k.cols() != D ||
      v.cols() != D)
    throw ShapeError("multi_head_attention: q " + shape_str(q.shape()) + ", k " +
                     shape_str(k.shape()) + ", v " + shape_str(v.shape()) +
                     " inconsistent with batch " + std::to_string(B) + ", lengths " +
                     std::to_string(T) + "/" + std::to_string(S));
  if (H == 0 || D % H != 0)
    throw ShapeError("multi_head_attention: width " + std::to_string(D) +
                     " not divisible by heads " + std::to_string(H));
  if (!lay.key_valid.empty() && lay.key_valid.size() != B * S)
    throw ShapeError("multi_head_attention: key mask length mismatch");
  const std::size_t dh = D / H;
  const double sc = 1.0 / std::sqrt(static_cast<double>(dh));
  const double* Q = q.data().data();
  const double* K = k.data().data();
  const double* V = v.data().data();

  auto visible = [&](std::size_t b, std::size_t t, std::size_t s) {
    if (lay.causal && s > t) return false;
    return lay.key_valid.empty() || lay.key_valid[b * S + s] != 0;
  };

  // probs[((b*H + h)*T + t)*S + s]
  std::vector<double> probs(B * H * T * S, 0.0);
  std::vector<double> out(B * T * D, 0.0);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t t = 0; t < T; ++t) {
        double* p = probs.data() + ((b * H + h) * T + t) * S;
        const double* qr = Q + (b * T + t) * D + h * dh;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t s = 0; s < S; ++s) {
          if (!visible(b, t, s)) continue;
          const double* kr = K + (b * S + s) * D + h * dh;
          double dot = 0.0;
          for (std::size_t d = 0; d < dh; ++d) dot += qr[d] * kr[d];
          p[s] = dot * sc;
          mx = std::max(mx, p[s]);
        }
        if (mx == -std::numeric_limits<double>::infinity()) continue;
        double z = 0.0;
        for (std::size_t s = 0; s < S; ++s)
          if (visible(b, t, s)) z += (p[s] = std::exp(p[s] - mx));
        double* o = out.data() + (b * T + t) * D + h * dh;
        for (std::size_t s = 0; s < S; ++s) {
          if (!visible(b, t, s)) continue;
          p[s] /= z;
          const double* vr = V + (b * S + s) * D + h * dh;
          for (std::size_t d = 0; d < dh; ++d) o[d] += p[s] * vr[d];
        }
      }

  return make_result({B * T, D}, std::move(out), {q, k, v},
                     [probs = std::move(probs), B, T, S, H, D, dh, sc](detail::Node& node) {
                       const auto& Qd = node.parents[0]->data;
                       const auto& Kd = node.parents[1]->data;
                       const auto& Vd = node.parents[2]->data;
                       auto* gq = detail::grad_of(node, 0);
                       auto* gk = detail::grad_of(node, 1);
                       auto* gv = detail::grad_of(node, 2);
                       const auto& dO = node.grad;
                       std::vector<double> ds(S);
                       for (std::size_t b = 0; b < B; ++b)
                         for (std::size_t h = 0; h < H; ++h)
                           for (std::size_t t = 0; t < T; ++t) {
                             const double* p = probs.data() + ((b * H + h) * T + t) * S;
                             const double* go = dO.data() + (b * T + t) * D + h * dh;
                             double dot = 0.0;
                             for (std::size_t s = 0; s < S; ++s) {
                               ds[s] = 0.0;
                               if (p[s] == 0.0) continue;
                               const double* vr = Vd.data() + (b * S + s) * D + h * dh;
                               double dp = 0.0;
                               for (std::size_t d = 0; d < dh; ++d) dp += go[d] * vr[d];
                               ds[s] = dp;
                               dot += p[s] * dp;
                               if (gv) {
                                 double* gvr = gv->data() + (b * S + s) * D + h * dh;
                                 for (std::size_t d = 0; d < dh; ++d) gvr[d] += p[s] * go[d];
                               }
                             }
                             for (std::size_t s = 0; s < S; ++s) ds[s] = p[s] * (ds[s] - dot) * sc;
                             if (gq) {
                               double* gqr = gq->data() + (b * T + t) * D + h * dh;
                               for (std::size_t s = 0; s < S; ++s) {
                                 if (ds[s] == 0.0) continue;
                                 const double* kr = Kd.data() + (b * S + s) * D + h * dh;
                                 for (std::size_t d = 0; d < dh; ++d) gqr[d] += ds[s] * kr[d];
                               }
                             }
                             if (gk) {
                               const double* qr = Qd.data() + (b * T + t) * D + h * dh;
                               for (std::size_t s = 0; s < S; ++s) {
                                 if (ds[s] == 0.0) continue;
                                 double* gkr = gk->data() + (b * S + s) * D + h * dh;
                                 for (std::size_t d = 0; d < dh; ++d) gkr[d] += ds[s] * qr[d];
                               }
                             }
                           }
                     });
}

}  // namespace b2b
