#include <algorithm>
#include <cmath>

#include "vlogdesk/errors.hpp"
#include "vlogdesk/tensor.hpp"
#include "vlogdesk/threading.hpp"

namespace vlogdesk {

namespace detail {
void record(Tensor& out, std::vector<Tensor> parents, std::function<void(TensorNode&)> backprop);
}

namespace {

std::string shape_str(const std::vector<int>& shape) {
    std::string s = "(";
    for (size_t i = 0; i < shape.size(); ++i) {
        s += std::to_string(shape[i]);
        if (i + 1 < shape.size()) s += ",";
    }
    return s + ")";
}

// C(M,N) += A(M,K) * B(K,N). Each output row is owned by one task, so the
// result does not depend on the worker count. Rows are processed four at a
// time so every B row streams once per block instead of once per row.
void gemm_nn(const double* A, const double* B, double* C, int64_t M, int64_t K, int64_t N) {
    parallel_for(M, [&](int64_t r0, int64_t r1) {
        int64_t i = r0;
        for (; i + 4 <= r1; i += 4) {
            double* c0 = C + i * N;
            double* c1 = c0 + N;
            double* c2 = c1 + N;
            double* c3 = c2 + N;
            const double* a = A + i * K;
            for (int64_t k = 0; k < K; ++k) {
                const double a0 = a[k], a1 = a[K + k], a2 = a[2 * K + k], a3 = a[3 * K + k];
                if (a0 == 0.0 && a1 == 0.0 && a2 == 0.0 && a3 == 0.0) continue;
                const double* b = B + k * N;
                for (int64_t j = 0; j < N; ++j) {
                    const double bv = b[j];
                    c0[j] += a0 * bv;
                    c1[j] += a1 * bv;
                    c2[j] += a2 * bv;
                    c3[j] += a3 * bv;
                }
            }
        }
        for (; i < r1; ++i) {
            double* c = C + i * N;
            const double* a = A + i * K;
            for (int64_t k = 0; k < K; ++k) {
                const double av = a[k];
                if (av == 0.0) continue;
                const double* b = B + k * N;
                for (int64_t j = 0; j < N; ++j) c[j] += av * b[j];
            }
        }
    });
}

// Dot product with four independent accumulator lanes so the compiler can
// vectorize without reassociating a single chain.
double dot4(const double* a, const double* b, int64_t n) {
    double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
    int64_t k = 0;
    for (; k + 4 <= n; k += 4) {
        s0 += a[k] * b[k];
        s1 += a[k + 1] * b[k + 1];
        s2 += a[k + 2] * b[k + 2];
        s3 += a[k + 3] * b[k + 3];
    }
    for (; k < n; ++k) s0 += a[k] * b[k];
    return (s0 + s1) + (s2 + s3);
}

// C(M,N) += A(M,K) * B(N,K)^T.
void gemm_nt(const double* A, const double* B, double* C, int64_t M, int64_t K, int64_t N) {
    parallel_for(M, [&](int64_t r0, int64_t r1) {
        for (int64_t i = r0; i < r1; ++i) {
            const double* a = A + i * K;
            double* c = C + i * N;
            for (int64_t j = 0; j < N; ++j) c[j] += dot4(a, B + j * K, K);
        }
    });
}

// C(M,N) += A(K,M)^T * B(K,N).
void gemm_tn(const double* A, const double* B, double* C, int64_t M, int64_t K, int64_t N) {
    parallel_for(M, [&](int64_t r0, int64_t r1) {
        int64_t i = r0;
        for (; i + 4 <= r1; i += 4) {
            double* c0 = C + i * N;
            double* c1 = c0 + N;
            double* c2 = c1 + N;
            double* c3 = c2 + N;
            for (int64_t k = 0; k < K; ++k) {
                const double* arow = A + k * M + i;
                const double a0 = arow[0], a1 = arow[1], a2 = arow[2], a3 = arow[3];
                if (a0 == 0.0 && a1 == 0.0 && a2 == 0.0 && a3 == 0.0) continue;
                const double* b = B + k * N;
                for (int64_t j = 0; j < N; ++j) {
                    const double bv = b[j];
                    c0[j] += a0 * bv;
                    c1[j] += a1 * bv;
                    c2[j] += a2 * bv;
                    c3[j] += a3 * bv;
                }
            }
        }
        for (; i < r1; ++i) {
            double* c = C + i * N;
            for (int64_t k = 0; k < K; ++k) {
                const double av = A[k * M + i];
                if (av == 0.0) continue;
                const double* b = B + k * N;
                for (int64_t j = 0; j < N; ++j) c[j] += av * b[j];
            }
        }
    });
}

}  // namespace

// ---- matmul -----------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    const auto& as = a.shape();
    const auto& bs = b.shape();
    int64_t batch = 1;
    int M, K, N;
    bool shared_rhs = false;
    if (as.size() == 2 && bs.size() == 2) {
        M = as[0], K = as[1];
        if (bs[0] != K) fail_data("matmul: inner mismatch " + shape_str(as) + " x " + shape_str(bs));
        N = bs[1];
    } else if (as.size() == 3 && bs.size() == 3) {
        if (as[0] != bs[0] || as[2] != bs[1])
            fail_data("matmul: batch mismatch " + shape_str(as) + " x " + shape_str(bs));
        batch = as[0], M = as[1], K = as[2], N = bs[2];
    } else if (as.size() == 3 && bs.size() == 2) {
        if (as[2] != bs[0]) fail_data("matmul: inner mismatch " + shape_str(as) + " x " + shape_str(bs));
        batch = as[0], M = as[1], K = as[2], N = bs[1];
        shared_rhs = true;
    } else {
        fail_data("matmul: unsupported ranks " + shape_str(as) + " x " + shape_str(bs));
    }

    std::vector<int> out_shape = (as.size() == 2) ? std::vector<int>{M, N}
                                                  : std::vector<int>{static_cast<int>(batch), M, N};
    Tensor out = Tensor::zeros(out_shape);
    for (int64_t g = 0; g < batch; ++g) {
        const double* A = a.node->value.data() + g * static_cast<int64_t>(M) * K;
        const double* B = b.node->value.data() + (shared_rhs ? 0 : g * static_cast<int64_t>(K) * N);
        gemm_nn(A, B, out.node->value.data() + g * static_cast<int64_t>(M) * N, M, K, N);
    }

    detail::record(out, {a, b}, [batch, M, K, N, shared_rhs](TensorNode& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        const int64_t asz = static_cast<int64_t>(M) * K;
        const int64_t bsz = static_cast<int64_t>(K) * N;
        const int64_t osz = static_cast<int64_t>(M) * N;
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (int64_t g = 0; g < batch; ++g)
                gemm_nt(self.grad.data() + g * osz,
                        pb.value.data() + (shared_rhs ? 0 : g * bsz),
                        pa.grad.data() + g * asz, M, N, K);
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (int64_t g = 0; g < batch; ++g)
                gemm_tn(pa.value.data() + g * asz, self.grad.data() + g * osz,
                        pb.grad.data() + (shared_rhs ? 0 : g * bsz), K, M, N);
        }
    });
    return out;
}

// ---- conv2d -----------------------------------------------------------------

namespace {

// Column-major patch matrix: colT has layout (C*KH*KW, OH*OW), so the
// forward pass is an axpy-style gemm_nn over contiguous rows.
void im2colT(const double* x, int C, int H, int W, int KH, int KW, int stride, int pad, int OH,
             int OW, double* colT) {
    const int64_t ohw = static_cast<int64_t>(OH) * OW;
    for (int c = 0; c < C; ++c)
        for (int ki = 0; ki < KH; ++ki)
            for (int kj = 0; kj < KW; ++kj) {
                double* row = colT + ((static_cast<int64_t>(c) * KH + ki) * KW + kj) * ohw;
                for (int oy = 0; oy < OH; ++oy) {
                    const int iy = oy * stride - pad + ki;
                    double* dst = row + static_cast<int64_t>(oy) * OW;
                    if (iy < 0 || iy >= H) {
                        std::fill(dst, dst + OW, 0.0);
                        continue;
                    }
                    const double* src = x + (static_cast<int64_t>(c) * H + iy) * W;
                    for (int ox = 0; ox < OW; ++ox) {
                        const int ix = ox * stride - pad + kj;
                        dst[ox] = (ix >= 0 && ix < W) ? src[ix] : 0.0;
                    }
                }
            }
}

void col2imT_accum(const double* colT, int C, int H, int W, int KH, int KW, int stride, int pad,
                   int OH, int OW, double* dx) {
    const int64_t ohw = static_cast<int64_t>(OH) * OW;
    for (int c = 0; c < C; ++c)
        for (int ki = 0; ki < KH; ++ki)
            for (int kj = 0; kj < KW; ++kj) {
                const double* row = colT + ((static_cast<int64_t>(c) * KH + ki) * KW + kj) * ohw;
                for (int oy = 0; oy < OH; ++oy) {
                    const int iy = oy * stride - pad + ki;
                    if (iy < 0 || iy >= H) continue;
                    double* dst = dx + (static_cast<int64_t>(c) * H + iy) * W;
                    const double* src = row + static_cast<int64_t>(oy) * OW;
                    for (int ox = 0; ox < OW; ++ox) {
                        const int ix = ox * stride - pad + kj;
                        if (ix >= 0 && ix < W) dst[ix] += src[ox];
                    }
                }
            }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad) {
    const auto& xs = x.shape();
    const auto& ws = w.shape();
    if (xs.size() != 4 || ws.size() != 4)
        fail_data("conv2d: expected 4D input/weight, got " + shape_str(xs) + " and " + shape_str(ws));
    const int B = xs[0], C = xs[1], H = xs[2], W = xs[3];
    const int OC = ws[0], KH = ws[2], KW = ws[3];
    if (ws[1] != C)
        fail_data("conv2d: channel mismatch " + shape_str(xs) + " vs " + shape_str(ws));
    if (bias.defined() && bias.size() != OC) fail_data("conv2d: bias size mismatch");
    const int OH = (H + 2 * pad - KH) / stride + 1;
    const int OW = (W + 2 * pad - KW) / stride + 1;
    if (OH <= 0 || OW <= 0) fail_data("conv2d: empty output for input " + shape_str(xs));

    Tensor out = Tensor::zeros({B, OC, OH, OW});
    const int64_t ckk = static_cast<int64_t>(C) * KH * KW;
    const int64_t ohw = static_cast<int64_t>(OH) * OW;
    std::vector<double> colT(ckk * ohw);
    for (int b = 0; b < B; ++b) {
        im2colT(x.node->value.data() + static_cast<int64_t>(b) * C * H * W, C, H, W, KH, KW, stride,
                pad, OH, OW, colT.data());
        double* o = out.node->value.data() + static_cast<int64_t>(b) * OC * ohw;
        gemm_nn(w.node->value.data(), colT.data(), o, OC, ckk, ohw);
        if (bias.defined())
            for (int oc = 0; oc < OC; ++oc) {
                const double bv = bias.node->value[oc];
                for (int64_t p = 0; p < ohw; ++p) o[oc * ohw + p] += bv;
            }
    }

    std::vector<Tensor> parents = bias.defined() ? std::vector<Tensor>{x, w, bias}
                                                 : std::vector<Tensor>{x, w};
    detail::record(out, parents, [B, C, H, W, OC, KH, KW, stride, pad, OH, OW](TensorNode& self) {
        auto& px = *self.parents[0];
        auto& pw = *self.parents[1];
        const int64_t ckk = static_cast<int64_t>(C) * KH * KW;
        const int64_t ohw = static_cast<int64_t>(OH) * OW;
        std::vector<double> colT(ckk * ohw);
        std::vector<double> dcolT;
        if (px.requires_grad) {
            px.ensure_grad();
            dcolT.assign(ckk * ohw, 0.0);
        }
        if (pw.requires_grad) pw.ensure_grad();
        for (int b = 0; b < B; ++b) {
            const double* g = self.grad.data() + static_cast<int64_t>(b) * OC * ohw;
            if (pw.requires_grad) {
                // dW(OC,CKK) += dOut(OC,OHW) * colT(CKK,OHW)^T; colT is
                // recomputed per item rather than kept alive for backward.
                im2colT(px.value.data() + static_cast<int64_t>(b) * C * H * W, C, H, W, KH, KW,
                        stride, pad, OH, OW, colT.data());
                gemm_nt(g, colT.data(), pw.grad.data(), OC, ohw, ckk);
            }
            if (px.requires_grad) {
                std::fill(dcolT.begin(), dcolT.end(), 0.0);
                gemm_tn(pw.value.data(), g, dcolT.data(), ckk, OC, ohw);
                col2imT_accum(dcolT.data(), C, H, W, KH, KW, stride, pad, OH, OW,
                              px.grad.data() + static_cast<int64_t>(b) * C * H * W);
            }
        }
        if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
            auto& pb = *self.parents[2];
            pb.ensure_grad();
            for (int b = 0; b < B; ++b) {
                const double* g = self.grad.data() + static_cast<int64_t>(b) * OC * ohw;
                for (int oc = 0; oc < OC; ++oc) {
                    double acc = 0.0;
                    for (int64_t p = 0; p < ohw; ++p) acc += g[oc * ohw + p];
                    pb.grad[oc] += acc;
                }
            }
        }
    });
    return out;
}

// ---- conv1d -----------------------------------------------------------------

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad) {
    const auto& xs = x.shape();
    const auto& ws = w.shape();
    if (xs.size() != 3 || ws.size() != 3)
        fail_data("conv1d: expected 3D input/weight, got " + shape_str(xs) + " and " + shape_str(ws));
    // Reuse the 2D path with height 1. conv2d pads both dims, so pad the
    // length axis explicitly and run unpadded.
    Tensor xp = x;
    if (pad > 0) {
        Tensor z = Tensor::zeros({xs[0], xs[1], pad});
        xp = concat({z, x, z}, 2);
    }
    const auto& ps = xp.shape();
    Tensor x4 = reshape(xp, {ps[0], ps[1], 1, ps[2]});
    Tensor w4 = reshape(w, {ws[0], ws[1], 1, ws[2]});
    Tensor y = conv2d(x4, w4, bias, stride, 0);
    const auto& ys = y.shape();
    return reshape(y, {ys[0], ys[1], ys[3]});
}

Tensor temporal_conv1d(const Tensor& x, const Tensor& w, const Tensor& bias) {
    const auto& xs = x.shape();
    const auto& ws = w.shape();
    if (xs.size() != 4 || ws.size() != 3)
        fail_data("temporal_conv1d: expected x (N,C,H,W) and w (OC,C,K)");
    const int N = xs[0], C = xs[1], H = xs[2], W = xs[3];
    const int OC = ws[0], K = ws[2];
    if (ws[1] != C) fail_data("temporal_conv1d: channel mismatch");
    if (bias.defined() && bias.size() != OC) fail_data("temporal_conv1d: bias size mismatch");
    const int64_t hw = static_cast<int64_t>(H) * W;
    const int half = K / 2;

    Tensor out = Tensor::zeros({N, OC, H, W});
    const double* xv = x.node->value.data();
    const double* wv = w.node->value.data();
    double* ov = out.node->value.data();
    parallel_for(static_cast<int64_t>(N) * OC, [&](int64_t t0, int64_t t1) {
        for (int64_t t = t0; t < t1; ++t) {
            const int n = static_cast<int>(t / OC);
            const int oc = static_cast<int>(t % OC);
            double* o = ov + t * hw;
            if (bias.defined()) std::fill(o, o + hw, bias.node->value[oc]);
            for (int k = 0; k < K; ++k) {
                const int src_n = n + k - half;
                if (src_n < 0 || src_n >= N) continue;
                for (int ic = 0; ic < C; ++ic) {
                    const double wk = wv[(static_cast<int64_t>(oc) * C + ic) * K + k];
                    if (wk == 0.0) continue;
                    const double* src = xv + (static_cast<int64_t>(src_n) * C + ic) * hw;
                    for (int64_t i = 0; i < hw; ++i) o[i] += wk * src[i];
                }
            }
        }
    });

    std::vector<Tensor> parents = bias.defined() ? std::vector<Tensor>{x, w, bias}
                                                 : std::vector<Tensor>{x, w};
    detail::record(out, parents, [N, C, H, W, OC, K, half, hw](TensorNode& self) {
        auto& px = *self.parents[0];
        auto& pw = *self.parents[1];
        const double* g = self.grad.data();
        if (px.requires_grad) {
            px.ensure_grad();
            const double* wv = pw.value.data();
            for (int n = 0; n < N; ++n)
                for (int k = 0; k < K; ++k) {
                    const int src_n = n + k - half;
                    if (src_n < 0 || src_n >= N) continue;
                    for (int oc = 0; oc < OC; ++oc)
                        for (int ic = 0; ic < C; ++ic) {
                            const double wk = wv[(static_cast<int64_t>(oc) * C + ic) * K + k];
                            if (wk == 0.0) continue;
                            const double* gp = g + (static_cast<int64_t>(n) * OC + oc) * hw;
                            double* dst = px.grad.data() + (static_cast<int64_t>(src_n) * C + ic) * hw;
                            for (int64_t i = 0; i < hw; ++i) dst[i] += wk * gp[i];
                        }
                }
        }
        if (pw.requires_grad) {
            pw.ensure_grad();
            const double* xv = px.value.data();
            for (int n = 0; n < N; ++n)
                for (int k = 0; k < K; ++k) {
                    const int src_n = n + k - half;
                    if (src_n < 0 || src_n >= N) continue;
                    for (int oc = 0; oc < OC; ++oc) {
                        const double* gp = g + (static_cast<int64_t>(n) * OC + oc) * hw;
                        for (int ic = 0; ic < C; ++ic)
                            pw.grad[(static_cast<int64_t>(oc) * C + ic) * K + k] +=
                                dot4(xv + (static_cast<int64_t>(src_n) * C + ic) * hw, gp, hw);
                    }
                }
        }
        if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
            auto& pb = *self.parents[2];
            pb.ensure_grad();
            for (int n = 0; n < N; ++n)
                for (int oc = 0; oc < OC; ++oc) {
                    const double* gp = g + (static_cast<int64_t>(n) * OC + oc) * hw;
                    double acc = 0;
                    for (int64_t i = 0; i < hw; ++i) acc += gp[i];
                    pb.grad[oc] += acc;
                }
        }
    });
    return out;
}

// ---- conv_transpose2d ---------------------------------------------------------

Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad) {
    const auto& xs = x.shape();
    const auto& ws = w.shape();
    if (xs.size() != 4 || ws.size() != 4)
        fail_data("conv_transpose2d: expected 4D input/weight");
    const int B = xs[0], C = xs[1], H = xs[2], W = xs[3];
    if (ws[0] != C)
        fail_data("conv_transpose2d: channel mismatch " + shape_str(xs) + " vs " + shape_str(ws));
    const int OC = ws[1], KH = ws[2], KW = ws[3];
    const int OH = (H - 1) * stride - 2 * pad + KH;
    const int OW = (W - 1) * stride - 2 * pad + KW;
    if (OH <= 0 || OW <= 0) fail_data("conv_transpose2d: empty output");

    Tensor out = Tensor::zeros({B, OC, OH, OW});
    // Per batch item: colT(OC*KH*KW, H*W) = W^T x, then scatter-add each
    // kernel tap into the upsampled output (the adjoint of im2colT).
    {
        const int64_t ockk = static_cast<int64_t>(OC) * KH * KW;
        const int64_t hw = static_cast<int64_t>(H) * W;
        std::vector<double> colT(ockk * hw);
        for (int b = 0; b < B; ++b) {
            std::fill(colT.begin(), colT.end(), 0.0);
            gemm_tn(w.node->value.data(), x.node->value.data() + static_cast<int64_t>(b) * C * hw,
                    colT.data(), ockk, C, hw);
            double* o = out.node->value.data() + static_cast<int64_t>(b) * OC * OH * OW;
            if (bias.defined())
                for (int oc = 0; oc < OC; ++oc)
                    std::fill(o + static_cast<int64_t>(oc) * OH * OW,
                              o + static_cast<int64_t>(oc + 1) * OH * OW, bias.node->value[oc]);
            for (int oc = 0; oc < OC; ++oc)
                for (int ki = 0; ki < KH; ++ki)
                    for (int kj = 0; kj < KW; ++kj) {
                        const double* row =
                            colT.data() + ((static_cast<int64_t>(oc) * KH + ki) * KW + kj) * hw;
                        for (int iy = 0; iy < H; ++iy) {
                            const int oy = iy * stride - pad + ki;
                            if (oy < 0 || oy >= OH) continue;
                            double* dst = o + (static_cast<int64_t>(oc) * OH + oy) * OW;
                            const double* src = row + static_cast<int64_t>(iy) * W;
                            for (int ix = 0; ix < W; ++ix) {
                                const int ox = ix * stride - pad + kj;
                                if (ox >= 0 && ox < OW) dst[ox] += src[ix];
                            }
                        }
                    }
        }
    }

    std::vector<Tensor> parents = bias.defined() ? std::vector<Tensor>{x, w, bias}
                                                 : std::vector<Tensor>{x, w};
    detail::record(out, parents, [B, C, H, W, OC, KH, KW, stride, pad, OH, OW](TensorNode& self) {
        auto& px = *self.parents[0];
        auto& pw = *self.parents[1];
        const int64_t ockk = static_cast<int64_t>(OC) * KH * KW;
        const int64_t hw = static_cast<int64_t>(H) * W;
        if (px.requires_grad) px.ensure_grad();
        if (pw.requires_grad) pw.ensure_grad();
        // dcolT(OC*KK, H*W) gathers dOut at the scattered positions; then
        // dx = W dcolT and dW = x dcolT^T.
        std::vector<double> dcolT(ockk * hw);
        for (int b = 0; b < B; ++b) {
            const double* g = self.grad.data() + static_cast<int64_t>(b) * OC * OH * OW;
            for (int oc = 0; oc < OC; ++oc)
                for (int ki = 0; ki < KH; ++ki)
                    for (int kj = 0; kj < KW; ++kj) {
                        double* row =
                            dcolT.data() + ((static_cast<int64_t>(oc) * KH + ki) * KW + kj) * hw;
                        for (int iy = 0; iy < H; ++iy) {
                            const int oy = iy * stride - pad + ki;
                            double* dst = row + static_cast<int64_t>(iy) * W;
                            if (oy < 0 || oy >= OH) {
                                std::fill(dst, dst + W, 0.0);
                                continue;
                            }
                            const double* src = g + (static_cast<int64_t>(oc) * OH + oy) * OW;
                            for (int ix = 0; ix < W; ++ix) {
                                const int ox = ix * stride - pad + kj;
                                dst[ix] = (ox >= 0 && ox < OW) ? src[ox] : 0.0;
                            }
                        }
                    }
            if (px.requires_grad)
                gemm_nn(pw.value.data(), dcolT.data(),
                        px.grad.data() + static_cast<int64_t>(b) * C * hw, C, ockk, hw);
            if (pw.requires_grad)
                gemm_nt(px.value.data() + static_cast<int64_t>(b) * C * hw, dcolT.data(),
                        pw.grad.data(), C, hw, ockk);
        }
        if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
            auto& pb = *self.parents[2];
            pb.ensure_grad();
            const int64_t ohw = static_cast<int64_t>(OH) * OW;
            for (int b = 0; b < B; ++b)
                for (int oc = 0; oc < OC; ++oc) {
                    double acc = 0.0;
                    const double* gp =
                        self.grad.data() + (static_cast<int64_t>(b) * OC + oc) * ohw;
                    for (int64_t p = 0; p < ohw; ++p) acc += gp[p];
                    pb.grad[oc] += acc;
                }
        }
    });
    return out;
}

// ---- normalization ------------------------------------------------------------

Tensor group_norm(const Tensor& x, int groups, const Tensor& gamma, const Tensor& beta, double eps) {
    const auto& xs = x.shape();
    if (xs.size() < 2) fail_data("group_norm: need at least (B,C)");
    const int B = xs[0], C = xs[1];
    if (C % groups != 0)
        fail_data("group_norm: groups " + std::to_string(groups) + " does not divide channels " +
                  std::to_string(C));
    if (gamma.size() != C || beta.size() != C) fail_data("group_norm: gamma/beta must be (C)");
    int64_t spatial = 1;
    for (size_t i = 2; i < xs.size(); ++i) spatial *= xs[i];
    const int gc = C / groups;
    const int64_t gsz = gc * spatial;

    Tensor out = Tensor::zeros(xs);
    std::vector<double> mean_v(static_cast<size_t>(B) * groups), inv_v(static_cast<size_t>(B) * groups);
    const double* xv = x.node->value.data();
    double* ov = out.node->value.data();
    for (int b = 0; b < B; ++b)
        for (int g = 0; g < groups; ++g) {
            const double* xp = xv + (static_cast<int64_t>(b) * C + static_cast<int64_t>(g) * gc) * spatial;
            double m = 0.0;
            for (int64_t i = 0; i < gsz; ++i) m += xp[i];
            m /= gsz;
            double var = 0.0;
            for (int64_t i = 0; i < gsz; ++i) {
                const double d = xp[i] - m;
                var += d * d;
            }
            var /= gsz;
            const double inv = 1.0 / std::sqrt(var + eps);
            mean_v[b * groups + g] = m;
            inv_v[b * groups + g] = inv;
            double* op = ov + (static_cast<int64_t>(b) * C + static_cast<int64_t>(g) * gc) * spatial;
            for (int ci = 0; ci < gc; ++ci) {
                const double ga = gamma.node->value[g * gc + ci];
                const double be = beta.node->value[g * gc + ci];
                for (int64_t s = 0; s < spatial; ++s) {
                    const int64_t idx = static_cast<int64_t>(ci) * spatial + s;
                    op[idx] = (xp[idx] - m) * inv * ga + be;
                }
            }
        }

    detail::record(out, {x, gamma, beta}, [B, C, groups, gc, spatial, gsz, mean_v, inv_v](TensorNode& self) {
        auto& px = *self.parents[0];
        auto& pg = *self.parents[1];
        auto& pb = *self.parents[2];
        if (px.requires_grad) px.ensure_grad();
        if (pg.requires_grad) pg.ensure_grad();
        if (pb.requires_grad) pb.ensure_grad();
        const double* xv = px.value.data();
        const double* gv = self.grad.data();
        for (int b = 0; b < B; ++b)
            for (int g = 0; g < groups; ++g) {
                const int64_t base = (static_cast<int64_t>(b) * C + static_cast<int64_t>(g) * gc) * spatial;
                const double m = mean_v[b * groups + g];
                const double inv = inv_v[b * groups + g];
                // dxhat = g*gamma; dx = inv*(dxhat - mean(dxhat) - xhat*mean(dxhat*xhat))
                double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
                for (int ci = 0; ci < gc; ++ci) {
                    const double ga = pg.value[g * gc + ci];
                    for (int64_t s = 0; s < spatial; ++s) {
                        const int64_t idx = base + static_cast<int64_t>(ci) * spatial + s;
                        const double xhat = (xv[idx] - m) * inv;
                        const double dxhat = gv[idx] * ga;
                        sum_dxhat += dxhat;
                        sum_dxhat_xhat += dxhat * xhat;
                        if (pg.requires_grad) pg.grad[g * gc + ci] += gv[idx] * xhat;
                        if (pb.requires_grad) pb.grad[g * gc + ci] += gv[idx];
                    }
                }
                if (px.requires_grad) {
                    const double mean_dxhat = sum_dxhat / gsz;
                    const double mean_dxx = sum_dxhat_xhat / gsz;
                    for (int ci = 0; ci < gc; ++ci) {
                        const double ga = pg.value[g * gc + ci];
                        for (int64_t s = 0; s < spatial; ++s) {
                            const int64_t idx = base + static_cast<int64_t>(ci) * spatial + s;
                            const double xhat = (xv[idx] - m) * inv;
                            const double dxhat = gv[idx] * ga;
                            px.grad[idx] += inv * (dxhat - mean_dxhat - xhat * mean_dxx);
                        }
                    }
                }
            }
    });
    return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    const auto& xs = x.shape();
    const int C = xs.back();
    if (gamma.size() != C || beta.size() != C) fail_data("layer_norm: gamma/beta must match last dim");
    const int64_t rows = x.size() / C;

    Tensor out = Tensor::zeros(xs);
    std::vector<double> mean_v(rows), inv_v(rows);
    const double* xv = x.node->value.data();
    double* ov = out.node->value.data();
    for (int64_t r = 0; r < rows; ++r) {
        const double* xp = xv + r * C;
        double m = 0.0;
        for (int i = 0; i < C; ++i) m += xp[i];
        m /= C;
        double var = 0.0;
        for (int i = 0; i < C; ++i) {
            const double d = xp[i] - m;
            var += d * d;
        }
        var /= C;
        const double inv = 1.0 / std::sqrt(var + eps);
        mean_v[r] = m;
        inv_v[r] = inv;
        for (int i = 0; i < C; ++i)
            ov[r * C + i] = (xp[i] - m) * inv * gamma.node->value[i] + beta.node->value[i];
    }

    detail::record(out, {x, gamma, beta}, [C, rows, mean_v, inv_v](TensorNode& self) {
        auto& px = *self.parents[0];
        auto& pg = *self.parents[1];
        auto& pb = *self.parents[2];
        if (px.requires_grad) px.ensure_grad();
        if (pg.requires_grad) pg.ensure_grad();
        if (pb.requires_grad) pb.ensure_grad();
        const double* xv = px.value.data();
        const double* gv = self.grad.data();
        for (int64_t r = 0; r < rows; ++r) {
            const double m = mean_v[r], inv = inv_v[r];
            double sum_dxhat = 0.0, sum_dxx = 0.0;
            for (int i = 0; i < C; ++i) {
                const double xhat = (xv[r * C + i] - m) * inv;
                const double dxhat = gv[r * C + i] * pg.value[i];
                sum_dxhat += dxhat;
                sum_dxx += dxhat * xhat;
                if (pg.requires_grad) pg.grad[i] += gv[r * C + i] * xhat;
                if (pb.requires_grad) pb.grad[i] += gv[r * C + i];
            }
            if (px.requires_grad) {
                for (int i = 0; i < C; ++i) {
                    const double xhat = (xv[r * C + i] - m) * inv;
                    const double dxhat = gv[r * C + i] * pg.value[i];
                    px.grad[r * C + i] += inv * (dxhat - sum_dxhat / C - xhat * sum_dxx / C);
                }
            }
        }
    });
    return out;
}

Tensor softmax(const Tensor& x) {
    const auto& xs = x.shape();
    const int C = xs.back();
    const int64_t rows = x.size() / C;
    Tensor out = Tensor::zeros(xs);
    const double* xv = x.node->value.data();
    double* ov = out.node->value.data();
    for (int64_t r = 0; r < rows; ++r) {
        const double* xp = xv + r * C;
        double mx = xp[0];
        for (int i = 1; i < C; ++i) mx = std::max(mx, xp[i]);
        double denom = 0.0;
        for (int i = 0; i < C; ++i) {
            const double e = std::exp(xp[i] - mx);
            ov[r * C + i] = e;
            denom += e;
        }
        const double invd = 1.0 / denom;
        for (int i = 0; i < C; ++i) ov[r * C + i] *= invd;
    }
    detail::record(out, {x}, [C, rows](TensorNode& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        const double* y = self.value.data();
        const double* g = self.grad.data();
        for (int64_t r = 0; r < rows; ++r) {
            double dot = 0.0;
            for (int i = 0; i < C; ++i) dot += g[r * C + i] * y[r * C + i];
            for (int i = 0; i < C; ++i) p.grad[r * C + i] += y[r * C + i] * (g[r * C + i] - dot);
        }
    });
    return out;
}

// ---- attention ----------------------------------------------------------------

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& mask, int heads) {
    const bool batched = q.ndim() == 3;
    Tensor q3 = batched ? q : reshape(q, {1, q.dim(0), q.dim(1)});
    Tensor k3 = batched ? k : reshape(k, {1, k.dim(0), k.dim(1)});
    Tensor v3 = batched ? v : reshape(v, {1, v.dim(0), v.dim(1)});
    const int B = q3.dim(0), N = q3.dim(1), C = q3.dim(2);
    if (C % heads != 0) fail_data("attention: heads must divide width");
    const int D = C / heads;

    auto split_heads = [&](const Tensor& t) {
        // (B,N,C) -> (B*heads, N, D)
        Tensor r = reshape(t, {B, N, heads, D});
        r = permute(r, {0, 2, 1, 3});
        return reshape(r, {B * heads, N, D});
    };
    Tensor qh = split_heads(q3);
    Tensor kh = split_heads(k3);
    Tensor vh = split_heads(v3);

    Tensor scores = matmul(qh, permute(kh, {0, 2, 1}));
    scores = mul_scalar(scores, 1.0 / std::sqrt(static_cast<double>(D)));
    if (mask.defined()) scores = add(scores, mask);
    Tensor weights = softmax(scores);
    Tensor ctx = matmul(weights, vh);  // (B*heads, N, D)
    Tensor merged = reshape(ctx, {B, heads, N, D});
    merged = permute(merged, {0, 2, 1, 3});
    Tensor out = reshape(merged, {B, N, C});
    return batched ? out : reshape(out, {N, C});
}

}  // namespace vlogdesk
