#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>

namespace lta::kernels {

// Scalar reference kernels. Templated so the gradient checks can run the
// exact same code paths in double precision. Conv weights use layout
// w[((di*3 + dj)*cin + ci)*cout + co]: the output-channel dimension is
// contiguous, which is also what the SIMD variants vectorize over.
//
// Conventions: forward kernels overwrite their output, backward kernels
// accumulate into their gradient outputs.

template <typename T>
void conv3x3_forward_ref(const T* in, int H, int W, int cin, const T* w, const T* bias,
                         int cout, T* out) {
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            T* o = out + (static_cast<size_t>(y) * W + x) * cout;
            for (int co = 0; co < cout; ++co) o[co] = bias ? bias[co] : T(0);
            for (int di = 0; di < 3; ++di) {
                const int yy = y + di - 1;
                if (yy < 0 || yy >= H) continue;
                for (int dj = 0; dj < 3; ++dj) {
                    const int xx = x + dj - 1;
                    if (xx < 0 || xx >= W) continue;
                    const T* ip = in + (static_cast<size_t>(yy) * W + xx) * cin;
                    const T* wp = w + static_cast<size_t>((di * 3 + dj) * cin) * cout;
                    for (int ci = 0; ci < cin; ++ci) {
                        const T v = ip[ci];
                        const T* wr = wp + static_cast<size_t>(ci) * cout;
                        for (int co = 0; co < cout; ++co) o[co] += v * wr[co];
                    }
                }
            }
        }
    }
}

template <typename T>
void conv3x3_backward_input_ref(const T* dout, int H, int W, int cout, const T* w,
                                int cin, T* din) {
    for (int u = 0; u < H; ++u) {
        for (int v = 0; v < W; ++v) {
            T* dp = din + (static_cast<size_t>(u) * W + v) * cin;
            for (int di = 0; di < 3; ++di) {
                const int y = u - di + 1;
                if (y < 0 || y >= H) continue;
                for (int dj = 0; dj < 3; ++dj) {
                    const int x = v - dj + 1;
                    if (x < 0 || x >= W) continue;
                    const T* gp = dout + (static_cast<size_t>(y) * W + x) * cout;
                    const T* wp = w + static_cast<size_t>((di * 3 + dj) * cin) * cout;
                    for (int ci = 0; ci < cin; ++ci) {
                        const T* wr = wp + static_cast<size_t>(ci) * cout;
                        T acc = T(0);
                        for (int co = 0; co < cout; ++co) acc += gp[co] * wr[co];
                        dp[ci] += acc;
                    }
                }
            }
        }
    }
}

template <typename T>
void conv3x3_backward_params_ref(const T* in, const T* dout, int H, int W, int cin,
                                 int cout, T* dw, T* db) {
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            const T* gp = dout + (static_cast<size_t>(y) * W + x) * cout;
            if (db)
                for (int co = 0; co < cout; ++co) db[co] += gp[co];
            for (int di = 0; di < 3; ++di) {
                const int yy = y + di - 1;
                if (yy < 0 || yy >= H) continue;
                for (int dj = 0; dj < 3; ++dj) {
                    const int xx = x + dj - 1;
                    if (xx < 0 || xx >= W) continue;
                    const T* ip = in + (static_cast<size_t>(yy) * W + xx) * cin;
                    T* wp = dw + static_cast<size_t>((di * 3 + dj) * cin) * cout;
                    for (int ci = 0; ci < cin; ++ci) {
                        const T v = ip[ci];
                        T* wr = wp + static_cast<size_t>(ci) * cout;
                        for (int co = 0; co < cout; ++co) wr[co] += v * gp[co];
                    }
                }
            }
        }
    }
}

// Channel-wise softmax with max subtraction, one simplex per coordinate.
template <typename T>
void softmax_channels_ref(const T* x, size_t ncoord, int C, T* out) {
    for (size_t i = 0; i < ncoord; ++i) {
        const T* xi = x + i * C;
        T* oi = out + i * C;
        T m = xi[0];
        for (int k = 1; k < C; ++k) m = std::max(m, xi[k]);
        T sum = T(0);
        for (int k = 0; k < C; ++k) {
            oi[k] = std::exp(xi[k] - m);
            sum += oi[k];
        }
        const T recip = T(1) / sum;
        for (int k = 0; k < C; ++k) oi[k] *= recip;
    }
}

template <typename T>
void relu_forward_ref(const T* x, T* y, size_t n) {
    for (size_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

// y is the post-activation value; dx may alias dy.
template <typename T>
void relu_backward_ref(const T* y, const T* dy, T* dx, size_t n) {
    for (size_t i = 0; i < n; ++i) dx[i] = y[i] > T(0) ? dy[i] : T(0);
}

template <typename T>
void axpy_ref(T a, const T* x, T* y, size_t n) {
    for (size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

template <typename T>
T dot_ref(const T* a, const T* b, size_t n) {
    T acc = T(0);
    for (size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

template <typename T>
T sum_sq_diff_ref(const T* a, const T* b, size_t n) {
    T acc = T(0);
    for (size_t i = 0; i < n; ++i) {
        const T d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

template <typename T>
T reduce_sum_ref(const T* x, size_t n) {
    T acc = T(0);
    for (size_t i = 0; i < n; ++i) acc += x[i];
    return acc;
}

}  // namespace lta::kernels
