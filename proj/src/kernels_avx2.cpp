// AVX2 + FMA kernel variants. This translation unit is compiled with
// -mavx2 -mfma; whether the table is offered at runtime is decided by a
// CPU feature probe in avx2_backend().

#include "lta/kernels/kernels.hpp"

#if defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>

#include <cmath>

namespace lta::kernels {

namespace {

inline float hsum256(__m256 v) {
    __m128 lo = _mm256_castps256_ps128(v);
    const __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    lo = _mm_add_ps(lo, _mm_movehl_ps(lo, lo));
    lo = _mm_add_ss(lo, _mm_shuffle_ps(lo, lo, 1));
    return _mm_cvtss_f32(lo);
}

inline float hmax256(__m256 v) {
    __m128 lo = _mm256_castps256_ps128(v);
    const __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_max_ps(lo, hi);
    lo = _mm_max_ps(lo, _mm_movehl_ps(lo, lo));
    lo = _mm_max_ss(lo, _mm_shuffle_ps(lo, lo, 1));
    return _mm_cvtss_f32(lo);
}

void conv3x3_forward_avx2(const float* in, int H, int W, int cin, const float* w,
                          const float* bias, int cout, float* out) {
    for (int y = 0; y < H; ++y) {
        const int di_lo = y > 0 ? 0 : 1;
        const int di_hi = y < H - 1 ? 3 : 2;
        for (int x = 0; x < W; ++x) {
            const int dj_lo = x > 0 ? 0 : 1;
            const int dj_hi = x < W - 1 ? 3 : 2;
            float* o = out + (static_cast<size_t>(y) * W + x) * cout;
            int co = 0;
            for (; co + 8 <= cout; co += 8) {
                __m256 acc = bias ? _mm256_loadu_ps(bias + co) : _mm256_setzero_ps();
                for (int di = di_lo; di < di_hi; ++di) {
                    const int yy = y + di - 1;
                    for (int dj = dj_lo; dj < dj_hi; ++dj) {
                        const int xx = x + dj - 1;
                        const float* ip = in + (static_cast<size_t>(yy) * W + xx) * cin;
                        const float* wp =
                            w + static_cast<size_t>((di * 3 + dj) * cin) * cout + co;
                        for (int ci = 0; ci < cin; ++ci) {
                            const __m256 v = _mm256_set1_ps(ip[ci]);
                            const __m256 wv =
                                _mm256_loadu_ps(wp + static_cast<size_t>(ci) * cout);
                            acc = _mm256_fmadd_ps(v, wv, acc);
                        }
                    }
                }
                _mm256_storeu_ps(o + co, acc);
            }
            for (; co < cout; ++co) {
                float acc = bias ? bias[co] : 0.0f;
                for (int di = di_lo; di < di_hi; ++di) {
                    const int yy = y + di - 1;
                    for (int dj = dj_lo; dj < dj_hi; ++dj) {
                        const int xx = x + dj - 1;
                        const float* ip = in + (static_cast<size_t>(yy) * W + xx) * cin;
                        const float* wp =
                            w + static_cast<size_t>((di * 3 + dj) * cin) * cout + co;
                        for (int ci = 0; ci < cin; ++ci)
                            acc += ip[ci] * wp[static_cast<size_t>(ci) * cout];
                    }
                }
                o[co] = acc;
            }
        }
    }
}

void conv3x3_backward_input_avx2(const float* dout, int H, int W, int cout,
                                 const float* w, int cin, float* din) {
    for (int u = 0; u < H; ++u) {
        for (int v = 0; v < W; ++v) {
            float* dp = din + (static_cast<size_t>(u) * W + v) * cin;
            for (int di = 0; di < 3; ++di) {
                const int y = u - di + 1;
                if (y < 0 || y >= H) continue;
                for (int dj = 0; dj < 3; ++dj) {
                    const int x = v - dj + 1;
                    if (x < 0 || x >= W) continue;
                    const float* gp = dout + (static_cast<size_t>(y) * W + x) * cout;
                    const float* wp =
                        w + static_cast<size_t>((di * 3 + dj) * cin) * cout;
                    for (int ci = 0; ci < cin; ++ci) {
                        const float* wr = wp + static_cast<size_t>(ci) * cout;
                        __m256 acc = _mm256_setzero_ps();
                        int co = 0;
                        for (; co + 8 <= cout; co += 8)
                            acc = _mm256_fmadd_ps(_mm256_loadu_ps(gp + co),
                                                  _mm256_loadu_ps(wr + co), acc);
                        float s = hsum256(acc);
                        for (; co < cout; ++co) s += gp[co] * wr[co];
                        dp[ci] += s;
                    }
                }
            }
        }
    }
}

void conv3x3_backward_params_avx2(const float* in, const float* dout, int H, int W,
                                  int cin, int cout, float* dw, float* db) {
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            const float* gp = dout + (static_cast<size_t>(y) * W + x) * cout;
            if (db) {
                int co = 0;
                for (; co + 8 <= cout; co += 8) {
                    const __m256 s = _mm256_add_ps(_mm256_loadu_ps(db + co),
                                                   _mm256_loadu_ps(gp + co));
                    _mm256_storeu_ps(db + co, s);
                }
                for (; co < cout; ++co) db[co] += gp[co];
            }
            for (int di = 0; di < 3; ++di) {
                const int yy = y + di - 1;
                if (yy < 0 || yy >= H) continue;
                for (int dj = 0; dj < 3; ++dj) {
                    const int xx = x + dj - 1;
                    if (xx < 0 || xx >= W) continue;
                    const float* ip = in + (static_cast<size_t>(yy) * W + xx) * cin;
                    float* wp = dw + static_cast<size_t>((di * 3 + dj) * cin) * cout;
                    for (int ci = 0; ci < cin; ++ci) {
                        const __m256 v = _mm256_set1_ps(ip[ci]);
                        float* wr = wp + static_cast<size_t>(ci) * cout;
                        int co = 0;
                        for (; co + 8 <= cout; co += 8) {
                            const __m256 acc = _mm256_fmadd_ps(
                                v, _mm256_loadu_ps(gp + co), _mm256_loadu_ps(wr + co));
                            _mm256_storeu_ps(wr + co, acc);
                        }
                        for (; co < cout; ++co) wr[co] += ip[ci] * gp[co];
                    }
                }
            }
        }
    }
}

// Vectorized max and normalize; exp and its running sum stay scalar, so the
// result is bit-identical to the scalar backend.
void softmax_channels_avx2(const float* x, size_t ncoord, int C, float* out) {
    for (size_t i = 0; i < ncoord; ++i) {
        const float* xi = x + i * C;
        float* oi = out + i * C;
        float m;
        int k = 0;
        if (C >= 8) {
            __m256 vm = _mm256_loadu_ps(xi);
            for (k = 8; k + 8 <= C; k += 8)
                vm = _mm256_max_ps(vm, _mm256_loadu_ps(xi + k));
            m = hmax256(vm);
        } else {
            m = xi[0];
            k = 1;
        }
        for (; k < C; ++k) m = std::max(m, xi[k]);
        float sum = 0.0f;
        for (int j = 0; j < C; ++j) {
            oi[j] = std::exp(xi[j] - m);
            sum += oi[j];
        }
        const float recip = 1.0f / sum;
        const __m256 vr = _mm256_set1_ps(recip);
        int j = 0;
        for (; j + 8 <= C; j += 8)
            _mm256_storeu_ps(oi + j, _mm256_mul_ps(_mm256_loadu_ps(oi + j), vr));
        for (; j < C; ++j) oi[j] *= recip;
    }
}

void relu_forward_avx2(const float* x, float* y, size_t n) {
    const __m256 z = _mm256_setzero_ps();
    size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_max_ps(_mm256_loadu_ps(x + i), z));
    for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_backward_avx2(const float* y, const float* dy, float* dx, size_t n) {
    const __m256 z = _mm256_setzero_ps();
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(y + i), z, _CMP_GT_OQ);
        _mm256_storeu_ps(dx + i, _mm256_and_ps(_mm256_loadu_ps(dy + i), mask));
    }
    for (; i < n; ++i) dx[i] = y[i] > 0.0f ? dy[i] : 0.0f;
}

void axpy_avx2(float a, const float* x, float* y, size_t n) {
    const __m256 va = _mm256_set1_ps(a);
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 acc =
            _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i));
        _mm256_storeu_ps(y + i, acc);
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

float dot_avx2(const float* a, const float* b, size_t n) {
    __m256 acc = _mm256_setzero_ps();
    size_t i = 0;
    for (; i + 8 <= n; i += 8)
        acc = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc);
    float s = hsum256(acc);
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

float sum_sq_diff_avx2(const float* a, const float* b, size_t n) {
    __m256 acc = _mm256_setzero_ps();
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 d = _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i));
        acc = _mm256_fmadd_ps(d, d, acc);
    }
    float s = hsum256(acc);
    for (; i < n; ++i) {
        const float d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

float reduce_sum_avx2(const float* x, size_t n) {
    __m256 acc = _mm256_setzero_ps();
    size_t i = 0;
    for (; i + 8 <= n; i += 8) acc = _mm256_add_ps(acc, _mm256_loadu_ps(x + i));
    float s = hsum256(acc);
    for (; i < n; ++i) s += x[i];
    return s;
}

const Backend kAvx2 = {
    "avx2",
    conv3x3_forward_avx2,
    conv3x3_backward_input_avx2,
    conv3x3_backward_params_avx2,
    softmax_channels_avx2,
    relu_forward_avx2,
    relu_backward_avx2,
    axpy_avx2,
    dot_avx2,
    sum_sq_diff_avx2,
    reduce_sum_avx2,
};

}  // namespace

const Backend* avx2_backend() {
    static const bool ok =
        __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
    return ok ? &kAvx2 : nullptr;
}

}  // namespace lta::kernels

#else  // no AVX2 at compile time

namespace lta::kernels {
const Backend* avx2_backend() { return nullptr; }
}  // namespace lta::kernels

#endif
