#pragma once

#include <cstddef>
#include <string>

#include "lta/kernels/scalar_ref.hpp"

namespace lta::kernels {

// Single-precision kernel table. One scalar reference implementation, one
// AVX2 variant; the active table is picked once at startup from the CPU
// (override with LTA_KERNELS=scalar|avx2).
struct Backend {
    const char* name;
    void (*conv3x3_forward)(const float* in, int H, int W, int cin, const float* w,
                            const float* bias, int cout, float* out);
    void (*conv3x3_backward_input)(const float* dout, int H, int W, int cout,
                                   const float* w, int cin, float* din);
    void (*conv3x3_backward_params)(const float* in, const float* dout, int H, int W,
                                    int cin, int cout, float* dw, float* db);
    void (*softmax_channels)(const float* x, size_t ncoord, int C, float* out);
    void (*relu_forward)(const float* x, float* y, size_t n);
    void (*relu_backward)(const float* y, const float* dy, float* dx, size_t n);
    void (*axpy)(float a, const float* x, float* y, size_t n);
    float (*dot)(const float* a, const float* b, size_t n);
    float (*sum_sq_diff)(const float* a, const float* b, size_t n);
    float (*reduce_sum)(const float* x, size_t n);
};

const Backend& scalar_backend();

// Null when the binary was built without AVX2 support or the CPU lacks it.
const Backend* avx2_backend();

const Backend& active();
void force_backend(const Backend& b);

// Dispatched entry points. The float overloads go through the active
// backend; other scalar types always take the reference path.
inline void conv3x3_forward(const float* in, int H, int W, int cin, const float* w,
                            const float* bias, int cout, float* out) {
    active().conv3x3_forward(in, H, W, cin, w, bias, cout, out);
}
template <typename T>
void conv3x3_forward(const T* in, int H, int W, int cin, const T* w, const T* bias,
                     int cout, T* out) {
    conv3x3_forward_ref(in, H, W, cin, w, bias, cout, out);
}

inline void conv3x3_backward_input(const float* dout, int H, int W, int cout,
                                   const float* w, int cin, float* din) {
    active().conv3x3_backward_input(dout, H, W, cout, w, cin, din);
}
template <typename T>
void conv3x3_backward_input(const T* dout, int H, int W, int cout, const T* w, int cin,
                            T* din) {
    conv3x3_backward_input_ref(dout, H, W, cout, w, cin, din);
}

inline void conv3x3_backward_params(const float* in, const float* dout, int H, int W,
                                    int cin, int cout, float* dw, float* db) {
    active().conv3x3_backward_params(in, dout, H, W, cin, cout, dw, db);
}
template <typename T>
void conv3x3_backward_params(const T* in, const T* dout, int H, int W, int cin, int cout,
                             T* dw, T* db) {
    conv3x3_backward_params_ref(in, dout, H, W, cin, cout, dw, db);
}

inline void softmax_channels(const float* x, size_t ncoord, int C, float* out) {
    active().softmax_channels(x, ncoord, C, out);
}
template <typename T>
void softmax_channels(const T* x, size_t ncoord, int C, T* out) {
    softmax_channels_ref(x, ncoord, C, out);
}

inline void relu_forward(const float* x, float* y, size_t n) {
    active().relu_forward(x, y, n);
}
template <typename T>
void relu_forward(const T* x, T* y, size_t n) {
    relu_forward_ref(x, y, n);
}

inline void relu_backward(const float* y, const float* dy, float* dx, size_t n) {
    active().relu_backward(y, dy, dx, n);
}
template <typename T>
void relu_backward(const T* y, const T* dy, T* dx, size_t n) {
    relu_backward_ref(y, dy, dx, n);
}

inline void axpy(float a, const float* x, float* y, size_t n) {
    active().axpy(a, x, y, n);
}
template <typename T>
void axpy(T a, const T* x, T* y, size_t n) {
    axpy_ref(a, x, y, n);
}

inline float dot(const float* a, const float* b, size_t n) {
    return active().dot(a, b, n);
}
template <typename T>
T dot(const T* a, const T* b, size_t n) {
    return dot_ref(a, b, n);
}

inline float sum_sq_diff(const float* a, const float* b, size_t n) {
    return active().sum_sq_diff(a, b, n);
}
template <typename T>
T sum_sq_diff(const T* a, const T* b, size_t n) {
    return sum_sq_diff_ref(a, b, n);
}

inline float reduce_sum(const float* x, size_t n) { return active().reduce_sum(x, n); }
template <typename T>
T reduce_sum(const T* x, size_t n) {
    return reduce_sum_ref(x, n);
}

}  // namespace lta::kernels
