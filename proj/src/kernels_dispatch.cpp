#include "lta/kernels/kernels.hpp"

#include <cstdlib>
#include <cstring>

#include "lta/errors.hpp"

namespace lta::kernels {

namespace {

void conv3x3_forward_s(const float* in, int H, int W, int cin, const float* w,
                       const float* bias, int cout, float* out) {
    conv3x3_forward_ref(in, H, W, cin, w, bias, cout, out);
}
void conv3x3_backward_input_s(const float* dout, int H, int W, int cout, const float* w,
                              int cin, float* din) {
    conv3x3_backward_input_ref(dout, H, W, cout, w, cin, din);
}
void conv3x3_backward_params_s(const float* in, const float* dout, int H, int W, int cin,
                               int cout, float* dw, float* db) {
    conv3x3_backward_params_ref(in, dout, H, W, cin, cout, dw, db);
}
void softmax_channels_s(const float* x, size_t ncoord, int C, float* out) {
    softmax_channels_ref(x, ncoord, C, out);
}
void relu_forward_s(const float* x, float* y, size_t n) { relu_forward_ref(x, y, n); }
void relu_backward_s(const float* y, const float* dy, float* dx, size_t n) {
    relu_backward_ref(y, dy, dx, n);
}
void axpy_s(float a, const float* x, float* y, size_t n) { axpy_ref(a, x, y, n); }
float dot_s(const float* a, const float* b, size_t n) { return dot_ref(a, b, n); }
float sum_sq_diff_s(const float* a, const float* b, size_t n) {
    return sum_sq_diff_ref(a, b, n);
}
float reduce_sum_s(const float* x, size_t n) { return reduce_sum_ref(x, n); }

const Backend kScalar = {
    "scalar",
    conv3x3_forward_s,
    conv3x3_backward_input_s,
    conv3x3_backward_params_s,
    softmax_channels_s,
    relu_forward_s,
    relu_backward_s,
    axpy_s,
    dot_s,
    sum_sq_diff_s,
    reduce_sum_s,
};

const Backend* g_forced = nullptr;

const Backend& resolve() {
    const char* env = std::getenv("LTA_KERNELS");
    if (env && std::strlen(env) > 0 && std::strcmp(env, "auto") != 0) {
        if (std::strcmp(env, "scalar") == 0) return kScalar;
        if (std::strcmp(env, "avx2") == 0) {
            const Backend* b = avx2_backend();
            if (!b) throw ConfigError("LTA_KERNELS=avx2 but AVX2 is unavailable");
            return *b;
        }
        throw ConfigError(std::string("LTA_KERNELS: unknown backend '") + env + "'");
    }
    const Backend* b = avx2_backend();
    return b ? *b : kScalar;
}

}  // namespace

const Backend& scalar_backend() { return kScalar; }

const Backend& active() {
    if (g_forced) return *g_forced;
    static const Backend& picked = resolve();
    return picked;
}

void force_backend(const Backend& b) { g_forced = &b; }

}  // namespace lta::kernels
