#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "lta/kernels/kernels.hpp"
#include "lta/rng.hpp"
#include "lta/tensor.hpp"

namespace lta {

// 3x3 convolution, stride 1, zero padding 1. Spatial dims pass through
// unchanged, so activation maps keep the latent resolution.
template <typename T>
struct Conv3x3 {
    int cin = 0, cout = 0;
    bool use_bias = true;   // bias-free convs keep activations content-driven
    std::vector<T> w, b;    // w layout [di][dj][cin][cout]
    std::vector<T> gw, gb;

    void init(int cin_, int cout_, Rng& rng, bool use_bias_ = true) {
        cin = cin_;
        cout = cout_;
        use_bias = use_bias_;
        const size_t nw = static_cast<size_t>(9) * cin * cout;
        w.resize(nw);
        b.assign(static_cast<size_t>(cout), T(0));
        gw.assign(nw, T(0));
        gb.assign(static_cast<size_t>(cout), T(0));
        const double s = std::sqrt(6.0 / (9.0 * cin));  // He-style uniform fan-in bound
        for (T& v : w) v = static_cast<T>(rng.uniform(-s, s));
    }

    void forward(const T* in, int H, int W, T* out) const {
        kernels::conv3x3_forward(in, H, W, cin, w.data(), b.data(), cout, out);
    }

    // Accumulates parameter grads; accumulates input grad when din != nullptr.
    void backward(const T* in, const T* dout, int H, int W, T* din) {
        kernels::conv3x3_backward_params(in, dout, H, W, cin, cout, gw.data(), gb.data());
        if (din) kernels::conv3x3_backward_input(dout, H, W, cout, w.data(), cin, din);
    }

    void zero_grad() {
        std::fill(gw.begin(), gw.end(), T(0));
        std::fill(gb.begin(), gb.end(), T(0));
    }

    void sgd_step(T lr) {
        kernels::axpy(-lr, gw.data(), w.data(), w.size());
        if (use_bias) kernels::axpy(-lr, gb.data(), b.data(), b.size());
    }
};

template <typename T>
struct Dense {
    int nin = 0, nout = 0;
    std::vector<T> w, b;    // w layout [out][in]
    std::vector<T> gw, gb;

    void init(int nin_, int nout_, Rng& rng) {
        nin = nin_;
        nout = nout_;
        w.resize(static_cast<size_t>(nin) * nout);
        b.assign(static_cast<size_t>(nout), T(0));
        gw.assign(w.size(), T(0));
        gb.assign(b.size(), T(0));
        const double s = std::sqrt(6.0 / static_cast<double>(nin));  // He-style uniform fan-in bound
        for (T& v : w) v = static_cast<T>(rng.uniform(-s, s));
    }

    void forward(const T* x, T* out) const {
        for (int o = 0; o < nout; ++o)
            out[o] = b[o] + kernels::dot(w.data() + static_cast<size_t>(o) * nin, x,
                                         static_cast<size_t>(nin));
    }

    void backward(const T* x, const T* dout, T* dx) {
        for (int o = 0; o < nout; ++o) {
            const T g = dout[o];
            gb[o] += g;
            T* gr = gw.data() + static_cast<size_t>(o) * nin;
            const T* wr = w.data() + static_cast<size_t>(o) * nin;
            for (int i = 0; i < nin; ++i) {
                gr[i] += g * x[i];
                if (dx) dx[i] += g * wr[i];
            }
        }
    }

    void zero_grad() {
        std::fill(gw.begin(), gw.end(), T(0));
        std::fill(gb.begin(), gb.end(), T(0));
    }

    void sgd_step(T lr) {
        kernels::axpy(-lr, gw.data(), w.data(), w.size());
        kernels::axpy(-lr, gb.data(), b.data(), b.size());
    }
};

// Channel-wise softmax over the last dim of an (H, W, C') tensor; each
// spatial coordinate ends up on the C'-simplex. Max subtraction keeps the
// exponentials in range. temperature divides the logits before the softmax:
// 1 (the default everywhere in the pipeline) leaves them untouched, smaller
// values sharpen the simplex, larger ones flatten it. Throws NumericError on
// non-finite input.
template <typename T>
TensorT<T> channelwise_softmax(const TensorT<T>& logits, T temperature = T(1)) {
    if (logits.rank() != 3) throw ShapeError("channelwise_softmax: rank-3 tensor expected");
    if (!(temperature > T(0)))
        throw ConfigError("channelwise_softmax: temperature must be > 0");
    if (!logits.all_finite()) throw NumericError("channelwise_softmax: non-finite logits");
    TensorT<T> out(logits.shape());
    const size_t ncoord = static_cast<size_t>(logits.dim(0)) * logits.dim(1);
    const int C = static_cast<int>(logits.dim(2));
    if (temperature == T(1)) {
        kernels::softmax_channels(logits.data(), ncoord, C, out.data());
    } else {
        TensorT<T> scaled(logits.shape());
        const T inv = T(1) / temperature;
        for (size_t i = 0; i < logits.numel(); ++i) scaled[i] = logits[i] * inv;
        kernels::softmax_channels(scaled.data(), ncoord, C, out.data());
    }
    return out;
}

// Per spatial coordinate, selects channel k with probability p[i,j,k].
Tensor sample_onehot(const Tensor& p, uint64_t seed);

bool is_simplex(const Tensor& t, float tol = 1e-5f);
bool is_binary_onehot(const Tensor& t);

// Student S: latent (H, W, C) -> sparse logits (H, W, C'), softmaxed.
template <typename T>
struct StudentNet {
    int in_c = 0, hidden = 0, sparse_c = 0;
    Conv3x3<T> c1, c2, c3;

    static StudentNet make(int in_c, int hidden, int sparse_c, Rng& rng) {
        StudentNet n;
        n.in_c = in_c;
        n.hidden = hidden;
        n.sparse_c = sparse_c;
        n.c1.init(in_c, hidden, rng);
        n.c2.init(hidden, hidden, rng);
        n.c3.init(hidden, sparse_c, rng);
        return n;
    }

    struct Cache {
        int H = 0, W = 0;
        std::vector<T> x, a1, a2, logits, probs;
    };

    void forward(const TensorT<T>& z, Cache& cc) const {
        if (z.rank() != 3 || static_cast<int>(z.dim(2)) != in_c)
            throw ShapeError("student: input channels do not match");
        cc.H = static_cast<int>(z.dim(0));
        cc.W = static_cast<int>(z.dim(1));
        const size_t hw = static_cast<size_t>(cc.H) * cc.W;
        cc.x.assign(z.data(), z.data() + z.numel());
        cc.a1.resize(hw * hidden);
        cc.a2.resize(hw * hidden);
        cc.logits.resize(hw * sparse_c);
        cc.probs.resize(hw * sparse_c);
        c1.forward(cc.x.data(), cc.H, cc.W, cc.a1.data());
        kernels::relu_forward(cc.a1.data(), cc.a1.data(), cc.a1.size());
        c2.forward(cc.a1.data(), cc.H, cc.W, cc.a2.data());
        kernels::relu_forward(cc.a2.data(), cc.a2.data(), cc.a2.size());
        c3.forward(cc.a2.data(), cc.H, cc.W, cc.logits.data());
        kernels::softmax_channels(cc.logits.data(), hw, sparse_c, cc.probs.data());
    }

    // dprobs: gradient w.r.t. the softmax output. Chains through the
    // softmax Jacobian, then the conv stack; accumulates parameter grads.
    void backward(const Cache& cc, const std::vector<T>& dprobs) {
        const size_t hw = static_cast<size_t>(cc.H) * cc.W;
        std::vector<T> dlogits(hw * sparse_c);
        for (size_t i = 0; i < hw; ++i) {
            const T* p = cc.probs.data() + i * sparse_c;
            const T* dp = dprobs.data() + i * sparse_c;
            T inner = T(0);
            for (int k = 0; k < sparse_c; ++k) inner += dp[k] * p[k];
            T* dl = dlogits.data() + i * sparse_c;
            for (int k = 0; k < sparse_c; ++k) dl[k] = p[k] * (dp[k] - inner);
        }
        std::vector<T> da2(cc.a2.size(), T(0));
        c3.backward(cc.a2.data(), dlogits.data(), cc.H, cc.W, da2.data());
        kernels::relu_backward(cc.a2.data(), da2.data(), da2.data(), da2.size());
        std::vector<T> da1(cc.a1.size(), T(0));
        c2.backward(cc.a1.data(), da2.data(), cc.H, cc.W, da1.data());
        kernels::relu_backward(cc.a1.data(), da1.data(), da1.data(), da1.size());
        c1.backward(cc.x.data(), da1.data(), cc.H, cc.W, nullptr);
    }

    void zero_grad() {
        c1.zero_grad();
        c2.zero_grad();
        c3.zero_grad();
    }
    void sgd_step(T lr) {
        c1.sgd_step(lr);
        c2.sgd_step(lr);
        c3.sgd_step(lr);
    }

    template <typename Fn>
    void for_each_param(Fn fn) {
        fn("c1_w", c1.w, c1.gw, std::vector<uint32_t>{3, 3, uint32_t(c1.cin), uint32_t(c1.cout)});
        fn("c1_b", c1.b, c1.gb, std::vector<uint32_t>{uint32_t(c1.cout)});
        fn("c2_w", c2.w, c2.gw, std::vector<uint32_t>{3, 3, uint32_t(c2.cin), uint32_t(c2.cout)});
        fn("c2_b", c2.b, c2.gb, std::vector<uint32_t>{uint32_t(c2.cout)});
        fn("c3_w", c3.w, c3.gw, std::vector<uint32_t>{3, 3, uint32_t(c3.cin), uint32_t(c3.cout)});
        fn("c3_b", c3.b, c3.gb, std::vector<uint32_t>{uint32_t(c3.cout)});
    }
};

// Decoder D: sparse (H, W, C') -> latent (H, W, C).
template <typename T>
struct DecoderNet {
    int in_c = 0, hidden = 0, out_c = 0;
    Conv3x3<T> c1, c2, c3;

    static DecoderNet make(int in_c, int hidden, int out_c, Rng& rng) {
        DecoderNet n;
        n.in_c = in_c;
        n.hidden = hidden;
        n.out_c = out_c;
        n.c1.init(in_c, hidden, rng);
        n.c2.init(hidden, hidden, rng);
        n.c3.init(hidden, out_c, rng);
        return n;
    }

    struct Cache {
        int H = 0, W = 0;
        std::vector<T> x, a1, a2, out;
    };

    void forward(const TensorT<T>& zs, Cache& cc) const {
        if (zs.rank() != 3 || static_cast<int>(zs.dim(2)) != in_c)
            throw ShapeError("decoder: input channels do not match");
        cc.H = static_cast<int>(zs.dim(0));
        cc.W = static_cast<int>(zs.dim(1));
        const size_t hw = static_cast<size_t>(cc.H) * cc.W;
        cc.x.assign(zs.data(), zs.data() + zs.numel());
        cc.a1.resize(hw * hidden);
        cc.a2.resize(hw * hidden);
        cc.out.resize(hw * out_c);
        c1.forward(cc.x.data(), cc.H, cc.W, cc.a1.data());
        kernels::relu_forward(cc.a1.data(), cc.a1.data(), cc.a1.size());
        c2.forward(cc.a1.data(), cc.H, cc.W, cc.a2.data());
        kernels::relu_forward(cc.a2.data(), cc.a2.data(), cc.a2.size());
        c3.forward(cc.a2.data(), cc.H, cc.W, cc.out.data());
    }

    // Accumulates parameter grads and the input grad (into dinput).
    void backward(const Cache& cc, const std::vector<T>& dout, std::vector<T>& dinput) {
        std::vector<T> da2(cc.a2.size(), T(0));
        c3.backward(cc.a2.data(), dout.data(), cc.H, cc.W, da2.data());
        kernels::relu_backward(cc.a2.data(), da2.data(), da2.data(), da2.size());
        std::vector<T> da1(cc.a1.size(), T(0));
        c2.backward(cc.a1.data(), da2.data(), cc.H, cc.W, da1.data());
        kernels::relu_backward(cc.a1.data(), da1.data(), da1.data(), da1.size());
        c1.backward(cc.x.data(), da1.data(), cc.H, cc.W, dinput.data());
    }

    void zero_grad() {
        c1.zero_grad();
        c2.zero_grad();
        c3.zero_grad();
    }
    void sgd_step(T lr) {
        c1.sgd_step(lr);
        c2.sgd_step(lr);
        c3.sgd_step(lr);
    }

    template <typename Fn>
    void for_each_param(Fn fn) {
        fn("c1_w", c1.w, c1.gw, std::vector<uint32_t>{3, 3, uint32_t(c1.cin), uint32_t(c1.cout)});
        fn("c1_b", c1.b, c1.gb, std::vector<uint32_t>{uint32_t(c1.cout)});
        fn("c2_w", c2.w, c2.gw, std::vector<uint32_t>{3, 3, uint32_t(c2.cin), uint32_t(c2.cout)});
        fn("c2_b", c2.b, c2.gb, std::vector<uint32_t>{uint32_t(c2.cout)});
        fn("c3_w", c3.w, c3.gw, std::vector<uint32_t>{3, 3, uint32_t(c3.cin), uint32_t(c3.cout)});
        fn("c3_b", c3.b, c3.gb, std::vector<uint32_t>{uint32_t(c3.cout)});
    }
};

// Classifier C: sparse (H, W, C') -> K sigmoid scores. Two stride-1 convs,
// global average pool, linear head. The post-ReLU activations of the last
// conv are kept at full (H, W) resolution for CAM generation.
template <typename T>
struct ClassifierNet {
    int in_c = 0, hidden = 0, n_classes = 0;
    Conv3x3<T> c1, c2;
    Dense<T> head;

    int feat_channels() const { return hidden; }

    static ClassifierNet make(int in_c, int hidden, int n_classes, Rng& rng) {
        ClassifierNet n;
        n.in_c = in_c;
        n.hidden = hidden;
        n.n_classes = n_classes;
        // Bias-free convs: without a per-channel pedestal the activation maps
        // stay content-driven, which keeps their dominant singular direction
        // aligned with class evidence rather than a constant background.
        n.c1.init(in_c, hidden, rng, /*use_bias=*/false);
        n.c2.init(hidden, hidden, rng, /*use_bias=*/false);
        n.head.init(hidden, n_classes, rng);
        return n;
    }

    struct Cache {
        int H = 0, W = 0;
        std::vector<T> x, a1, feat, pooled, logits, scores;
    };

    void forward(const TensorT<T>& zs, Cache& cc) const {
        if (zs.rank() != 3 || static_cast<int>(zs.dim(2)) != in_c)
            throw ShapeError("classifier: input channels do not match");
        cc.H = static_cast<int>(zs.dim(0));
        cc.W = static_cast<int>(zs.dim(1));
        const size_t hw = static_cast<size_t>(cc.H) * cc.W;
        cc.x.assign(zs.data(), zs.data() + zs.numel());
        cc.a1.resize(hw * hidden);
        cc.feat.resize(hw * hidden);
        cc.pooled.assign(static_cast<size_t>(hidden), T(0));
        cc.logits.resize(static_cast<size_t>(n_classes));
        cc.scores.resize(static_cast<size_t>(n_classes));
        c1.forward(cc.x.data(), cc.H, cc.W, cc.a1.data());
        kernels::relu_forward(cc.a1.data(), cc.a1.data(), cc.a1.size());
        c2.forward(cc.a1.data(), cc.H, cc.W, cc.feat.data());
        kernels::relu_forward(cc.feat.data(), cc.feat.data(), cc.feat.size());
        for (size_t i = 0; i < hw; ++i)
            for (int c = 0; c < hidden; ++c) cc.pooled[c] += cc.feat[i * hidden + c];
        const T inv = T(1) / static_cast<T>(hw);
        for (T& v : cc.pooled) v *= inv;
        head.forward(cc.pooled.data(), cc.logits.data());
        for (int k = 0; k < n_classes; ++k)
            cc.scores[k] = T(1) / (T(1) + std::exp(-cc.logits[k]));
    }

    // dscores: gradient w.r.t. the sigmoid outputs. Accumulates parameter
    // grads; accumulates the input grad when dinput != nullptr.
    void backward(const Cache& cc, const std::vector<T>& dscores, std::vector<T>* dinput) {
        std::vector<T> dlogits(static_cast<size_t>(n_classes));
        for (int k = 0; k < n_classes; ++k)
            dlogits[k] = dscores[k] * cc.scores[k] * (T(1) - cc.scores[k]);
        backward_from_logits(cc, dlogits, dinput);
    }

    // dlogits: gradient w.r.t. the pre-sigmoid logits. Used by the trainer
    // with the fused cross-entropy gradient (score - target), which stays
    // bounded when a logit saturates and lets a confidently wrong head
    // recover; elsewhere it equals the chain through the sigmoid exactly.
    void backward_from_logits(const Cache& cc, const std::vector<T>& dlogits,
                              std::vector<T>* dinput) {
        const size_t hw = static_cast<size_t>(cc.H) * cc.W;
        std::vector<T> dpooled(static_cast<size_t>(hidden), T(0));
        head.backward(cc.pooled.data(), dlogits.data(), dpooled.data());
        std::vector<T> dfeat(cc.feat.size());
        const T inv = T(1) / static_cast<T>(hw);
        for (size_t i = 0; i < hw; ++i)
            for (int c = 0; c < hidden; ++c) dfeat[i * hidden + c] = dpooled[c] * inv;
        kernels::relu_backward(cc.feat.data(), dfeat.data(), dfeat.data(), dfeat.size());
        std::vector<T> da1(cc.a1.size(), T(0));
        c2.backward(cc.a1.data(), dfeat.data(), cc.H, cc.W, da1.data());
        kernels::relu_backward(cc.a1.data(), da1.data(), da1.data(), da1.size());
        c1.backward(cc.x.data(), da1.data(), cc.H, cc.W, dinput ? dinput->data() : nullptr);
    }

    void zero_grad() {
        c1.zero_grad();
        c2.zero_grad();
        head.zero_grad();
    }
    void sgd_step(T lr) {
        c1.sgd_step(lr);
        c2.sgd_step(lr);
        head.sgd_step(lr);
    }

    template <typename Fn>
    void for_each_param(Fn fn) {
        fn("c1_w", c1.w, c1.gw, std::vector<uint32_t>{3, 3, uint32_t(c1.cin), uint32_t(c1.cout)});
        fn("c1_b", c1.b, c1.gb, std::vector<uint32_t>{uint32_t(c1.cout)});
        fn("c2_w", c2.w, c2.gw, std::vector<uint32_t>{3, 3, uint32_t(c2.cin), uint32_t(c2.cout)});
        fn("c2_b", c2.b, c2.gb, std::vector<uint32_t>{uint32_t(c2.cout)});
        fn("head_w", head.w, head.gw, std::vector<uint32_t>{uint32_t(head.nout), uint32_t(head.nin)});
        fn("head_b", head.b, head.gb, std::vector<uint32_t>{uint32_t(head.nout)});
    }
};

struct ClassScores {
    std::vector<float> scores;  // K sigmoid outputs
    Tensor activations;         // (H, W, C_a) last-conv activations
};

Tensor student_forward(const StudentNet<float>& s, const Tensor& z);
Tensor decoder_forward(const DecoderNet<float>& d, const Tensor& zs);
ClassScores classifier_forward(const ClassifierNet<float>& c, const Tensor& zs);

// Checkpoints: a directory holding one LTA1 file per named parameter
// tensor plus meta.json {architecture, channel dims, generation}.
void save_student(StudentNet<float>& n, const std::filesystem::path& dir, int generation);
void save_decoder(DecoderNet<float>& n, const std::filesystem::path& dir, int generation);
void save_classifier(ClassifierNet<float>& n, const std::filesystem::path& dir, int generation);
StudentNet<float> load_student(const std::filesystem::path& dir);
DecoderNet<float> load_decoder(const std::filesystem::path& dir);
ClassifierNet<float> load_classifier(const std::filesystem::path& dir);

}  // namespace lta
