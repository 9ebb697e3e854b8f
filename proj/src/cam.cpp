#include "lta/cam.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "lta/errors.hpp"

namespace lta {

namespace {

// Top eigenvector of a symmetric PSD matrix by power iteration, started from
// the coordinate axis with the largest diagonal entry. g is row-major n x n.
std::vector<double> top_eigvec(const std::vector<double>& g, int n) {
    int start = 0;
    for (int i = 1; i < n; ++i)
        if (g[static_cast<size_t>(i) * n + i] > g[static_cast<size_t>(start) * n + start])
            start = i;
    std::vector<double> v(static_cast<size_t>(n), 0.0), u(static_cast<size_t>(n));
    v[start] = 1.0;
    for (int it = 0; it < 20000; ++it) {
        for (int i = 0; i < n; ++i) {
            double s = 0.0;
            for (int j = 0; j < n; ++j) s += g[static_cast<size_t>(i) * n + j] * v[j];
            u[i] = s;
        }
        double norm = 0.0;
        for (int i = 0; i < n; ++i) norm += u[i] * u[i];
        norm = std::sqrt(norm);
        if (norm == 0.0) break;  // v in the null space; keep previous iterate
        double delta = 0.0;
        for (int i = 0; i < n; ++i) {
            u[i] /= norm;
            delta = std::max(delta, std::fabs(u[i] - v[i]));
        }
        v = u;
        if (delta < 1e-14) break;
    }
    return v;
}

}  // namespace

Tensor eigencam_raw(const Tensor& activations, const std::vector<float>* class_gate) {
    if (activations.rank() != 3) throw ShapeError("eigencam_raw: rank-3 activations expected");
    if (!activations.all_finite()) throw NumericError("eigencam_raw: non-finite activations");
    const uint32_t H = activations.dim(0), W = activations.dim(1);
    const int C = static_cast<int>(activations.dim(2));
    if (class_gate && static_cast<int>(class_gate->size()) != C)
        throw ShapeError("eigencam_raw: gate length does not match channel count");

    std::vector<double> gate(static_cast<size_t>(C), 1.0);
    if (class_gate)
        for (int k = 0; k < C; ++k) gate[k] = std::max(0.0, static_cast<double>((*class_gate)[k]));

    // Gram matrix of the gated activations, rows = spatial coordinates.
    const size_t hw = static_cast<size_t>(H) * W;
    std::vector<double> gram(static_cast<size_t>(C) * C, 0.0);
    double trace = 0.0;
    for (size_t i = 0; i < hw; ++i) {
        const float* row = activations.data() + i * C;
        for (int a = 0; a < C; ++a) {
            const double va = row[a] * gate[a];
            for (int b = a; b < C; ++b)
                gram[static_cast<size_t>(a) * C + b] += va * row[b] * gate[b];
        }
    }
    for (int a = 0; a < C; ++a) {
        for (int b = a + 1; b < C; ++b)
            gram[static_cast<size_t>(b) * C + a] = gram[static_cast<size_t>(a) * C + b];
        trace += gram[static_cast<size_t>(a) * C + a];
    }

    Tensor raw({H, W});
    if (trace == 0.0) return raw;  // all-zero gated activations: degenerate map

    const std::vector<double> v = top_eigvec(gram, C);
    std::vector<double> proj(hw);
    double sum = 0.0;
    for (size_t i = 0; i < hw; ++i) {
        const float* row = activations.data() + i * C;
        double s = 0.0;
        for (int k = 0; k < C; ++k) s += row[k] * gate[k] * v[k];
        proj[i] = s;
        sum += s;
    }
    const double sign = sum >= 0.0 ? 1.0 : -1.0;
    for (size_t i = 0; i < hw; ++i) raw.data()[i] = static_cast<float>(std::max(0.0, sign * proj[i]));
    return raw;
}

Tensor normalize_map(const Tensor& raw) {
    if (raw.rank() != 2) throw ShapeError("normalize_map: rank-2 map expected");
    if (!raw.all_finite()) throw NumericError("normalize_map: non-finite map");
    Tensor out(raw.shape());
    const auto [mn, mx] = std::minmax_element(raw.data(), raw.data() + raw.numel());
    if (*mx == *mn) {
        std::fill(out.data(), out.data() + out.numel(), 0.5f);
        return out;
    }
    const float inv = 1.0f / (*mx - *mn);
    for (size_t i = 0; i < raw.numel(); ++i) out.data()[i] = (raw.data()[i] - *mn) * inv;
    return out;
}

Tensor upsample_bilinear(const Tensor& m, uint32_t H, uint32_t W) {
    if (m.rank() != 2) throw ShapeError("upsample_bilinear: rank-2 map expected");
    const uint32_t h0 = m.dim(0), w0 = m.dim(1);
    if (H < h0 || W < w0) throw ShapeError("upsample_bilinear: shrinking is unsupported");
    Tensor out({H, W});
    for (uint32_t y = 0; y < H; ++y) {
        double sy = (y + 0.5) * static_cast<double>(h0) / H - 0.5;
        sy = std::clamp(sy, 0.0, static_cast<double>(h0 - 1));
        const uint32_t y0 = static_cast<uint32_t>(sy);
        const uint32_t y1 = std::min(y0 + 1, h0 - 1);
        const double fy = sy - y0;
        for (uint32_t x = 0; x < W; ++x) {
            double sx = (x + 0.5) * static_cast<double>(w0) / W - 0.5;
            sx = std::clamp(sx, 0.0, static_cast<double>(w0 - 1));
            const uint32_t x0 = static_cast<uint32_t>(sx);
            const uint32_t x1 = std::min(x0 + 1, w0 - 1);
            const double fx = sx - x0;
            const double top = m(y0, x0) + (m(y0, x1) - m(y0, x0)) * fx;
            const double bot = m(y1, x0) + (m(y1, x1) - m(y1, x0)) * fx;
            out(y, x) = static_cast<float>(top + (bot - top) * fy);
        }
    }
    return out;
}

MaskPair threshold_masks(const Tensor& m, float tau_h, float tau_l) {
    if (m.rank() != 2) throw ShapeError("threshold_masks: rank-2 map expected");
    if (!(tau_h > 0.0f && tau_h < 1.0f))
        throw ConfigError("threshold_masks: tau_h must lie in (0,1)");
    if (!(tau_l > 0.0f && tau_l < 1.0f))
        throw ConfigError("threshold_masks: tau_l must lie in (0,1)");
    MaskPair mp;
    mp.tau_h = tau_h;
    mp.tau_l = tau_l;
    mp.specific = Tensor(m.shape());
    mp.generic = Tensor(m.shape());
    for (size_t i = 0; i < m.numel(); ++i) {
        mp.specific.data()[i] = m.data()[i] >= tau_h ? 1.0f : 0.0f;
        mp.generic.data()[i] = m.data()[i] <= tau_l ? 1.0f : 0.0f;
    }
    return mp;
}

void write_pgm(const Tensor& m, const std::filesystem::path& path) {
    if (m.rank() != 2) throw ShapeError("write_pgm: rank-2 map expected");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot write " + path.string());
    os << "P5\n" << m.dim(1) << " " << m.dim(0) << "\n255\n";
    for (size_t i = 0; i < m.numel(); ++i) {
        const float v = std::clamp(m.data()[i], 0.0f, 1.0f);
        os.put(static_cast<char>(std::lround(v * 255.0f)));
    }
    if (!os) throw FormatError("write failed for " + path.string());
}

CamMap class_cam(const ClassifierNet<float>& clf, const Tensor& sparse_code, int class_id,
                 bool class_gated) {
    if (class_id < 0 || class_id >= clf.n_classes)
        throw ConfigError("class_cam: class id out of range");
    ClassScores s = classifier_forward(clf, sparse_code);
    std::vector<float> gate;
    const std::vector<float>* gp = nullptr;
    if (class_gated) {
        const float* row = clf.head.w.data() + static_cast<size_t>(class_id) * clf.head.nin;
        gate.assign(row, row + clf.head.nin);
        gp = &gate;
    }
    CamMap cm;
    cm.m = normalize_map(eigencam_raw(s.activations, gp));
    cm.class_id = class_id;
    return cm;
}

}  // namespace lta
