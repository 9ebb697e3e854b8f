#include "lta/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lta/errors.hpp"
#include "lta/rng.hpp"
#include "lta/tensor_io.hpp"

namespace lta {

namespace fs = std::filesystem;

int DenoiseConfig::steps() const {
    if (base_steps == 0) return 0;
    return static_cast<int>(std::lround(static_cast<double>(base_steps) / divisor));
}

void DenoiseConfig::validate() const {
    if (base_steps < 0) throw ConfigError("denoise.base_steps must be >= 0");
    if (divisor < 1) throw ConfigError("denoise.divisor must be >= 1");
    if (base_steps > 0 && divisor > base_steps)
        throw ConfigError("denoise.divisor must lie in [1, base_steps]");
    if (tag != "identity" && tag != "gaussian-smoother" && tag != "external")
        throw ConfigError("denoise.tag must be identity, gaussian-smoother or external");
}

void AugmentConfig::validate() const {
    if (!(tau_h > 0.0f && tau_h < 1.0f)) throw ConfigError("augment.tau_h must lie in (0,1)");
    if (!(tau_l > 0.0f && tau_l < 1.0f)) throw ConfigError("augment.tau_l must lie in (0,1)");
    if (k < 1) throw ConfigError("augment.k must be >= 1");
    if (target_per_tail < 0) throw ConfigError("augment.target_per_tail must be >= 0");
    denoise.validate();
}

namespace {
ExternalDenoiser g_external;
}

void set_external_denoiser(ExternalDenoiser fn) { g_external = std::move(fn); }

int select_confusion_head(const std::vector<std::vector<float>>& scores,
                          const PartitionSpec& partition) {
    if (scores.empty()) throw FusionError("select_confusion_head: empty sample set");
    if (partition.head.empty()) throw FusionError("select_confusion_head: no head classes");
    for (const auto& row : scores)
        if (static_cast<int>(row.size()) <= partition.head.back())
            throw ShapeError("select_confusion_head: score row shorter than class count");
    int best = -1;
    double best_mean = -1.0;
    for (int h : partition.head) {  // ascending, so ties keep the lowest index
        double sum = 0.0;
        for (const auto& row : scores) sum += row[static_cast<size_t>(h)];
        const double mean = sum / static_cast<double>(scores.size());
        if (mean > best_mean) {
            best_mean = mean;
            best = h;
        }
    }
    return best;
}

size_t knn_neighbor(const Tensor& query, const std::vector<const Tensor*>& pool, int k,
                    uint64_t seed) {
    if (pool.empty()) throw FusionError("knn_neighbor: empty pool");
    if (k < 1) throw ConfigError("knn_neighbor: k must be >= 1");
    std::vector<std::pair<double, size_t>> dist(pool.size());
    for (size_t i = 0; i < pool.size(); ++i) {
        if (!same_shape(query, *pool[i])) throw ShapeError("knn_neighbor: pool shape mismatch");
        double d = 0.0;
        for (size_t j = 0; j < query.numel(); ++j) {
            const double diff = query.data()[j] - pool[i]->data()[j];
            d += diff * diff;
        }
        dist[i] = {d, i};
    }
    std::sort(dist.begin(), dist.end());
    const size_t kk = std::min<size_t>(static_cast<size_t>(k), pool.size());
    Rng rng(seed);
    return dist[rng.uniform_int(kk)].second;
}

Tensor draw_random_mask(uint32_t H, uint32_t W, uint64_t seed) {
    Tensor m({H, W});
    Rng rng(seed);
    for (size_t i = 0; i < m.numel(); ++i) m.data()[i] = rng.coin() ? 1.0f : 0.0f;
    return m;
}

namespace {

void require_binary_mask(const Tensor& m, uint32_t H, uint32_t W, const char* what) {
    if (m.rank() != 2 || m.dim(0) != H || m.dim(1) != W)
        throw ShapeError(std::string("fuse_sparse: ") + what + " has wrong shape");
    for (size_t i = 0; i < m.numel(); ++i)
        if (m.data()[i] != 0.0f && m.data()[i] != 1.0f)
            throw NumericError(std::string("fuse_sparse: ") + what + " is not binary");
}

}  // namespace

Tensor fuse_sparse(const Tensor& z_tail, const Tensor& z_head, const Tensor& mask_specific,
                   const Tensor& mask_generic, const Tensor& mask_random) {
    if (z_tail.rank() != 3 || !same_shape(z_tail, z_head))
        throw ShapeError("fuse_sparse: sparse codes must share a rank-3 shape");
    const uint32_t H = z_tail.dim(0), W = z_tail.dim(1), C = z_tail.dim(2);
    require_binary_mask(mask_specific, H, W, "specific mask");
    require_binary_mask(mask_generic, H, W, "generic mask");
    require_binary_mask(mask_random, H, W, "random mask");

    Tensor out(z_tail.shape());
    const size_t hw = static_cast<size_t>(H) * W;
    for (size_t i = 0; i < hw; ++i) {
        const float s = mask_specific.data()[i];
        const float g = mask_generic.data()[i];
        const float r = mask_random.data()[i];
        const float w_rand = 1.0f - g - s + 2.0f * g * s;  // both-or-neither indicator
        const float w_tail = s * (1.0f - g);
        const float w_head = g * (1.0f - s);
        const float* zt = z_tail.data() + i * C;
        const float* zh = z_head.data() + i * C;
        float* zo = out.data() + i * C;
        for (uint32_t c = 0; c < C; ++c) {
            const float z_r = zt[c] * r + zh[c] * (1.0f - r);
            zo[c] = z_r * w_rand + zt[c] * w_tail + zh[c] * w_head;
        }
    }
    return out;
}

Tensor fuse_sparse(const Tensor& z_tail, const Tensor& z_head, const Tensor& mask_specific,
                   const Tensor& mask_generic, uint64_t seed) {
    if (z_tail.rank() != 3) throw ShapeError("fuse_sparse: rank-3 sparse code expected");
    return fuse_sparse(z_tail, z_head, mask_specific, mask_generic,
                       draw_random_mask(z_tail.dim(0), z_tail.dim(1), seed));
}

Tensor decode_fused(const DecoderNet<float>& decoder, const Tensor& sparse_fused) {
    return decoder_forward(decoder, sparse_fused);
}

Tensor denoise(const Tensor& latent, const DenoiseConfig& cfg) {
    cfg.validate();
    if (latent.rank() != 3) throw ShapeError("denoise: rank-3 latent expected");
    const int s = cfg.tag == "identity" ? 0 : cfg.steps();
    if (s == 0) return latent;
    if (cfg.tag == "external") {
        if (!g_external) throw ConfigError("denoise: no external denoiser registered");
        return g_external(latent, s, cfg.conditioning);
    }
    // Gaussian smoother: repeated 3x3 binomial passes per channel, zero padded.
    const int H = static_cast<int>(latent.dim(0));
    const int W = static_cast<int>(latent.dim(1));
    const int C = static_cast<int>(latent.dim(2));
    static const float stencil[3] = {1.0f, 2.0f, 1.0f};
    Tensor cur = latent;
    Tensor nxt(latent.shape());
    for (int step = 0; step < s; ++step) {
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x)
                for (int c = 0; c < C; ++c) {
                    float acc = 0.0f;
                    for (int dy = -1; dy <= 1; ++dy) {
                        const int yy = y + dy;
                        if (yy < 0 || yy >= H) continue;
                        for (int dx = -1; dx <= 1; ++dx) {
                            const int xx = x + dx;
                            if (xx < 0 || xx >= W) continue;
                            acc += stencil[dy + 1] * stencil[dx + 1] *
                                   cur(static_cast<uint32_t>(yy), static_cast<uint32_t>(xx),
                                       static_cast<uint32_t>(c));
                        }
                    }
                    nxt(static_cast<uint32_t>(y), static_cast<uint32_t>(x),
                        static_cast<uint32_t>(c)) = acc / 16.0f;
                }
        std::swap(cur, nxt);
    }
    return cur;
}

std::vector<Tensor> smote_oversample(const std::vector<Tensor>& pool, int n_new, int k,
                                     uint64_t seed) {
    if (pool.size() < 2) throw FusionError("smote_oversample: pool must hold at least 2 samples");
    if (k < 1) throw ConfigError("smote_oversample: k must be >= 1");
    if (n_new < 0) throw ConfigError("smote_oversample: n_new must be >= 0");
    for (const Tensor& t : pool)
        if (!same_shape(t, pool[0])) throw ShapeError("smote_oversample: pool shape mismatch");

    Rng rng(seed);
    std::vector<Tensor> out;
    out.reserve(static_cast<size_t>(n_new));
    for (int i = 0; i < n_new; ++i) {
        const size_t xi = rng.uniform_int(pool.size());
        std::vector<std::pair<double, size_t>> dist;
        dist.reserve(pool.size() - 1);
        for (size_t j = 0; j < pool.size(); ++j) {
            if (j == xi) continue;
            double d = 0.0;
            for (size_t e = 0; e < pool[j].numel(); ++e) {
                const double diff = pool[xi].data()[e] - pool[j].data()[e];
                d += diff * diff;
            }
            dist.emplace_back(d, j);
        }
        std::sort(dist.begin(), dist.end());
        const size_t kk = std::min<size_t>(static_cast<size_t>(k), dist.size());
        const size_t nn = dist[rng.uniform_int(kk)].second;
        const float u = static_cast<float>(rng.uniform());
        Tensor sample(pool[xi].shape());
        for (size_t e = 0; e < sample.numel(); ++e)
            sample.data()[e] =
                pool[xi].data()[e] + u * (pool[nn].data()[e] - pool[xi].data()[e]);
        out.push_back(std::move(sample));
    }
    return out;
}

DatasetManifest augment_tailset(const DatasetManifest& manifest, const PartitionSpec& partition,
                                const StudentNet<float>& student, const DecoderNet<float>& decoder,
                                const ClassifierNet<float>& classifier, const AugmentConfig& cfg,
                                const fs::path& out_dir, std::vector<FusionRecord>* records) {
    cfg.validate();
    partition.validate(manifest.num_classes());

    const auto train_idx = manifest.split_indices(Split::train);
    std::vector<Tensor> sparse(train_idx.size());
    std::vector<std::vector<float>> scores(train_idx.size());
    for (size_t i = 0; i < train_idx.size(); ++i) {
        Tensor z = read_tensor(manifest.tensor_path(manifest.records[train_idx[i]]));
        sparse[i] = student_forward(student, z);
        scores[i] = classifier_forward(classifier, sparse[i]).scores;
    }

    DatasetManifest out = manifest;
    out.base_dir = out_dir;
    fs::create_directories(out_dir / "tensors");
    for (Record& r : out.records)
        r.tensor = fs::relative(manifest.tensor_path(r), out_dir).string();

    const int applied_steps = cfg.denoise.tag == "identity" ? 0 : cfg.denoise.steps();
    for (int t : partition.tail) {
        std::vector<size_t> tail_pool;  // positions into train_idx / sparse
        for (size_t i = 0; i < train_idx.size(); ++i)
            if (manifest.records[train_idx[i]].labels.positive(t)) tail_pool.push_back(i);
        if (tail_pool.empty())
            throw FusionError("augment_tailset: no train records labeled " +
                              manifest.class_names[static_cast<size_t>(t)]);
        const int deficit = cfg.target_per_tail - static_cast<int>(tail_pool.size());
        if (deficit <= 0) continue;

        std::vector<std::vector<float>> tail_scores;
        tail_scores.reserve(tail_pool.size());
        for (size_t i : tail_pool) tail_scores.push_back(scores[i]);
        const int h = select_confusion_head(tail_scores, partition);

        std::vector<size_t> head_pool;
        for (size_t i = 0; i < train_idx.size(); ++i)
            if (manifest.records[train_idx[i]].labels.positive(h)) head_pool.push_back(i);

        for (int i = 0; i < deficit; ++i) {
            const size_t ti = tail_pool[static_cast<size_t>(i) % tail_pool.size()];
            const Record& tail_rec = manifest.records[train_idx[ti]];

            // Head candidates, minus the tail record itself when labels co-occur.
            std::vector<const Tensor*> pool_ptrs;
            std::vector<size_t> pool_pos;
            for (size_t p : head_pool) {
                if (manifest.records[train_idx[p]].id == tail_rec.id) continue;
                pool_ptrs.push_back(&sparse[p]);
                pool_pos.push_back(p);
            }
            if (pool_ptrs.empty())
                throw FusionError("augment_tailset: no head neighbors for " + tail_rec.id);
            const uint64_t knn_seed = substream(cfg.seed, "knn", static_cast<uint64_t>(t),
                                                static_cast<uint64_t>(i));
            const size_t hi = pool_pos[knn_neighbor(sparse[ti], pool_ptrs, cfg.k, knn_seed)];
            const Record& head_rec = manifest.records[train_idx[hi]];

            const Tensor ms =
                threshold_masks(class_cam(classifier, sparse[ti], t).m, cfg.tau_h, cfg.tau_l)
                    .specific;
            const Tensor mg =
                threshold_masks(class_cam(classifier, sparse[hi], h).m, cfg.tau_h, cfg.tau_l)
                    .generic;
            const uint64_t mask_seed =
                substream(cfg.seed, "fusion-mask:" + tail_rec.id + "|" + head_rec.id);
            Tensor zs_f = fuse_sparse(sparse[ti], sparse[hi], ms, mg, mask_seed);
            Tensor z_f = denoise(decode_fused(decoder, zs_f), cfg.denoise);
            if (!z_f.all_finite())
                throw NumericError("augment_tailset: non-finite fused latent for " + tail_rec.id);

            Record rec;
            rec.id = "aug_" + manifest.class_names[static_cast<size_t>(t)] + "_" +
                     std::to_string(i);
            rec.tensor = "tensors/" + rec.id + ".lta";
            rec.labels = LabelVector(static_cast<size_t>(manifest.num_classes()));
            for (int c = 0; c < manifest.num_classes(); ++c) {
                const bool from_tail = !partition.is_head(c) && tail_rec.labels.positive(c);
                const bool from_head = partition.is_head(c) && head_rec.labels.positive(c);
                rec.labels.y[static_cast<size_t>(c)] = (from_tail || from_head) ? 1 : 0;
            }
            rec.split = Split::train;
            rec.synthetic = true;
            rec.tail_id = tail_rec.id;
            rec.head_id = head_rec.id;
            rec.seed = mask_seed;
            rec.denoise_steps = applied_steps;
            write_tensor(z_f, out_dir / rec.tensor);
            out.records.push_back(rec);

            if (records) {
                FusionRecord fr;
                fr.tail_id = tail_rec.id;
                fr.head_id = head_rec.id;
                fr.tail_class = t;
                fr.head_class = h;
                fr.mask_specific = ms;
                fr.mask_generic = mg;
                fr.seed = mask_seed;
                fr.sparse_fused = std::move(zs_f);
                fr.latent = std::move(z_f);
                fr.denoise_steps = applied_steps;
                records->push_back(std::move(fr));
            }
        }
    }
    return out;
}

}  // namespace lta
