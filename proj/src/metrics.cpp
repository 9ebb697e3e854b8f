#include "lta/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "lta/errors.hpp"
#include "lta/rng.hpp"
#include "lta/tensor_io.hpp"
#include "lta/trainer.hpp"

namespace lta {

using nlohmann::json;

GaussStats gaussian_stats(const std::vector<std::vector<float>>& features) {
    if (features.size() < 2) throw MetricError("gaussian_stats: need at least 2 samples");
    const size_t f = features[0].size();
    for (const auto& v : features)
        if (v.size() != f) throw ShapeError("gaussian_stats: inconsistent feature dims");

    GaussStats st;
    st.mu.assign(f, 0.0);
    st.sigma.assign(f * f, 0.0);
    for (const auto& v : features)
        for (size_t i = 0; i < f; ++i) st.mu[i] += v[i];
    for (double& m : st.mu) m /= static_cast<double>(features.size());
    for (const auto& v : features)
        for (size_t i = 0; i < f; ++i) {
            const double di = v[i] - st.mu[i];
            for (size_t j = i; j < f; ++j) st.sigma[i * f + j] += di * (v[j] - st.mu[j]);
        }
    const double inv = 1.0 / static_cast<double>(features.size() - 1);
    for (size_t i = 0; i < f; ++i)
        for (size_t j = i; j < f; ++j) {
            st.sigma[i * f + j] *= inv;
            st.sigma[j * f + i] = st.sigma[i * f + j];
        }
    return st;
}

double frechet_distance(const GaussStats& a, const GaussStats& b) {
    const int n = a.dim();
    if (n == 0 || b.dim() != n) throw ShapeError("frechet_distance: dim mismatch");
    for (double v : a.mu)
        if (!std::isfinite(v)) throw NumericError("frechet_distance: non-finite stats");
    for (double v : b.mu)
        if (!std::isfinite(v)) throw NumericError("frechet_distance: non-finite stats");
    for (double v : a.sigma)
        if (!std::isfinite(v)) throw NumericError("frechet_distance: non-finite stats");
    for (double v : b.sigma)
        if (!std::isfinite(v)) throw NumericError("frechet_distance: non-finite stats");

    Eigen::MatrixXd sa(n, n), sb(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            sa(i, j) = a.sigma[static_cast<size_t>(i) * n + j];
            sb(i, j) = b.sigma[static_cast<size_t>(i) * n + j];
        }

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_a(sa);
    const Eigen::MatrixXd root_a = es_a.eigenvectors() *
                                   es_a.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
                                   es_a.eigenvectors().transpose();
    const Eigen::MatrixXd inner = root_a * sb * root_a;
    // inner is symmetric up to round-off; symmetrize before the eigensolve.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_i(0.5 * (inner + inner.transpose()));
    const double tr_root = es_i.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

    double mean_sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double d = a.mu[static_cast<size_t>(i)] - b.mu[static_cast<size_t>(i)];
        mean_sq += d * d;
    }
    const double d2 = mean_sq + sa.trace() + sb.trace() - 2.0 * tr_root;
    return std::max(0.0, d2);
}

double mean_ap(const std::vector<std::vector<float>>& scores,
               const std::vector<LabelVector>& labels, const std::vector<int>& class_set) {
    if (scores.size() != labels.size() || scores.empty())
        throw ShapeError("mean_ap: scores/labels size mismatch");
    if (class_set.empty()) throw MetricError("mean_ap: empty class set");
    const size_t n = scores.size();
    const size_t k = scores[0].size();
    for (size_t i = 0; i < n; ++i)
        if (scores[i].size() != k || labels[i].y.size() != k)
            throw ShapeError("mean_ap: inconsistent row length");

    double sum_ap = 0.0;
    int used = 0;
    std::vector<size_t> order(n);
    for (int c : class_set) {
        if (c < 0 || static_cast<size_t>(c) >= k) throw ConfigError("mean_ap: class out of range");
        std::iota(order.begin(), order.end(), size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
            return scores[a][static_cast<size_t>(c)] > scores[b][static_cast<size_t>(c)];
        });
        int npos = 0;
        double ap = 0.0;
        int hits = 0;
        for (size_t rank = 0; rank < n; ++rank)
            if (labels[order[rank]].positive(c)) {
                ++hits;
                ap += static_cast<double>(hits) / static_cast<double>(rank + 1);
            }
        npos = hits;
        if (npos == 0) continue;  // class carries no positives here
        sum_ap += ap / npos;
        ++used;
    }
    if (used == 0) throw MetricError("mean_ap: no class in the set has positives");
    return sum_ap / used;
}

SparsityReport sparsity_report(const std::vector<Tensor>& sparse_set) {
    SparsityReport rep;
    size_t ncoord_total = 0;
    double sum_h = 0.0, sum_eff = 0.0;
    for (const Tensor& t : sparse_set) {
        if (!is_simplex(t)) throw NumericError("sparsity_report: tensor is not a sparse code");
        const int c = static_cast<int>(t.dim(2));
        const size_t ncoord = static_cast<size_t>(t.dim(0)) * t.dim(1);
        for (size_t i = 0; i < ncoord; ++i) {
            const float* row = t.data() + i * c;
            double h = 0.0;
            for (int ch = 0; ch < c; ++ch)
                if (row[ch] > 0.0f)
                    h -= static_cast<double>(row[ch]) * std::log(static_cast<double>(row[ch]));
            h = std::max(0.0, h);
            sum_h += h;
            sum_eff += std::exp(h);
        }
        ncoord_total += ncoord;
    }
    if (ncoord_total > 0) {
        rep.mean_entropy = sum_h / static_cast<double>(ncoord_total);
        rep.mean_effective_channels = sum_eff / static_cast<double>(ncoord_total);
    }
    return rep;
}

void DownstreamConfig::validate() const {
    if (epochs < 1) throw ConfigError("eval.epochs must be >= 1");
    if (!(lr > 0.0f)) throw ConfigError("eval.lr must be > 0");
    if (batch_size < 1) throw ConfigError("eval.batch_size must be >= 1");
    if (hidden < 1) throw ConfigError("eval.hidden must be >= 1");
}

std::vector<float> pooled_features(const ClassifierNet<float>& clf, const Tensor& input) {
    ClassifierNet<float>::Cache cc;
    clf.forward(input, cc);
    return cc.pooled;
}

namespace {

std::vector<size_t> shuffled(size_t n, uint64_t seed) {
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), size_t{0});
    Rng rng(seed);
    for (size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.uniform_int(i)]);
    return idx;
}

}  // namespace

EvalRow downstream_eval(const DatasetManifest& train_m, const DatasetManifest& test_m,
                        const PartitionSpec& partition, const DownstreamConfig& cfg, uint64_t seed,
                        const std::string& method_name) {
    cfg.validate();
    const int K = train_m.num_classes();
    partition.validate(K);
    if (test_m.num_classes() != K || test_m.dims != train_m.dims)
        throw ShapeError("downstream_eval: train/test manifests disagree");

    struct Sample {
        Tensor z;
        LabelVector y;
        bool synthetic;
    };
    std::vector<Sample> train;
    for (size_t i : train_m.split_indices(Split::train)) {
        const Record& r = train_m.records[i];
        train.push_back({read_tensor(train_m.tensor_path(r)), r.labels, r.synthetic});
    }
    std::vector<Sample> test;
    for (size_t i : test_m.split_indices(Split::test)) {
        const Record& r = test_m.records[i];
        test.push_back({read_tensor(test_m.tensor_path(r)), r.labels, r.synthetic});
    }
    if (train.empty()) throw TrainingError("downstream_eval: empty train split");
    if (test.empty()) throw MetricError("downstream_eval: empty test split");

    const int C = static_cast<int>(train_m.dims[2]);
    Rng ri(substream(seed, "eval-init"));
    auto clf = ClassifierNet<float>::make(C, cfg.hidden, K, ri);

    ClassifierNet<float>::Cache cc;
    std::vector<float> dlogits(static_cast<size_t>(K)), ytmp(static_cast<size_t>(K));
    for (int e = 0; e < cfg.epochs; ++e) {
        const auto order =
            shuffled(train.size(), substream(seed, "eval-shuffle", static_cast<uint64_t>(e)));
        double loss_sum = 0.0;
        for (size_t b0 = 0; b0 < train.size(); b0 += cfg.batch_size) {
            const size_t b1 = std::min(train.size(), b0 + cfg.batch_size);
            const float inv_b = 1.0f / static_cast<float>(b1 - b0);
            clf.zero_grad();
            for (size_t bi = b0; bi < b1; ++bi) {
                const Sample& s = train[order[bi]];
                clf.forward(s.z, cc);
                for (int k = 0; k < K; ++k) ytmp[k] = static_cast<float>(s.y.y[k]);
                loss_sum += bce_mean_grad<float>(cc.scores.data(), ytmp.data(),
                                                 static_cast<size_t>(K), nullptr);
                // Fused cross-entropy gradient on the logits (see il_trainer):
                // bounded under saturation, exact elsewhere.
                for (int k = 0; k < K; ++k)
                    dlogits[k] = (cc.scores[k] - ytmp[k]) * inv_b / static_cast<float>(K);
                clf.backward_from_logits(cc, dlogits, nullptr);
            }
            clf.sgd_step(cfg.lr);
        }
        if (!std::isfinite(loss_sum))
            throw TrainingError("downstream_eval: non-finite loss at epoch " + std::to_string(e));
    }

    std::vector<std::vector<float>> test_scores;
    std::vector<LabelVector> test_labels;
    test_scores.reserve(test.size());
    for (const Sample& s : test) {
        clf.forward(s.z, cc);
        test_scores.push_back(cc.scores);
        test_labels.push_back(s.y);
    }

    EvalRow row;
    row.method = method_name;
    row.head_map = mean_ap(test_scores, test_labels, partition.head);
    row.tail_map = mean_ap(test_scores, test_labels, partition.tail);

    // Per-tail-class Fréchet distance between real and synthetic features.
    double fd_sum = 0.0;
    int fd_used = 0;
    for (int t : partition.tail) {
        std::vector<std::vector<float>> real_f, synth_f;
        for (const Sample& s : train) {
            if (!s.y.positive(t)) continue;
            (s.synthetic ? synth_f : real_f).push_back(pooled_features(clf, s.z));
        }
        if (real_f.size() < 2 || synth_f.size() < 2) continue;
        fd_sum += frechet_distance(gaussian_stats(real_f), gaussian_stats(synth_f));
        ++fd_used;
    }
    row.avg_tail_fd =
        fd_used > 0 ? fd_sum / fd_used : std::numeric_limits<double>::quiet_NaN();
    return row;
}

namespace {

json row_to_json(const EvalRow& r) {
    json j;
    j["method"] = r.method;
    if (std::isnan(r.avg_tail_fd))
        j["avg_tail_fd"] = nullptr;
    else
        j["avg_tail_fd"] = r.avg_tail_fd;
    j["head_map"] = r.head_map;
    j["tail_map"] = r.tail_map;
    return j;
}

}  // namespace

void write_eval_report_json(const EvalReport& report, const std::filesystem::path& path) {
    json j;
    j["seed"] = report.seed;
    if (!report.config_echo.empty()) {
        json cfg = json::parse(report.config_echo, nullptr, false);
        j["config"] = cfg.is_discarded() ? json(report.config_echo) : cfg;
    } else {
        j["config"] = json::object();
    }
    j["rows"] = json::array();
    for (const EvalRow& r : report.rows) j["rows"].push_back(row_to_json(r));
    std::ofstream os(path);
    if (!os) throw FormatError("cannot write " + path.string());
    os << j.dump(2) << "\n";
}

EvalReport read_eval_report_json(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("cannot read " + path.string());
    json j = json::parse(is, nullptr, false);
    if (j.is_discarded()) throw FormatError("invalid JSON in " + path.string());
    EvalReport rep;
    if (!j.contains("rows") || !j["rows"].is_array())
        throw FormatError("report missing rows array: " + path.string());
    rep.seed = j.value("seed", uint64_t{0});
    if (j.contains("config")) rep.config_echo = j["config"].dump();
    for (const json& rj : j["rows"]) {
        EvalRow r;
        r.method = rj.at("method").get<std::string>();
        r.avg_tail_fd = rj.at("avg_tail_fd").is_null()
                            ? std::numeric_limits<double>::quiet_NaN()
                            : rj.at("avg_tail_fd").get<double>();
        r.head_map = rj.at("head_map").get<double>();
        r.tail_map = rj.at("tail_map").get<double>();
        rep.rows.push_back(std::move(r));
    }
    return rep;
}

void write_eval_report_csv(const EvalReport& report, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw FormatError("cannot write " + path.string());
    os << "method,avg_tail_fd,head_map,tail_map\n";
    char buf[64];
    for (const EvalRow& r : report.rows) {
        os << r.method << ",";
        if (!std::isnan(r.avg_tail_fd)) {
            std::snprintf(buf, sizeof(buf), "%.17g", r.avg_tail_fd);
            os << buf;
        }
        std::snprintf(buf, sizeof(buf), ",%.17g,%.17g\n", r.head_map, r.tail_map);
        os << buf;
    }
}

}  // namespace lta
