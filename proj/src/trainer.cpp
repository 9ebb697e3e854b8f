#include "lta/trainer.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "lta/errors.hpp"
#include "lta/tensor_io.hpp"

namespace lta {

void ILConfig::validate() const {
    if (generations < 1) throw ConfigError("generations must be >= 1");
    if (imitation_epochs < 1) throw ConfigError("imitation_epochs must be >= 1");
    if (interaction_epochs < 1) throw ConfigError("interaction_epochs must be >= 1");
    if (!(lambda >= 0.0f && lambda <= 1.0f)) throw ConfigError("lambda must lie in [0,1]");
    if (!(lr > 0.0f)) throw ConfigError("lr must be > 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (sparse_channels < 2) throw ConfigError("sparse_channels must be >= 2");
    if (hidden < 1) throw ConfigError("hidden must be >= 1");
}

namespace {

std::vector<size_t> shuffled_indices(size_t n, uint64_t seed) {
    std::vector<size_t> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = i;
    Rng rng(seed);
    for (size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.uniform_int(i)]);
    return idx;
}

Tensor probs_tensor(const StudentNet<float>::Cache& cc, int sparse_c) {
    Tensor t({uint32_t(cc.H), uint32_t(cc.W), uint32_t(sparse_c)});
    std::copy(cc.probs.begin(), cc.probs.end(), t.data());
    return t;
}

void check_finite(double v, int gen, int epoch, const char* phase) {
    if (!std::isfinite(v))
        throw TrainingError("non-finite loss at generation " + std::to_string(gen) + ", " + phase +
                            " epoch " + std::to_string(epoch));
}

}  // namespace

void run_generation(CheckpointSet& out, const std::vector<Tensor>& latents,
                    const std::vector<LabelVector>& labels, const ILConfig& cfg, int gen_index) {
    const size_t n = latents.size();
    if (n == 0) throw TrainingError("empty train split");
    const int H = static_cast<int>(latents[0].dim(0));
    const int W = static_cast<int>(latents[0].dim(1));
    const int C = static_cast<int>(latents[0].dim(2));
    const int K = static_cast<int>(labels[0].y.size());
    const size_t nsparse = static_cast<size_t>(H) * W * cfg.sparse_channels;

    Rng rs(substream(cfg.seed, "student", static_cast<uint64_t>(gen_index)));
    auto student = StudentNet<float>::make(C, cfg.hidden, cfg.sparse_channels, rs);
    DecoderNet<float> decoder;
    ClassifierNet<float> classifier;
    if (gen_index == 0) {
        Rng rd(substream(cfg.seed, "decoder"));
        Rng rc(substream(cfg.seed, "classifier"));
        decoder = DecoderNet<float>::make(cfg.sparse_channels, cfg.hidden, C, rd);
        classifier = ClassifierNet<float>::make(cfg.sparse_channels, cfg.hidden, K, rc);
    } else {
        decoder = out.decoders.back();
        classifier = out.classifiers.back();
    }

    // Imitation phase: match the frozen teacher's code, with one-hot targets
    // resampled from the teacher's channel probabilities on every visit.
    if (gen_index > 0) {
        const StudentNet<float>& teacher = out.students.back();
        std::vector<Tensor> tprobs(n);
        for (size_t r = 0; r < n; ++r) tprobs[r] = student_forward(teacher, latents[r]);

        StudentNet<float>::Cache cc;
        std::vector<float> dprobs(nsparse);
        for (int e = 0; e < cfg.imitation_epochs; ++e) {
            auto order = shuffled_indices(
                n, substream(cfg.seed, "im-shuffle", static_cast<uint64_t>(gen_index),
                             static_cast<uint64_t>(e)));
            double loss_sum = 0.0;
            for (size_t b0 = 0; b0 < n; b0 += cfg.batch_size) {
                const size_t b1 = std::min(n, b0 + cfg.batch_size);
                const float inv_b = 1.0f / static_cast<float>(b1 - b0);
                student.zero_grad();
                for (size_t bi = b0; bi < b1; ++bi) {
                    const size_t r = order[bi];
                    const uint64_t tseed = substream(
                        cfg.seed, "im-targets", static_cast<uint64_t>(gen_index),
                        (static_cast<uint64_t>(e) << 32) | static_cast<uint64_t>(r));
                    Tensor target = sample_onehot(tprobs[r], tseed);
                    student.forward(latents[r], cc);
                    loss_sum += bce_mean_grad<float>(cc.probs.data(), target.data(), nsparse,
                                                     dprobs.data());
                    for (float& g : dprobs) g *= inv_b;
                    student.backward(cc, dprobs);
                }
                // Gentler steps than interaction: chasing sampled one-hot
                // targets at full rate saturates the channel softmax, and a
                // saturated code has a vanishing Jacobian that the interaction
                // phase cannot recover from.
                student.sgd_step(cfg.lr * 0.5f);
            }
            LossRecord row;
            row.generation = gen_index;
            row.epoch = e;
            row.phase = "imitation";
            row.imitation = loss_sum / static_cast<double>(n);
            check_finite(row.imitation, gen_index, e, "imitation");
            out.history.push_back(row);
        }
    }

    // Interaction phase: student, decoder and classifier jointly minimize
    // lambda*L_R + (1-lambda)*L_C over the soft sparse codes.
    {
        StudentNet<float>::Cache sc;
        DecoderNet<float>::Cache dc;
        ClassifierNet<float>::Cache cc;
        const size_t nlat = static_cast<size_t>(H) * W * C;
        std::vector<float> dout(nlat), dlogits(static_cast<size_t>(K));
        std::vector<float> dprobs(nsparse), dprobs_cls(nsparse);
        std::vector<float> ytmp(static_cast<size_t>(K));
        for (int e = 0; e < cfg.interaction_epochs; ++e) {
            auto order = shuffled_indices(
                n, substream(cfg.seed, "ix-shuffle", static_cast<uint64_t>(gen_index),
                             static_cast<uint64_t>(e)));
            double lr_sum = 0.0, lc_sum = 0.0;
            for (size_t b0 = 0; b0 < n; b0 += cfg.batch_size) {
                const size_t b1 = std::min(n, b0 + cfg.batch_size);
                const float inv_b = 1.0f / static_cast<float>(b1 - b0);
                student.zero_grad();
                decoder.zero_grad();
                classifier.zero_grad();
                for (size_t bi = b0; bi < b1; ++bi) {
                    const size_t r = order[bi];
                    student.forward(latents[r], sc);
                    Tensor probs = probs_tensor(sc, cfg.sparse_channels);
                    decoder.forward(probs, dc);
                    classifier.forward(probs, cc);

                    lr_sum += mse_grad<float>(latents[r].data(), dc.out.data(), nlat, dout.data());
                    for (int k = 0; k < K; ++k) ytmp[k] = static_cast<float>(labels[r].y[k]);
                    lc_sum += bce_mean_grad<float>(cc.scores.data(), ytmp.data(),
                                                   static_cast<size_t>(K), nullptr);
                    // Fused cross-entropy gradient on the logits: (score -
                    // target)/K stays bounded when the sigmoid saturates, so
                    // the classifier can re-adapt after each generation's
                    // imitation phase shifts the code distribution.
                    for (int k = 0; k < K; ++k)
                        dlogits[k] = (cc.scores[k] - ytmp[k]) / static_cast<float>(K);

                    const float wr = cfg.lambda * inv_b;
                    const float wc = (1.0f - cfg.lambda) * inv_b;
                    for (float& g : dout) g *= wr;
                    for (float& g : dlogits) g *= wc;

                    std::fill(dprobs.begin(), dprobs.end(), 0.0f);
                    std::fill(dprobs_cls.begin(), dprobs_cls.end(), 0.0f);
                    decoder.backward(dc, dout, dprobs);
                    classifier.backward_from_logits(cc, dlogits, &dprobs_cls);
                    kernels::axpy(1.0f, dprobs_cls.data(), dprobs.data(), nsparse);
                    student.backward(sc, dprobs);
                }
                student.sgd_step(cfg.lr);
                decoder.sgd_step(cfg.lr);
                classifier.sgd_step(cfg.lr);
            }
            LossRecord row;
            row.generation = gen_index;
            row.epoch = e;
            row.phase = "interaction";
            row.reconstruction = lr_sum / static_cast<double>(n);
            row.classification = lc_sum / static_cast<double>(n);
            row.combined = cfg.lambda * row.reconstruction + (1.0 - cfg.lambda) * row.classification;
            check_finite(row.combined, gen_index, e, "interaction");
            out.history.push_back(row);
        }
    }

    out.students.push_back(std::move(student));
    out.decoders.push_back(std::move(decoder));
    out.classifiers.push_back(std::move(classifier));
}

CheckpointSet run_il(const ILConfig& cfg, const DatasetManifest& manifest) {
    cfg.validate();
    const auto idx = manifest.split_indices(Split::train);
    if (idx.empty()) throw TrainingError("manifest has no train records");
    std::vector<Tensor> latents;
    std::vector<LabelVector> labels;
    latents.reserve(idx.size());
    labels.reserve(idx.size());
    for (size_t i : idx) {
        const Record& rec = manifest.records[i];
        Tensor z = read_tensor(manifest.tensor_path(rec));
        require_shape(z, {manifest.dims[0], manifest.dims[1], manifest.dims[2]},
                      "train tensor " + rec.id);
        latents.push_back(std::move(z));
        labels.push_back(rec.labels);
    }
    CheckpointSet out;
    for (int g = 0; g < cfg.generations; ++g) run_generation(out, latents, labels, cfg, g);
    return out;
}

namespace {

void append_cell(std::string& line, double v) {
    line.push_back(',');
    if (std::isnan(v)) return;
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    line += buf;
}

double parse_cell(const std::string& s) {
    if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
    size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw FormatError("bad numeric cell in loss csv: " + s);
    return v;
}

}  // namespace

void write_loss_csv(const std::vector<LossRecord>& history, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw FormatError("cannot write " + path.string());
    os << "generation,epoch,phase,imitation,reconstruction,classification,combined\n";
    for (const LossRecord& r : history) {
        std::string line = std::to_string(r.generation) + "," + std::to_string(r.epoch) + "," +
                           r.phase;
        append_cell(line, r.imitation);
        append_cell(line, r.reconstruction);
        append_cell(line, r.classification);
        append_cell(line, r.combined);
        os << line << "\n";
    }
}

std::vector<LossRecord> read_loss_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("cannot read " + path.string());
    std::string line;
    if (!std::getline(is, line) ||
        line != "generation,epoch,phase,imitation,reconstruction,classification,combined")
        throw FormatError("unexpected loss csv header in " + path.string());
    std::vector<LossRecord> rows;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        while (cells.size() < 7) cells.emplace_back();
        if (cells.size() != 7) throw FormatError("bad loss csv row: " + line);
        LossRecord r;
        r.generation = std::stoi(cells[0]);
        r.epoch = std::stoi(cells[1]);
        r.phase = cells[2];
        r.imitation = parse_cell(cells[3]);
        r.reconstruction = parse_cell(cells[4]);
        r.classification = parse_cell(cells[5]);
        r.combined = parse_cell(cells[6]);
        rows.push_back(std::move(r));
    }
    return rows;
}

}  // namespace lta
