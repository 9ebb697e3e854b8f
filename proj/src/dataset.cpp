#include "lta/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "lta/rng.hpp"
#include "lta/tensor_io.hpp"

namespace lta {

using nlohmann::json;

std::vector<size_t> DatasetManifest::split_indices(Split s) const {
    std::vector<size_t> out;
    for (size_t i = 0; i < records.size(); ++i)
        if (records[i].split == s) out.push_back(i);
    return out;
}

std::vector<int> DatasetManifest::train_positives() const {
    std::vector<int> counts(class_names.size(), 0);
    for (const Record& r : records) {
        if (r.split != Split::train) continue;
        for (size_t c = 0; c < r.labels.y.size(); ++c)
            if (r.labels.y[c]) ++counts[c];
    }
    return counts;
}

namespace {

json record_to_json(const Record& r) {
    json j;
    j["id"] = r.id;
    j["tensor"] = r.tensor;
    j["labels"] = r.labels.y;
    j["split"] = r.split == Split::train ? "train" : "test";
    if (r.synthetic) {
        j["synthetic"] = true;
        j["tail_id"] = r.tail_id;
        j["head_id"] = r.head_id;
        j["seed"] = r.seed;
        j["denoise_steps"] = r.denoise_steps;
    }
    return j;
}

Record record_from_json(const json& j, size_t k) {
    Record r;
    r.id = j.at("id").get<std::string>();
    r.tensor = j.at("tensor").get<std::string>();
    const auto& labels = j.at("labels");
    if (!labels.is_array() || labels.size() != k)
        throw FormatError("manifest: record '" + r.id + "' has wrong label length");
    r.labels.y.reserve(k);
    for (const auto& v : labels) {
        const int b = v.get<int>();
        if (b != 0 && b != 1)
            throw FormatError("manifest: record '" + r.id + "' has non-binary label");
        r.labels.y.push_back(static_cast<uint8_t>(b));
    }
    const std::string split = j.at("split").get<std::string>();
    if (split == "train")
        r.split = Split::train;
    else if (split == "test")
        r.split = Split::test;
    else
        throw FormatError("manifest: record '" + r.id + "' has unknown split");
    if (j.value("synthetic", false)) {
        r.synthetic = true;
        r.tail_id = j.value("tail_id", "");
        r.head_id = j.value("head_id", "");
        r.seed = j.value("seed", uint64_t(0));
        r.denoise_steps = j.value("denoise_steps", 0);
    }
    return r;
}

}  // namespace

void save_manifest(const DatasetManifest& m, const std::filesystem::path& file) {
    json j;
    j["dims"] = m.dims;
    j["class_names"] = m.class_names;
    j["records"] = json::array();
    for (const Record& r : m.records) j["records"].push_back(record_to_json(r));
    std::ofstream os(file, std::ios::trunc);
    if (!os) throw FormatError("manifest: cannot open for write: " + file.string());
    os << j.dump(2) << "\n";
}

DatasetManifest load_manifest(const std::filesystem::path& file) {
    std::ifstream is(file);
    if (!is) throw FormatError("manifest: cannot open: " + file.string());
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw FormatError(std::string("manifest: bad JSON: ") + e.what());
    }

    DatasetManifest m;
    m.base_dir = file.parent_path();
    const auto& dims = j.at("dims");
    if (!dims.is_array() || dims.size() != 3) throw FormatError("manifest: dims must have 3 entries");
    for (size_t i = 0; i < 3; ++i) {
        m.dims[i] = dims[i].get<uint32_t>();
        if (m.dims[i] == 0) throw FormatError("manifest: zero dim");
    }
    m.class_names = j.at("class_names").get<std::vector<std::string>>();
    if (m.class_names.empty()) throw FormatError("manifest: no classes");

    std::set<std::string> ids;
    for (const auto& rj : j.at("records")) {
        Record r = record_from_json(rj, m.class_names.size());
        if (!ids.insert(r.id).second)
            throw FormatError("manifest: duplicate record id '" + r.id + "'");
        if (r.split == Split::train && r.labels.count() == 0)
            throw FormatError("manifest: train record '" + r.id + "' has no positive label");
        if (!std::filesystem::exists(m.tensor_path(r)))
            throw FormatError("manifest: tensor ref not resolvable: " + r.tensor);
        m.records.push_back(std::move(r));
    }

    const std::vector<int> counts = m.train_positives();
    for (size_t c = 0; c < counts.size(); ++c)
        if (counts[c] == 0)
            throw FormatError("manifest: class '" + m.class_names[c] +
                              "' has no train records");
    return m;
}

void SynthConfig::validate() const {
    if (head_classes < 1) throw ConfigError("synth.head_classes must be >= 1");
    if (tail_classes < 1) throw ConfigError("synth.tail_classes must be >= 1");
    if (head_count < 1) throw ConfigError("synth.head_count must be >= 1");
    if (tail_count < 1) throw ConfigError("synth.tail_count must be >= 1");
    if (test_per_class < 1) throw ConfigError("synth.test_per_class must be >= 1");
    if (dims[0] < 4 || dims[1] < 4) throw ConfigError("synth.dims: H and W must be >= 4");
    if (dims[2] < 1) throw ConfigError("synth.dims: C must be >= 1");
    if (!(noise_std >= 0.f)) throw ConfigError("synth.noise_std must be >= 0");
    if (!(co_occur >= 0.f && co_occur <= 1.f))
        throw ConfigError("synth.co_occur must be in [0, 1]");
    class_regions(num_classes(), static_cast<int>(dims[0]), static_cast<int>(dims[1]));
}

std::vector<RegionRect> class_regions(int K, int H, int W) {
    const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(K))));
    const int rows = (K + cols - 1) / cols;
    const int rh = H / rows;
    const int rw = W / cols;
    if (rh < 1 || rw < 1)
        throw ConfigError("synth: class regions do not fit in the H x W grid");
    std::vector<RegionRect> out;
    out.reserve(static_cast<size_t>(K));
    for (int c = 0; c < K; ++c) {
        const int r = c / cols;
        const int col = c % cols;
        out.push_back({r * rh, col * rw, (r + 1) * rh, (col + 1) * rw});
    }
    return out;
}

namespace {

// Prototype patch for one class: one value per (region coordinate, channel).
std::vector<float> draw_prototype(const RegionRect& rect, int C, Rng& rng) {
    const size_t n = static_cast<size_t>(rect.y1 - rect.y0) *
                     static_cast<size_t>(rect.x1 - rect.x0) * static_cast<size_t>(C);
    std::vector<float> p(n);
    for (float& v : p) v = static_cast<float>(rng.uniform(0.5, 1.5));
    return p;
}

void add_patch(Tensor& z, const RegionRect& rect, const std::vector<float>& patch) {
    const int C = static_cast<int>(z.dim(2));
    size_t idx = 0;
    for (int y = rect.y0; y < rect.y1; ++y)
        for (int x = rect.x0; x < rect.x1; ++x)
            for (int c = 0; c < C; ++c)
                z(static_cast<size_t>(y), static_cast<size_t>(x),
                  static_cast<size_t>(c)) += patch[idx++];
}

}  // namespace

DatasetManifest synth_longtail(const SynthConfig& cfg, uint64_t seed,
                               const std::filesystem::path& out_dir) {
    cfg.validate();
    const int K = cfg.num_classes();
    const int H = static_cast<int>(cfg.dims[0]);
    const int W = static_cast<int>(cfg.dims[1]);
    const int C = static_cast<int>(cfg.dims[2]);
    const auto regions = class_regions(K, H, W);

    Rng proto_rng(substream(seed, "prototypes"));
    std::vector<std::vector<float>> prototypes;
    prototypes.reserve(static_cast<size_t>(K));
    for (int c = 0; c < K; ++c) prototypes.push_back(draw_prototype(regions[c], C, proto_rng));

    DatasetManifest m;
    m.dims = cfg.dims;
    m.base_dir = out_dir;
    for (int c = 0; c < cfg.head_classes; ++c) m.class_names.push_back("head_" + std::to_string(c));
    for (int c = 0; c < cfg.tail_classes; ++c) m.class_names.push_back("tail_" + std::to_string(c));

    std::filesystem::create_directories(out_dir / "tensors");

    Rng rng(substream(seed, "records"));
    auto emit = [&](int primary, int index, Split split) {
        Record r;
        r.split = split;
        r.id = (split == Split::train ? "tr_" : "te_") + m.class_names[primary] + "_" +
               std::to_string(index);
        r.tensor = "tensors/" + r.id + ".lta";
        r.labels = LabelVector(static_cast<size_t>(K));
        r.labels.y[primary] = 1;
        for (int d = 0; d < K; ++d)
            if (d != primary && rng.uniform() < cfg.co_occur) r.labels.y[d] = 1;

        Tensor z({cfg.dims[0], cfg.dims[1], cfg.dims[2]});
        for (int d = 0; d < K; ++d)
            if (r.labels.y[d]) add_patch(z, regions[d], prototypes[d]);
        for (float& v : z.vec())
            v += static_cast<float>(rng.normal(0.0, cfg.noise_std));

        write_tensor(z, m.tensor_path(r));
        m.records.push_back(std::move(r));
    };

    for (int c = 0; c < K; ++c) {
        const int count = c < cfg.head_classes ? cfg.head_count : cfg.tail_count;
        for (int i = 0; i < count; ++i) emit(c, i, Split::train);
    }
    for (int c = 0; c < K; ++c)
        for (int i = 0; i < cfg.test_per_class; ++i) emit(c, i, Split::test);

    return m;
}

bool PartitionSpec::is_head(int c) const {
    return std::binary_search(head.begin(), head.end(), c);
}

void PartitionSpec::validate(int K) const {
    if (head.empty()) throw PartitionError("partition: head set is empty");
    if (tail.empty()) throw PartitionError("partition: tail set is empty");
    std::vector<bool> seen(static_cast<size_t>(K), false);
    for (const auto* side : {&head, &tail}) {
        for (int c : *side) {
            if (c < 0 || c >= K) throw PartitionError("partition: class id out of range");
            if (seen[static_cast<size_t>(c)])
                throw PartitionError("partition: class assigned twice");
            seen[static_cast<size_t>(c)] = true;
        }
    }
    for (bool s : seen)
        if (!s) throw PartitionError("partition: class not covered");
}

PartitionSpec partition_explicit(const DatasetManifest& m, std::vector<int> head,
                                 std::vector<int> tail) {
    std::sort(head.begin(), head.end());
    std::sort(tail.begin(), tail.end());
    PartitionSpec p{std::move(head), std::move(tail)};
    p.validate(m.num_classes());
    return p;
}

PartitionSpec partition_by_threshold(const DatasetManifest& m, int threshold) {
    const std::vector<int> counts = m.train_positives();
    PartitionSpec p;
    for (int c = 0; c < m.num_classes(); ++c) {
        if (counts[static_cast<size_t>(c)] > threshold)
            p.head.push_back(c);
        else
            p.tail.push_back(c);
    }
    p.validate(m.num_classes());
    return p;
}

}  // namespace lta
