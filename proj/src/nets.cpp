#include "lta/nets.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "lta/errors.hpp"
#include "lta/tensor_io.hpp"

namespace lta {

namespace fs = std::filesystem;
using nlohmann::json;

Tensor sample_onehot(const Tensor& p, uint64_t seed) {
    if (p.rank() != 3) throw ShapeError("sample_onehot: rank-3 tensor expected");
    if (!is_simplex(p)) throw NumericError("sample_onehot: rows are not on the simplex");
    const int C = static_cast<int>(p.dim(2));
    const size_t ncoord = static_cast<size_t>(p.dim(0)) * p.dim(1);
    Tensor out(p.shape());
    Rng rng(seed);
    for (size_t i = 0; i < ncoord; ++i) {
        const float* row = p.data() + i * C;
        float* o = out.data() + i * C;
        std::fill(o, o + C, 0.0f);
        const double u = rng.uniform();
        double acc = 0.0;
        int pick = C - 1;  // fall through to the last channel on round-off
        for (int k = 0; k < C; ++k) {
            acc += row[k];
            if (u < acc) {
                pick = k;
                break;
            }
        }
        o[pick] = 1.0f;
    }
    return out;
}

bool is_simplex(const Tensor& t, float tol) {
    if (t.rank() != 3) return false;
    const int C = static_cast<int>(t.dim(2));
    const size_t ncoord = static_cast<size_t>(t.dim(0)) * t.dim(1);
    for (size_t i = 0; i < ncoord; ++i) {
        const float* row = t.data() + i * C;
        float sum = 0.0f;
        for (int k = 0; k < C; ++k) {
            if (!(row[k] >= 0.0f)) return false;  // also rejects NaN
            sum += row[k];
        }
        if (std::fabs(sum - 1.0f) > tol) return false;
    }
    return true;
}

bool is_binary_onehot(const Tensor& t) {
    if (t.rank() != 3) return false;
    const int C = static_cast<int>(t.dim(2));
    const size_t ncoord = static_cast<size_t>(t.dim(0)) * t.dim(1);
    for (size_t i = 0; i < ncoord; ++i) {
        const float* row = t.data() + i * C;
        int ones = 0;
        for (int k = 0; k < C; ++k) {
            if (row[k] == 1.0f)
                ++ones;
            else if (row[k] != 0.0f)
                return false;
        }
        if (ones != 1) return false;
    }
    return true;
}

Tensor student_forward(const StudentNet<float>& s, const Tensor& z) {
    StudentNet<float>::Cache cc;
    s.forward(z, cc);
    Tensor out({z.dim(0), z.dim(1), static_cast<uint32_t>(s.sparse_c)});
    std::copy(cc.probs.begin(), cc.probs.end(), out.data());
    return out;
}

Tensor decoder_forward(const DecoderNet<float>& d, const Tensor& zs) {
    DecoderNet<float>::Cache cc;
    d.forward(zs, cc);
    Tensor out({zs.dim(0), zs.dim(1), static_cast<uint32_t>(d.out_c)});
    std::copy(cc.out.begin(), cc.out.end(), out.data());
    return out;
}

ClassScores classifier_forward(const ClassifierNet<float>& c, const Tensor& zs) {
    ClassifierNet<float>::Cache cc;
    c.forward(zs, cc);
    ClassScores r;
    r.scores = cc.scores;
    r.activations = Tensor({zs.dim(0), zs.dim(1), static_cast<uint32_t>(c.hidden)});
    std::copy(cc.feat.begin(), cc.feat.end(), r.activations.data());
    return r;
}

namespace {

template <typename Net>
void save_net(Net& n, const fs::path& dir, const std::string& arch, const json& dims,
              int generation) {
    fs::create_directories(dir);
    json meta;
    meta["architecture"] = arch;
    meta["dims"] = dims;
    meta["generation"] = generation;
    std::ofstream mf(dir / "meta.json");
    if (!mf) throw FormatError("cannot write " + (dir / "meta.json").string());
    mf << meta.dump(2) << "\n";
    n.for_each_param([&](const std::string& name, std::vector<float>& w, std::vector<float>&,
                         const std::vector<uint32_t>& shape) {
        Tensor t(shape);
        std::copy(w.begin(), w.end(), t.data());
        write_tensor(t, dir / (name + ".lta"));
    });
}

json load_meta(const fs::path& dir, const std::string& arch) {
    std::ifstream mf(dir / "meta.json");
    if (!mf) throw FormatError("cannot read " + (dir / "meta.json").string());
    json meta = json::parse(mf, nullptr, false);
    if (meta.is_discarded()) throw FormatError("invalid JSON in " + (dir / "meta.json").string());
    if (!meta.contains("architecture") || meta["architecture"] != arch)
        throw FormatError("checkpoint at " + dir.string() + " is not a " + arch + " checkpoint");
    return meta;
}

template <typename Net>
void load_params(Net& n, const fs::path& dir) {
    n.for_each_param([&](const std::string& name, std::vector<float>& w, std::vector<float>&,
                         const std::vector<uint32_t>& shape) {
        Tensor t = read_tensor(dir / (name + ".lta"));
        if (t.shape() != shape)
            throw ShapeError("checkpoint tensor " + name + " has unexpected shape");
        std::copy(t.data(), t.data() + t.numel(), w.begin());
    });
}

}  // namespace

void save_student(StudentNet<float>& n, const fs::path& dir, int generation) {
    save_net(n, dir, "student", json{{"in_c", n.in_c}, {"hidden", n.hidden}, {"sparse_c", n.sparse_c}},
             generation);
}

void save_decoder(DecoderNet<float>& n, const fs::path& dir, int generation) {
    save_net(n, dir, "decoder", json{{"in_c", n.in_c}, {"hidden", n.hidden}, {"out_c", n.out_c}},
             generation);
}

void save_classifier(ClassifierNet<float>& n, const fs::path& dir, int generation) {
    save_net(n, dir, "classifier",
             json{{"in_c", n.in_c}, {"hidden", n.hidden}, {"n_classes", n.n_classes}}, generation);
}

StudentNet<float> load_student(const fs::path& dir) {
    json meta = load_meta(dir, "student");
    const json& d = meta.at("dims");
    Rng dummy(0);
    auto n = StudentNet<float>::make(d.at("in_c"), d.at("hidden"), d.at("sparse_c"), dummy);
    load_params(n, dir);
    return n;
}

DecoderNet<float> load_decoder(const fs::path& dir) {
    json meta = load_meta(dir, "decoder");
    const json& d = meta.at("dims");
    Rng dummy(0);
    auto n = DecoderNet<float>::make(d.at("in_c"), d.at("hidden"), d.at("out_c"), dummy);
    load_params(n, dir);
    return n;
}

ClassifierNet<float> load_classifier(const fs::path& dir) {
    json meta = load_meta(dir, "classifier");
    const json& d = meta.at("dims");
    Rng dummy(0);
    auto n = ClassifierNet<float>::make(d.at("in_c"), d.at("hidden"), d.at("n_classes"), dummy);
    load_params(n, dir);
    return n;
}

}  // namespace lta
