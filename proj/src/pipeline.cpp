#include "lta/pipeline.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "lta/cam.hpp"
#include "lta/errors.hpp"
#include "lta/tensor_io.hpp"

namespace lta {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void check_known(const json& j, const std::string& prefix,
                 std::initializer_list<const char*> allowed) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* a : allowed)
            if (it.key() == a) {
                ok = true;
                break;
            }
        if (!ok) throw ConfigError("unknown config key: " + prefix + it.key());
    }
}

const json& get_section(const json& j, const char* key) {
    static const json empty = json::object();
    if (!j.contains(key)) return empty;
    if (!j.at(key).is_object())
        throw ConfigError(std::string("config key ") + key + " must be an object");
    return j.at(key);
}

int get_int(const json& j, const std::string& prefix, const char* key, int dflt) {
    if (!j.contains(key)) return dflt;
    if (!j.at(key).is_number_integer())
        throw ConfigError("config key " + prefix + key + " must be an integer");
    return j.at(key).get<int>();
}

float get_float(const json& j, const std::string& prefix, const char* key, float dflt) {
    if (!j.contains(key)) return dflt;
    if (!j.at(key).is_number())
        throw ConfigError("config key " + prefix + key + " must be a number");
    return j.at(key).get<float>();
}

bool get_bool(const json& j, const std::string& prefix, const char* key, bool dflt) {
    if (!j.contains(key)) return dflt;
    if (!j.at(key).is_boolean())
        throw ConfigError("config key " + prefix + key + " must be a boolean");
    return j.at(key).get<bool>();
}

std::string get_string(const json& j, const std::string& prefix, const char* key,
                       const std::string& dflt) {
    if (!j.contains(key)) return dflt;
    if (!j.at(key).is_string())
        throw ConfigError("config key " + prefix + key + " must be a string");
    return j.at(key).get<std::string>();
}

template <typename Fn>
void validated(const char* section, Fn fn) {
    try {
        fn();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string(section) + ": " + e.what());
    }
}

}  // namespace

RunConfig load_run_config(const fs::path& file) {
    std::ifstream is(file);
    if (!is) throw ConfigError("cannot open config file: " + file.string());
    std::stringstream buf;
    buf << is.rdbuf();

    json j = json::parse(buf.str(), nullptr, false);
    if (j.is_discarded()) throw ConfigError("config file is not valid JSON: " + file.string());
    if (!j.is_object()) throw ConfigError("config root must be a JSON object");
    check_known(j, "", {"seed", "out_dir", "synth", "partition", "train", "cam", "augment", "eval"});

    RunConfig rc;
    rc.config_json = buf.str();
    if (j.contains("seed")) {
        const json& s = j.at("seed");
        if (!s.is_number_integer() || (s.is_number_integer() && !s.is_number_unsigned() &&
                                       s.get<int64_t>() < 0))
            throw ConfigError("config key seed must be an unsigned integer");
        rc.seed = s.get<uint64_t>();
    }
    rc.out_dir = get_string(j, "", "out_dir", "run");

    {
        const json& s = get_section(j, "synth");
        check_known(s, "synth.",
                    {"head_classes", "tail_classes", "head_count", "tail_count", "test_per_class",
                     "dims", "noise_std", "co_occur"});
        rc.synth.head_classes = get_int(s, "synth.", "head_classes", rc.synth.head_classes);
        rc.synth.tail_classes = get_int(s, "synth.", "tail_classes", rc.synth.tail_classes);
        rc.synth.head_count = get_int(s, "synth.", "head_count", rc.synth.head_count);
        rc.synth.tail_count = get_int(s, "synth.", "tail_count", rc.synth.tail_count);
        rc.synth.test_per_class = get_int(s, "synth.", "test_per_class", rc.synth.test_per_class);
        rc.synth.noise_std = get_float(s, "synth.", "noise_std", rc.synth.noise_std);
        rc.synth.co_occur = get_float(s, "synth.", "co_occur", rc.synth.co_occur);
        if (s.contains("dims")) {
            const json& d = s.at("dims");
            if (!d.is_array() || d.size() != 3)
                throw ConfigError("config key synth.dims must be an array of 3 integers");
            for (size_t i = 0; i < 3; ++i) {
                if (!d[i].is_number_integer() || d[i].get<int64_t>() <= 0)
                    throw ConfigError("config key synth.dims must hold positive integers");
                rc.synth.dims[i] = d[i].get<uint32_t>();
            }
        }
        validated("synth", [&] { rc.synth.validate(); });
    }
    {
        const json& s = get_section(j, "partition");
        check_known(s, "partition.", {"threshold"});
        rc.partition_threshold = get_int(s, "partition.", "threshold", rc.partition_threshold);
        if (rc.partition_threshold < 0)
            throw ConfigError("config key partition.threshold must be >= 0");
    }
    {
        const json& s = get_section(j, "train");
        check_known(s, "train.",
                    {"generations", "imitation_epochs", "interaction_epochs", "lambda", "lr",
                     "batch_size", "sparse_channels", "hidden"});
        rc.train.generations = get_int(s, "train.", "generations", rc.train.generations);
        rc.train.imitation_epochs = get_int(s, "train.", "imitation_epochs", rc.train.imitation_epochs);
        rc.train.interaction_epochs =
            get_int(s, "train.", "interaction_epochs", rc.train.interaction_epochs);
        rc.train.lambda = get_float(s, "train.", "lambda", rc.train.lambda);
        rc.train.lr = get_float(s, "train.", "lr", rc.train.lr);
        rc.train.batch_size = get_int(s, "train.", "batch_size", rc.train.batch_size);
        rc.train.sparse_channels = get_int(s, "train.", "sparse_channels", rc.train.sparse_channels);
        rc.train.hidden = get_int(s, "train.", "hidden", rc.train.hidden);
        validated("train", [&] { rc.train.validate(); });
    }
    {
        const json& s = get_section(j, "cam");
        check_known(s, "cam.", {"tau_h", "tau_l", "class_gated"});
        rc.tau_h = get_float(s, "cam.", "tau_h", rc.tau_h);
        rc.tau_l = get_float(s, "cam.", "tau_l", rc.tau_l);
        rc.cam_class_gated = get_bool(s, "cam.", "class_gated", rc.cam_class_gated);
        if (!(rc.tau_h > 0.0f && rc.tau_h < 1.0f))
            throw ConfigError("config key cam.tau_h must lie in (0,1)");
        if (!(rc.tau_l > 0.0f && rc.tau_l < 1.0f))
            throw ConfigError("config key cam.tau_l must lie in (0,1)");
    }
    {
        const json& s = get_section(j, "augment");
        check_known(s, "augment.", {"k", "target_per_tail", "denoise"});
        rc.knn_k = get_int(s, "augment.", "k", rc.knn_k);
        rc.target_per_tail = get_int(s, "augment.", "target_per_tail", rc.target_per_tail);
        const json& d = get_section(s, "denoise");
        check_known(d, "augment.denoise.", {"base_steps", "divisor", "tag", "conditioning"});
        rc.denoise.base_steps = get_int(d, "augment.denoise.", "base_steps", rc.denoise.base_steps);
        rc.denoise.divisor = get_int(d, "augment.denoise.", "divisor", rc.denoise.divisor);
        rc.denoise.tag = get_string(d, "augment.denoise.", "tag", rc.denoise.tag);
        rc.denoise.conditioning =
            get_string(d, "augment.denoise.", "conditioning", rc.denoise.conditioning);
        validated("augment", [&] {
            AugmentConfig a;
            a.tau_h = rc.tau_h;
            a.tau_l = rc.tau_l;
            a.k = rc.knn_k;
            a.target_per_tail = rc.target_per_tail;
            a.denoise = rc.denoise;
            a.validate();
        });
    }
    {
        const json& s = get_section(j, "eval");
        check_known(s, "eval.", {"epochs", "lr", "batch_size", "hidden", "smote_k"});
        rc.eval.epochs = get_int(s, "eval.", "epochs", rc.eval.epochs);
        rc.eval.lr = get_float(s, "eval.", "lr", rc.eval.lr);
        rc.eval.batch_size = get_int(s, "eval.", "batch_size", rc.eval.batch_size);
        rc.eval.hidden = get_int(s, "eval.", "hidden", rc.eval.hidden);
        rc.smote_k = get_int(s, "eval.", "smote_k", rc.smote_k);
        if (rc.smote_k < 1) throw ConfigError("config key eval.smote_k must be >= 1");
        validated("eval", [&] { rc.eval.validate(); });
    }

    if (const char* env = std::getenv("LTA_MASTER_SEED")) {
        char* end = nullptr;
        const unsigned long long v = std::strtoull(env, &end, 10);
        if (end == env || *end != '\0')
            throw ConfigError("LTA_MASTER_SEED must be an unsigned integer");
        rc.seed = static_cast<uint64_t>(v);
    }
    return rc;
}

namespace {

fs::path dataset_manifest_path(const RunConfig& cfg) {
    return cfg.out_dir / "dataset" / "manifest.json";
}

DatasetManifest load_dataset(const RunConfig& cfg) {
    const fs::path p = dataset_manifest_path(cfg);
    if (!fs::exists(p))
        throw ConfigError("dataset manifest not found at " + p.string() + "; run synth first");
    return load_manifest(p);
}

fs::path final_gen_dir(const RunConfig& cfg) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "gen_%03d", cfg.train.generations - 1);
    return cfg.out_dir / "ckpt" / buf;
}

struct Models {
    StudentNet<float> student;
    DecoderNet<float> decoder;
    ClassifierNet<float> classifier;
};

Models load_final_models(const RunConfig& cfg) {
    const fs::path dir = final_gen_dir(cfg);
    if (!fs::exists(dir / "student" / "meta.json"))
        throw ConfigError("checkpoints not found under " + dir.string() + "; run train first");
    return {load_student(dir / "student"), load_decoder(dir / "decoder"),
            load_classifier(dir / "classifier")};
}

ILConfig train_config(const RunConfig& cfg) {
    ILConfig il = cfg.train;
    il.seed = substream(cfg.seed, "train");
    return il;
}

AugmentConfig augment_config(const RunConfig& cfg) {
    AugmentConfig a;
    a.tau_h = cfg.tau_h;
    a.tau_l = cfg.tau_l;
    a.k = cfg.knn_k;
    a.target_per_tail = cfg.target_per_tail;
    a.denoise = cfg.denoise;
    a.seed = substream(cfg.seed, "augment");
    return a;
}

void rebase_records(DatasetManifest& m, const DatasetManifest& src, const fs::path& new_base) {
    m.base_dir = new_base;
    for (Record& r : m.records) r.tensor = fs::relative(src.tensor_path(r), new_base).string();
}

}  // namespace

void stage_synth(const RunConfig& cfg) {
    const fs::path dir = cfg.out_dir / "dataset";
    DatasetManifest m = synth_longtail(cfg.synth, substream(cfg.seed, "synth"), dir);
    save_manifest(m, dir / "manifest.json");
}

void stage_train(const RunConfig& cfg) {
    const DatasetManifest m = load_dataset(cfg);
    CheckpointSet ck = run_il(train_config(cfg), m);
    const fs::path root = cfg.out_dir / "ckpt";
    fs::create_directories(root);
    for (int g = 0; g < cfg.train.generations; ++g) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "gen_%03d", g);
        const fs::path dir = root / buf;
        save_student(ck.students[static_cast<size_t>(g)], dir / "student", g);
        save_decoder(ck.decoders[static_cast<size_t>(g)], dir / "decoder", g);
        save_classifier(ck.classifiers[static_cast<size_t>(g)], dir / "classifier", g);
    }
    write_loss_csv(ck.history, root / "loss_history.csv");
}

void stage_cam(const RunConfig& cfg) {
    const DatasetManifest m = load_dataset(cfg);
    const Models models = load_final_models(cfg);
    const fs::path dir = cfg.out_dir / "cams";
    fs::create_directories(dir);
    for (size_t i : m.split_indices(Split::train)) {
        const Record& rec = m.records[i];
        const Tensor sparse = student_forward(models.student, read_tensor(m.tensor_path(rec)));
        for (int c = 0; c < m.num_classes(); ++c) {
            if (!rec.labels.positive(c)) continue;
            const CamMap cam = class_cam(models.classifier, sparse, c, cfg.cam_class_gated);
            const std::string stem = rec.id + "_" + m.class_names[static_cast<size_t>(c)];
            write_tensor(cam.m, dir / (stem + ".lta"));
            write_pgm(cam.m, dir / (stem + ".pgm"));
        }
    }
}

void stage_augment(const RunConfig& cfg) {
    const DatasetManifest m = load_dataset(cfg);
    const PartitionSpec part = partition_by_threshold(m, cfg.partition_threshold);
    const Models models = load_final_models(cfg);
    const fs::path dir = cfg.out_dir / "augmented";
    DatasetManifest aug = augment_tailset(m, part, models.student, models.decoder,
                                          models.classifier, augment_config(cfg), dir);
    save_manifest(aug, dir / "manifest.json");
}

void stage_eval(const RunConfig& cfg) {
    const DatasetManifest orig = load_dataset(cfg);
    const PartitionSpec part = partition_by_threshold(orig, cfg.partition_threshold);
    const uint64_t eval_seed = substream(cfg.seed, "eval");
    const uint64_t downstream_seed = substream(eval_seed, "downstream");
    const fs::path eval_dir = cfg.out_dir / "eval";
    fs::create_directories(eval_dir);

    EvalReport report;
    report.seed = cfg.seed;
    report.config_echo = cfg.config_json;

    report.rows.push_back(
        downstream_eval(orig, orig, part, cfg.eval, downstream_seed, "baseline"));

    // Interpolative oversampling baseline: per tail class, convex mixes of
    // real same-class latents, labeled with that class only.
    {
        const fs::path dir = eval_dir / "smote";
        fs::create_directories(dir / "tensors");
        DatasetManifest sm = orig;
        rebase_records(sm, orig, dir);
        for (int t : part.tail) {
            std::vector<Tensor> pool;
            std::vector<size_t> members;
            for (size_t i : orig.split_indices(Split::train))
                if (orig.records[i].labels.positive(t))
                    pool.push_back(read_tensor(orig.tensor_path(orig.records[i])));
            const int deficit = cfg.target_per_tail - static_cast<int>(pool.size());
            if (deficit <= 0) continue;
            const auto samples = smote_oversample(pool, deficit, cfg.smote_k,
                                                  substream(eval_seed, "smote", static_cast<uint64_t>(t)));
            for (size_t i = 0; i < samples.size(); ++i) {
                Record rec;
                rec.id = "smote_" + sm.class_names[static_cast<size_t>(t)] + "_" + std::to_string(i);
                rec.tensor = "tensors/" + rec.id + ".lta";
                rec.labels = LabelVector(static_cast<size_t>(sm.num_classes()));
                rec.labels.y[static_cast<size_t>(t)] = 1;
                rec.split = Split::train;
                rec.synthetic = true;
                write_tensor(samples[i], dir / rec.tensor);
                sm.records.push_back(std::move(rec));
            }
        }
        save_manifest(sm, dir / "manifest.json");
        report.rows.push_back(downstream_eval(sm, orig, part, cfg.eval, downstream_seed, "smote"));
    }

    // Fusion variants share the augment-stage seed so they pair the same
    // records; only the denoising schedule differs.
    {
        const Models models = load_final_models(cfg);
        AugmentConfig a0 = augment_config(cfg);
        a0.denoise.tag = "identity";
        const fs::path dir = eval_dir / "ours0";
        DatasetManifest m0 = augment_tailset(orig, part, models.student, models.decoder,
                                             models.classifier, a0, dir);
        save_manifest(m0, dir / "manifest.json");
        report.rows.push_back(downstream_eval(m0, orig, part, cfg.eval, downstream_seed, "ours@0"));
    }
    {
        const fs::path aug_manifest = cfg.out_dir / "augmented" / "manifest.json";
        if (!fs::exists(aug_manifest))
            throw ConfigError("augmented manifest not found at " + aug_manifest.string() +
                              "; run augment first");
        const DatasetManifest aug = load_manifest(aug_manifest);
        const int steps = cfg.denoise.tag == "identity" ? 0 : cfg.denoise.steps();
        report.rows.push_back(downstream_eval(aug, orig, part, cfg.eval, downstream_seed,
                                              "ours@" + std::to_string(steps)));
    }

    write_eval_report_json(report, eval_dir / "report.json");
    write_eval_report_csv(report, eval_dir / "report.csv");
}

void stage_report(const RunConfig& cfg) {
    const fs::path src = cfg.out_dir / "eval" / "report.json";
    if (!fs::exists(src))
        throw ConfigError("eval report not found at " + src.string() + "; run eval first");
    EvalReport report = read_eval_report_json(src);
    report.seed = cfg.seed;
    if (!cfg.config_json.empty()) report.config_echo = cfg.config_json;
    const fs::path dir = cfg.out_dir / "report";
    fs::create_directories(dir);
    write_eval_report_json(report, dir / "report.json");
    write_eval_report_csv(report, dir / "report.csv");
}

}  // namespace lta
