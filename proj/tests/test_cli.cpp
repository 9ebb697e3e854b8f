// Black-box tests of the pipeline executable: exit codes, stderr surface,
// stage ordering, artifact layout and cross-run determinism.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "lta/dataset.hpp"
#include "lta/metrics.hpp"

#include "helpers.hpp"

using namespace lta;
using testutil::TempDir;
namespace fs = std::filesystem;

namespace {

struct CliResult {
    int code = -1;
    std::string err;
};

CliResult run_cli(const std::string& args, const fs::path& scratch,
                  const std::string& env_prefix = "") {
    const fs::path errfile = scratch / "stderr.txt";
    const std::string cmd = env_prefix + "\"" + LTA_CLI_PATH + "\" " + args + " 2> \"" +
                            errfile.string() + "\"";
    const int raw = std::system(cmd.c_str());
    CliResult r;
    r.code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    r.err = testutil::read_text(errfile);
    return r;
}

std::string tiny_config_json(const fs::path& out_dir) {
    return std::string(R"({
  "seed": 11,
  "out_dir": ")") +
           out_dir.string() + R"(",
  "synth": {"head_classes": 2, "tail_classes": 2, "head_count": 12, "tail_count": 3,
            "test_per_class": 3, "dims": [4, 4, 2]},
  "partition": {"threshold": 5},
  "train": {"generations": 2, "imitation_epochs": 2, "interaction_epochs": 3,
            "sparse_channels": 8, "hidden": 8, "batch_size": 16},
  "augment": {"k": 2, "target_per_tail": 6, "denoise": {"base_steps": 4, "divisor": 2}},
  "eval": {"epochs": 4, "hidden": 6, "batch_size": 8, "smote_k": 2}
})";
}

fs::path write_tiny_config(const TempDir& dir, const fs::path& out_dir,
                           const std::string& name = "run.json") {
    const fs::path p = dir / name;
    testutil::write_text(p, tiny_config_json(out_dir));
    return p;
}

size_t count_files_with_extension(const fs::path& dir, const std::string& ext) {
    size_t n = 0;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ext) ++n;
    return n;
}

}  // namespace

TEST_CASE("argument parsing exit codes") {
    TempDir dir("cli-args");
    SUBCASE("--help succeeds") { CHECK(run_cli("--help", dir.path()).code == 0); }
    SUBCASE("no arguments is a usage error") { CHECK(run_cli("", dir.path()).code == 2); }
    SUBCASE("unknown subcommand is a usage error") {
        CHECK(run_cli("frobnicate --config x.json", dir.path()).code == 2);
    }
    SUBCASE("missing --config is a usage error") {
        CHECK(run_cli("synth", dir.path()).code == 2);
    }
    SUBCASE("unreadable config file is a runtime error") {
        const CliResult r = run_cli("synth --config \"" + (dir / "nope.json").string() + "\"",
                                    dir.path());
        CHECK(r.code == 1);
        CHECK(r.err.find("cannot open config file") != std::string::npos);
    }
}

TEST_CASE("config validation failures name the offending key") {
    TempDir dir("cli-config");
    const fs::path out = dir / "run";

    SUBCASE("unknown nested key") {
        const fs::path p = dir / "bogus.json";
        testutil::write_text(p, R"({"out_dir": ")" + out.string() + R"(", "synth": {"bogus": 1}})");
        const CliResult r = run_cli("synth --config \"" + p.string() + "\"", dir.path());
        CHECK(r.code == 1);
        CHECK_MESSAGE(r.err.find("unknown config key: synth.bogus") != std::string::npos, r.err);
    }
    SUBCASE("unknown top-level key") {
        const fs::path p = dir / "top.json";
        testutil::write_text(p, R"({"frobnicate": true})");
        const CliResult r = run_cli("synth --config \"" + p.string() + "\"", dir.path());
        CHECK(r.code == 1);
        CHECK_MESSAGE(r.err.find("unknown config key: frobnicate") != std::string::npos, r.err);
    }
    SUBCASE("invalid JSON") {
        const fs::path p = dir / "broken.json";
        testutil::write_text(p, "{\"seed\": 1,");
        const CliResult r = run_cli("synth --config \"" + p.string() + "\"", dir.path());
        CHECK(r.code == 1);
        CHECK_MESSAGE(r.err.find("not valid JSON") != std::string::npos, r.err);
    }
    SUBCASE("wrong value type") {
        const fs::path p = dir / "type.json";
        testutil::write_text(p, R"({"train": {"lr": "fast"}})");
        const CliResult r = run_cli("synth --config \"" + p.string() + "\"", dir.path());
        CHECK(r.code == 1);
        CHECK_MESSAGE(r.err.find("config key train.lr must be a number") != std::string::npos,
                      r.err);
    }
    SUBCASE("section validation propagates with the section prefix") {
        const fs::path p = dir / "zero-gen.json";
        testutil::write_text(p, R"({"train": {"generations": 0}})");
        const CliResult r = run_cli("synth --config \"" + p.string() + "\"", dir.path());
        CHECK(r.code == 1);
        CHECK_MESSAGE(r.err.find("train: generations must be >= 1") != std::string::npos, r.err);
    }
}

TEST_CASE("stages refuse to run before their inputs exist") {
    TempDir dir("cli-order");
    const fs::path cfg = write_tiny_config(dir, dir / "run");

    const CliResult train = run_cli("train --config \"" + cfg.string() + "\"", dir.path());
    CHECK(train.code == 1);
    CHECK_MESSAGE(train.err.find("run synth first") != std::string::npos, train.err);

    REQUIRE(run_cli("synth --config \"" + cfg.string() + "\"", dir.path()).code == 0);
    const CliResult cam = run_cli("cam --config \"" + cfg.string() + "\"", dir.path());
    CHECK(cam.code == 1);
    CHECK_MESSAGE(cam.err.find("run train first") != std::string::npos, cam.err);

    const CliResult report = run_cli("report --config \"" + cfg.string() + "\"", dir.path());
    CHECK(report.code == 1);
    CHECK_MESSAGE(report.err.find("run eval first") != std::string::npos, report.err);
}

TEST_CASE("end-to-end pipeline produces the full artifact tree") {
    TempDir dir("cli-e2e");
    const fs::path out = dir / "run";
    const fs::path cfg = write_tiny_config(dir, out);

    for (const char* stage : {"synth", "train", "cam", "augment", "eval", "report"}) {
        const CliResult r =
            run_cli(std::string(stage) + " --config \"" + cfg.string() + "\"", dir.path());
        CHECK_MESSAGE(r.code == 0, stage << ": " << r.err);
        REQUIRE(r.code == 0);
        CHECK(r.err.find(std::string(stage) + ": done") != std::string::npos);
    }

    SUBCASE("dataset artifacts") {
        const DatasetManifest m = load_manifest(out / "dataset" / "manifest.json");
        CHECK(m.num_classes() == 4);
        CHECK(m.split_indices(Split::train).size() == 30);  // 2*12 + 2*3
        CHECK(m.split_indices(Split::test).size() == 12);   // 4*3
    }
    SUBCASE("checkpoint artifacts") {
        for (const char* gen : {"gen_000", "gen_001"})
            for (const char* net : {"student", "decoder", "classifier"})
                CHECK(fs::exists(out / "ckpt" / gen / net / "meta.json"));
        CHECK(!fs::exists(out / "ckpt" / "gen_002"));
        const std::string csv = testutil::read_text(out / "ckpt" / "loss_history.csv");
        CHECK(csv.rfind("generation,epoch,phase,imitation,reconstruction,classification,combined\n",
                        0) == 0);
    }
    SUBCASE("activation map artifacts") {
        // 30 train records, one positive label each: one map per record,
        // exported both as a tensor and as a grayscale image.
        CHECK(count_files_with_extension(out / "cams", ".lta") == 30);
        CHECK(count_files_with_extension(out / "cams", ".pgm") == 30);
    }
    SUBCASE("augmented manifest reaches the tail target with provenance") {
        const DatasetManifest aug = load_manifest(out / "augmented" / "manifest.json");
        CHECK(aug.records.size() == 42 + 6);  // 30 train + 12 test + 2 tails * 3 new
        const std::vector<int> pos = aug.train_positives();
        CHECK(pos[2] == 6);
        CHECK(pos[3] == 6);
        size_t synthetic = 0;
        for (const Record& r : aug.records)
            if (r.synthetic) {
                ++synthetic;
                CHECK(!r.tail_id.empty());
                CHECK(!r.head_id.empty());
                CHECK(r.denoise_steps == 2);  // round(4 / 2)
                CHECK(r.split == Split::train);
            }
        CHECK(synthetic == 6);
    }
    SUBCASE("evaluation report schema") {
        for (const char* stem : {"eval", "report"}) {
            const EvalReport rep = read_eval_report_json(out / stem / "report.json");
            CHECK(rep.seed == 11);
            CHECK(rep.config_echo.find("head_classes") != std::string::npos);
            REQUIRE(rep.rows.size() == 4);
            CHECK(rep.rows[0].method == "baseline");
            CHECK(rep.rows[1].method == "smote");
            CHECK(rep.rows[2].method == "ours@0");
            CHECK(rep.rows[3].method == "ours@2");
            CHECK(std::isnan(rep.rows[0].avg_tail_fd));
            for (size_t i = 1; i < 4; ++i) {
                CHECK(std::isfinite(rep.rows[i].avg_tail_fd));
                CHECK(rep.rows[i].avg_tail_fd >= 0.0);
            }
            for (const EvalRow& row : rep.rows) {
                CHECK(row.head_map >= 0.0);
                CHECK(row.head_map <= 1.0);
                CHECK(row.tail_map >= 0.0);
                CHECK(row.tail_map <= 1.0);
            }
        }
        const std::string csv = testutil::read_text(out / "report" / "report.csv");
        CHECK(csv.rfind("method,avg_tail_fd,head_map,tail_map\n", 0) == 0);
        CHECK(csv.find("baseline,,") != std::string::npos);
    }
}

TEST_CASE("dataset generation is deterministic and seed-sensitive") {
    TempDir dir("cli-seeds");
    const fs::path out_a = dir / "a";
    const fs::path out_b = dir / "b";
    const fs::path out_c = dir / "c";
    const fs::path cfg_a = write_tiny_config(dir, out_a, "a.json");
    const fs::path cfg_b = write_tiny_config(dir, out_b, "b.json");
    const fs::path cfg_c = write_tiny_config(dir, out_c, "c.json");

    REQUIRE(run_cli("synth --config \"" + cfg_a.string() + "\"", dir.path()).code == 0);
    REQUIRE(run_cli("synth --config \"" + cfg_b.string() + "\"", dir.path()).code == 0);
    REQUIRE(run_cli("synth --config \"" + cfg_c.string() + "\"", dir.path(),
                    "LTA_MASTER_SEED=99 ")
                .code == 0);

    // Same seed, different out_dir: identical manifest bytes (tensor refs are
    // relative) and identical tensor payloads.
    const auto bytes_a = testutil::read_bytes(out_a / "dataset" / "manifest.json");
    CHECK(bytes_a == testutil::read_bytes(out_b / "dataset" / "manifest.json"));
    const DatasetManifest ma = load_manifest(out_a / "dataset" / "manifest.json");
    const DatasetManifest mb = load_manifest(out_b / "dataset" / "manifest.json");
    REQUIRE(ma.records.size() == mb.records.size());
    for (size_t i = 0; i < ma.records.size(); ++i)
        CHECK(testutil::read_bytes(ma.tensor_path(ma.records[i])) ==
              testutil::read_bytes(mb.tensor_path(mb.records[i])));

    // Environment seed override wins over the config seed.
    const DatasetManifest mc = load_manifest(out_c / "dataset" / "manifest.json");
    bool any_diff = false;
    for (size_t i = 0; i < ma.records.size() && !any_diff; ++i)
        any_diff = testutil::read_bytes(ma.tensor_path(ma.records[i])) !=
                   testutil::read_bytes(mc.tensor_path(mc.records[i]));
    CHECK(any_diff);

    // Re-running the stage in place rewrites the same bytes.
    REQUIRE(run_cli("synth --config \"" + cfg_a.string() + "\"", dir.path()).code == 0);
    CHECK(testutil::read_bytes(out_a / "dataset" / "manifest.json") == bytes_a);
}
