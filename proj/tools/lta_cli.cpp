#include <functional>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "lta/errors.hpp"
#include "lta/pipeline.hpp"

namespace {

struct Stage {
    const char* name;
    const char* help;
    void (*fn)(const lta::RunConfig&);
};

constexpr Stage kStages[] = {
    {"synth", "Generate the synthetic long-tailed dataset", lta::stage_synth},
    {"train", "Run the iterated-learning loop and write checkpoints", lta::stage_train},
    {"cam", "Export per-record class activation maps", lta::stage_cam},
    {"augment", "Fuse tail/head records into new tail samples", lta::stage_augment},
    {"eval", "Score baseline, smote and fusion variants", lta::stage_eval},
    {"report", "Merge evaluation rows into the final report", lta::stage_report},
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Long-tail latent augmentation pipeline"};
    app.require_subcommand(1);

    std::string config_path;
    for (const Stage& s : kStages) {
        CLI::App* sub = app.add_subcommand(s.name, s.help);
        sub->add_option("--config", config_path, "Run configuration JSON")->required();
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);  // --help and friends
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;  // unknown subcommand, missing option, ...
    }

    try {
        const lta::RunConfig cfg = lta::load_run_config(config_path);
        for (const Stage& s : kStages)
            if (app.got_subcommand(s.name)) {
                s.fn(cfg);
                std::cerr << s.name << ": done (outputs under " << cfg.out_dir.string() << ")\n";
            }
    } catch (const lta::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
