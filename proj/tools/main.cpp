#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "drowsy/pipeline.hpp"
#include "drowsy/synth.hpp"

namespace {

using namespace drowsy;

int cmd_run(const std::string& config, const std::string& frames, const std::string& out_path) {
    const PipelineConfig cfg = load_pipeline_config(config);
    std::ofstream out(out_path, std::ios::binary);
    if (!out) {
        throw Error("cannot write " + out_path);
    }
    const RunSummary s = run_sequence(cfg, frames, out);
    std::cerr << "frames " << s.frames << "  detected " << s.detected << "  tracked " << s.tracked << "  lost "
              << s.lost << "  alarms " << s.alarms_raised << "  " << s.throughput_fps() << " fps\n";
    return 0;
}

int cmd_train(const std::string& open_dir, const std::string& closed_dir, const std::string& kind,
              const std::string& model_path, const TrainParams& params) {
    const TrainReport rep = train_from_dirs(open_dir, closed_dir, parse_descriptor_kind(kind), params);
    SvmModel m = rep.model;
    m.metadata["lambda"] = std::to_string(params.lambda);
    m.metadata["epochs"] = std::to_string(params.epochs);
    m.metadata["seed"] = std::to_string(params.seed);
    save_model(std::filesystem::path(model_path), m);
    std::cout << "open " << rep.open_count << "\nclosed " << rep.closed_count << "\ntraining_accuracy "
              << rep.training_accuracy << "\n";
    return 0;
}

int cmd_eval(const std::string& model_path, const std::string& open_dir, const std::string& closed_dir,
             const std::string& roc_path) {
    const SvmModel m = load_model(std::filesystem::path(model_path));
    const EvalReport rep = evaluate_dirs(m, open_dir, closed_dir);
    std::ofstream out(roc_path);
    if (!out) {
        throw Error("cannot write " + roc_path);
    }
    write_roc_csv(out, rep.roc);
    std::cout.precision(17);
    std::cout << "AUC " << rep.roc.auc << "\n";
    return 0;
}

int cmd_synth(const std::string& spec_path, const std::string& out_dir) {
    std::ifstream in(spec_path);
    if (!in) {
        throw Error("cannot open " + spec_path);
    }
    std::stringstream ss;
    ss << in.rdbuf();
    synth::run_spec(ss.str(), out_dir);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Driver drowsiness detection from eye tracking and eye-state classification"};
    app.require_subcommand(1);

    std::string config, frames, out;
    auto* run = app.add_subcommand("run", "Process a frame directory into per-frame JSONL reports");
    run->add_option("--config", config, "Pipeline JSON config")->required()->check(CLI::ExistingFile);
    run->add_option("--frames", frames, "Directory of numbered PNM frames")->required()->check(CLI::ExistingDirectory);
    run->add_option("--out", out, "Output JSONL path")->required();

    std::string open_dir, closed_dir, kind = "hog", model;
    TrainParams params;
    auto* train = app.add_subcommand("train", "Train a linear SVM eye-state model");
    train->add_option("--open", open_dir, "Directory of open-eye images")->required();
    train->add_option("--closed", closed_dir, "Directory of closed-eye images")->required();
    train->add_option("--features", kind, "Descriptor")->check(CLI::IsMember({"hog", "lbp"}));
    train->add_option("--model", model, "Output model path")->required();
    train->add_option("--lambda", params.lambda, "Regularisation strength")->check(CLI::PositiveNumber);
    train->add_option("--epochs", params.epochs, "Passes over the data")->check(CLI::PositiveNumber);
    train->add_option("--seed", params.seed, "Shuffle seed");
    train->add_flag("--balance", params.balance_classes, "Weight classes by inverse frequency");

    std::string roc;
    auto* eval = app.add_subcommand("eval", "ROC and AUC of a model on labelled directories");
    eval->add_option("--model", model, "Model file")->required()->check(CLI::ExistingFile);
    eval->add_option("--open", open_dir, "Directory of open-eye images")->required();
    eval->add_option("--closed", closed_dir, "Directory of closed-eye images")->required();
    eval->add_option("--roc", roc, "Output CSV path")->required();

    std::string spec;
    auto* synth_cmd = app.add_subcommand("synth", "Render a synthetic sequence or eye dataset");
    synth_cmd->add_option("--spec", spec, "Scene JSON")->required()->check(CLI::ExistingFile);
    synth_cmd->add_option("--out", out, "Output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            return cmd_run(config, frames, out);
        }
        if (train->parsed()) {
            return cmd_train(open_dir, closed_dir, kind, model, params);
        }
        if (eval->parsed()) {
            return cmd_eval(model, open_dir, closed_dir, roc);
        }
        if (synth_cmd->parsed()) {
            return cmd_synth(spec, out);
        }
    } catch (const drowsy::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
