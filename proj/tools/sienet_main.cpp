// sienet: train, infer and eval subcommands.
//
// Exit codes: 0 ok, 1 runtime abort, 2 config error, 3 checkpoint version error, 4 empty eval.

#include "sienet/config.hpp"
#include "sienet/metrics.hpp"
#include "sienet/training.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>

namespace fs = std::filesystem;
using namespace sienet;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;
constexpr int kExitVersion = 3;
constexpr int kExitEmptyEval = 4;

struct TrainArgs {
    std::string config_path;
    std::string resume;
    bool quiet = false;
    std::map<std::string, std::string> overrides;
};

struct InferArgs {
    std::string checkpoint;
    std::string input;
    std::string structure;
    std::string mode = "two_direction";
    double ratio = 0.25;
    int size = 256;
    std::string out;
};

struct EvalArgs {
    std::string pred;
    std::string gt;
    std::string csv;
    bool bands_only = false;
    std::string mode = "two_direction";
    double ratio = 0.25;
};

int run_train(const TrainArgs& args)
{
    TrainConfig config = TrainConfig::defaults();
    if (!args.config_path.empty()) config = load_config(args.config_path, config);
    // Flags win over the file; apply in the fixed key order for a stable error on multiple faults.
    for (const auto& field : config_fields()) {
        auto it = args.overrides.find(field.key);
        if (it != args.overrides.end()) apply_setting(config, field.key, it->second);
    }
    config.validate();
    std::cout << "# resolved config\n" << to_text(config) << std::flush;

    std::optional<fs::path> resume;
    if (!args.resume.empty()) resume = args.resume;
    const TrainResult result = train_joint(config, resume, [&](const StepReport& r) {
        if (args.quiet) return;
        std::fprintf(stderr, "iter %lld total %.6g masked_l1 %.6g\n", static_cast<long long>(r.iteration), r.total,
                     r.masked_l1);
    });
    std::cout << "final checkpoint: " << result.final_checkpoint.string() << "\n"
              << "loss log: " << result.loss_log.string() << "\n";
    return kExitOk;
}

int run_infer(const InferArgs& args)
{
    const NamedTensors ckpt = NamedTensors::load(args.checkpoint);
    TrainConfig config;
    const Models models = load_models(ckpt, &config);

    const OutpaintMode mode = parse_outpaint_mode(args.mode);
    if (args.size < 16 || args.size % 16 != 0) throw ConfigError("size", "--size must be a positive multiple of 16");
    const Image8 source = resize(read_image8(args.input), args.size, args.size);
    const Tensorf target = to_tensor(source);
    Tensorf structure;
    if (!args.structure.empty()) {
        structure = to_tensor(resize(read_image8(args.structure), args.size, args.size));
    } else {
        StructureOptions opts = config.structure;
        if (opts.method == StructureMethod::file) opts.method = StructureMethod::gaussian;
        structure = smooth_structure(target, opts);
    }
    const FillingTask task = make_filling_task(target, structure, mode, args.ratio);

    const Tensorf coarse = structure_forward(models.structure, NetworkInput<float>{task.canvas, task.mask, task.structure});
    const Tensorf generated = content_forward(models.content, task.canvas, task.mask, coarse).first;

    // Compose in bytes so the known region is copied exactly.
    const Image8 fill = to_image8(generated);
    Image8 out = source;
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x)
            if (task.mask(0, 0, y, x) != 0.0f)
                for (int c = 0; c < 3; ++c) out.at(y, x, c) = fill.at(y, x, c);
    write_image8(out, args.out);
    std::cout << "wrote " << args.out << "\n";
    return kExitOk;
}

int run_eval(const EvalArgs& args)
{
    EvalOptions opts;
    opts.bands_only = args.bands_only;
    opts.mode = parse_outpaint_mode(args.mode);
    opts.ratio = args.ratio;
    const MetricReport report = evaluate_directories(args.pred, args.gt, opts);
    for (const auto& name : report.unmatched) std::cerr << "warning: no counterpart for '" << name << "', skipped\n";
    if (report.entries.empty()) {
        std::cerr << "error: no prediction/ground-truth pairs matched\n";
        return kExitEmptyEval;
    }
    std::cout << report.table();
    if (!args.csv.empty()) {
        std::ofstream out(args.csv);
        out << report.csv();
        if (!out) throw Error("cannot write '" + args.csv + "'");
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Outpainting with adaptive filling convolution and a siamese two-stage generator"};
    app.require_subcommand(1);

    TrainArgs train;
    CLI::App* train_cmd = app.add_subcommand("train", "Joint training of both generators and their critics");
    train_cmd->add_option("--config", train.config_path, "key=value config file")->check(CLI::ExistingFile);
    train_cmd->add_option("--resume", train.resume, "checkpoint to resume from")->check(CLI::ExistingFile);
    train_cmd->add_flag("--quiet", train.quiet, "no per-iteration progress on stderr");
    for (const auto& field : config_fields()) {
        train_cmd->add_option_function<std::string>(
            "--" + field.key, [&train, key = field.key](const std::string& v) { train.overrides[key] = v; }, field.help);
    }

    InferArgs infer;
    CLI::App* infer_cmd = app.add_subcommand("infer", "Extrapolate one image with a trained checkpoint");
    infer_cmd->add_option("--checkpoint", infer.checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
    infer_cmd->add_option("--input", infer.input, "input image (PNG or PPM)")->required()->check(CLI::ExistingFile);
    infer_cmd->add_option("--structure", infer.structure, "precomputed structure map (default: smoothed input)");
    infer_cmd->add_option("--mode", infer.mode, "two_direction or single_direction")->capture_default_str();
    infer_cmd->add_option("--ratio", infer.ratio, "generated fraction per side")->capture_default_str();
    infer_cmd->add_option("--size", infer.size, "working resolution")->capture_default_str();
    infer_cmd->add_option("--out", infer.out, "output PNG")->required();

    EvalArgs eval;
    CLI::App* eval_cmd = app.add_subcommand("eval", "SSIM/PSNR of predictions against ground truth");
    eval_cmd->add_option("--pred", eval.pred, "prediction directory")->required()->check(CLI::ExistingDirectory);
    eval_cmd->add_option("--gt", eval.gt, "ground-truth directory")->required()->check(CLI::ExistingDirectory);
    eval_cmd->add_option("--csv", eval.csv, "write the per-image report here");
    eval_cmd->add_flag("--bands-only", eval.bands_only, "score only the generated bands");
    eval_cmd->add_option("--mode", eval.mode, "band layout for --bands-only")->capture_default_str();
    eval_cmd->add_option("--ratio", eval.ratio, "band ratio for --bands-only")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*train_cmd) return run_train(train);
        if (*infer_cmd) return run_infer(infer);
        if (*eval_cmd) return run_eval(eval);
    } catch (const ConfigError& e) {
        std::cerr << "config error [" << e.key() << "]: " << e.what() << "\n";
        return kExitConfig;
    } catch (const VersionError& e) {
        std::cerr << "checkpoint error: " << e.what() << "\n";
        return kExitVersion;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitRuntime;
}
