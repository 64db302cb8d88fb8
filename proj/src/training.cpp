#include "sienet/training.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace sienet {

namespace fs = std::filesystem;

namespace {

// Stream tags so that each model draws from its own generator regardless of config flags.
constexpr std::uint64_t kStructureTag = 0x5157;
constexpr std::uint64_t kContentTag = 0xc047;
constexpr std::uint64_t kCriticStructureTag = 0xd501;
constexpr std::uint64_t kCriticContentTag = 0xd502;

FeatureExtractor<float> make_features(const TrainConfig& config)
{
    if (config.feature_weights.empty()) return FeatureExtractor<float>::seeded(config.feature_seed);
    const NamedTensors file = NamedTensors::load(config.feature_weights);
    return FeatureExtractor<float>::from_named(file.tensors(), config.feature_weights);
}

std::vector<Tensorf> gradients(const Graph<float>& g, const ParameterList<float>& params)
{
    std::vector<Tensorf> out;
    out.reserve(params.size());
    for (const auto& [name, p] : params) out.push_back(g.grad_of(*p));
    return out;
}

/// Config as echoed into checkpoints: run-location keys are blanked so the bytes depend only on
/// what determines the trajectory.
std::string checkpoint_config_text(TrainConfig config)
{
    config.output_dir.clear();
    config.loss_log.clear();
    return to_text(config);
}

void put_adam(NamedTensors& out, const std::string& prefix, const AdamState<float>& state)
{
    out.put_int(prefix + ".step", state.step);
    for (const auto& [name, t] : state.first) out.put(prefix + ".m." + name, t);
    for (const auto& [name, t] : state.second) out.put(prefix + ".v." + name, t);
}

AdamState<float> get_adam(const NamedTensors& in, const std::string& prefix, const AdamOptions& options)
{
    AdamState<float> state;
    state.options = options;
    state.step = in.get_int(prefix + ".step");
    const std::string m = prefix + ".m.";
    const std::string v = prefix + ".v.";
    for (const auto& r : in.records()) {
        if (r.name.rfind(m, 0) == 0) state.first.emplace(r.name.substr(m.size()), in.tensorf(r.name));
        if (r.name.rfind(v, 0) == 0) state.second.emplace(r.name.substr(v.size()), in.tensorf(r.name));
    }
    return state;
}

void load_parameters(const NamedTensors& in, const ParameterList<float>& params)
{
    for (const auto& [name, p] : params) {
        Tensorf t = in.tensorf(name);
        if (t.shape() != p->shape())
            throw Error("checkpoint tensor '" + name + "' has shape " + to_string(t.shape()) + ", model expects " +
                        to_string(p->shape()));
        *p = std::move(t);
    }
}

TrainConfig checkpoint_config(const NamedTensors& ckpt)
{
    if (ckpt.contains("meta.config_hash") &&
        std::uint64_t(ckpt.get_int("meta.config_hash")) != fnv1a(ckpt.config))
        throw Error("checkpoint config block does not match its recorded hash");
    TrainConfig config = parse_config(ckpt.config, TrainConfig{});
    config.validate();
    return config;
}

}  // namespace

GeneratorConfig generator_config(const TrainConfig& config)
{
    GeneratorConfig g;
    g.width = config.width;
    g.use_filling_conv = config.use_filling_conv;
    g.skip = config.skip;
    return g;
}

Models Models::init(const TrainConfig& config)
{
    const GeneratorConfig gc = generator_config(config);
    std::mt19937_64 rs(mix_seed(config.seed, kStructureTag));
    std::mt19937_64 rc(mix_seed(config.seed, kContentTag));
    std::mt19937_64 rd1(mix_seed(config.seed, kCriticStructureTag));
    std::mt19937_64 rd2(mix_seed(config.seed, kCriticContentTag));
    return Models{StructureGenerator<float>::init(gc, rs), ContentGenerator<float>::init(gc, rc),
                  Discriminator<float>::init(config.width, rd1), Discriminator<float>::init(config.width, rd2),
                  make_features(config)};
}

ParameterList<float> Models::generator_parameters()
{
    ParameterList<float> out = structure.parameters("structure");
    for (auto& p : content.parameters("content")) out.push_back(p);
    return out;
}

ParameterList<float> Models::discriminator_parameters()
{
    ParameterList<float> out = critic_structure.parameters("critic_structure");
    for (auto& p : critic_content.parameters("critic_content")) out.push_back(p);
    return out;
}

GeneratorPass generator_pass(Models& models, const TaskBatch& batch, const TrainConfig& config, Graph<float>& graph)
{
    const Binder<float> trainable{graph, true};
    const Binder<float> frozen{graph, false};
    Var<float> canvas = graph.frozen(batch.canvas);
    Var<float> mask = graph.frozen(batch.mask);
    Var<float> structure = graph.frozen(batch.structure);
    Var<float> target = graph.frozen(batch.target);
    Var<float> target_structure = graph.frozen(batch.target_structure);

    GeneratorPass pass;
    auto coarse = models.structure(trainable, concat_channels<float>({canvas, mask, structure}));
    auto fine = models.content(trainable, canvas, mask, coarse.image);
    pass.structure = coarse.image;
    pass.output = fine.image;
    pass.feature = fine.bottleneck;

    pass.distance = distance_loss(coarse.image, target_structure);
    const auto target_features = extract_features(models.features, target);
    const auto output_features = extract_features(models.features, fine.image);
    pass.perceptual = perceptual_loss(target_features, output_features);
    pass.style = style_loss(target_features, output_features);

    if (config.use_stage1_adv)
        pass.adversarial = generator_adversarial_loss(models.critic_structure(frozen, coarse.image));
    if (config.use_stage2_adv) {
        Var<float> g2 = generator_adversarial_loss(models.critic_content(frozen, fine.image));
        pass.adversarial = pass.adversarial.valid() ? pass.adversarial + g2 : g2;
    }

    if (config.use_siamese) {
        // Uncovered input: X = Y, same filling map, S = S^gt, through the same weights.
        auto run_ground_truth = [&](Graph<float>& g, const Binder<float>& bind) {
            Var<float> y = g.frozen(batch.target);
            Var<float> m = g.frozen(batch.mask);
            Var<float> s = g.frozen(batch.target_structure);
            auto gt_coarse = models.structure(bind, concat_channels<float>({y, m, s}));
            return models.content.encode(bind, y, m, gt_coarse.image);
        };
        if (config.siamese_symmetric) {
            pass.feature_target = run_ground_truth(graph, trainable);
        } else {
            Graph<float> side;
            pass.feature_target = graph.constant(run_ground_truth(side, Binder<float>{side, false}).value());
        }
        pass.siamese = siamese_loss(fine.bottleneck, pass.feature_target, config.siamese_rooted);
        pass.siamese_branch_ran = true;
    }

    const LossWeights& w = config.weights;
    std::vector<std::pair<double, Var<float>>> terms = {
        {w.distance, pass.distance}, {w.perceptual, pass.perceptual}, {w.style, pass.style}};
    if (pass.adversarial.valid()) terms.emplace_back(w.adversarial, pass.adversarial);
    if (pass.siamese.valid()) terms.emplace_back(w.siamese, pass.siamese);
    pass.total = weighted_total(terms);
    return pass;
}

double masked_l1(const Tensorf& output, const Tensorf& target, const Tensorf& mask)
{
    require_same_shape(output, target, "masked_l1");
    const Shape s = output.shape();
    if (mask.shape() != Shape{s.n, 1, s.h, s.w}) throw Error("masked_l1: mask shape mismatch");
    double total = 0.0;
    std::int64_t count = 0;
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int y = 0; y < s.h; ++y)
                for (int x = 0; x < s.w; ++x)
                    if (mask(n, 0, y, x) != 0.0f) {
                        total += std::abs(double(output(n, c, y, x)) - double(target(n, c, y, x)));
                        ++count;
                    }
    if (count == 0) return 0.0;
    return total / double(count);
}

std::string csv_header()
{
    return "iteration,distance,adversarial,perceptual,style,siamese,total,critic_structure,critic_content,masked_l1\n";
}

std::string csv_row(const StepReport& r)
{
    char line[512];
    const LossComponents& c = r.components;
    std::snprintf(line, sizeof line, "%lld,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n",
                  static_cast<long long>(r.iteration), c.distance, c.adversarial, c.perceptual, c.style, c.siamese,
                  r.total, r.critic_structure, r.critic_content, r.masked_l1);
    return line;
}

Trainer::Trainer(TrainConfig config) : config_(std::move(config)), models_(Models::init(config_))
{
    config_.validate();
    adam_generators_.options = config_.adam;
    adam_critics_.options = config_.adam;
}

StepReport Trainer::train_step(const TaskBatch& batch)
{
    StepReport report;
    Graph<float> graph;
    GeneratorPass pass = generator_pass(models_, batch, config_, graph);

    report.components.distance = pass.distance.value().item();
    report.components.perceptual = pass.perceptual.value().item();
    report.components.style = pass.style.value().item();
    report.components.adversarial = pass.adversarial.valid() ? pass.adversarial.value().item() : 0.0;
    report.components.siamese = pass.siamese.valid() ? pass.siamese.value().item() : 0.0;
    report.total = pass.total.value().item();
    report.siamese_branch_ran = pass.siamese_branch_ran;
    report.masked_l1 = masked_l1(pass.output.value(), batch.target, batch.mask);
    if (!std::isfinite(report.total)) {
        const auto& c = report.components;
        throw Error("non-finite total loss: distance=" + std::to_string(c.distance) +
                    " adversarial=" + std::to_string(c.adversarial) + " perceptual=" + std::to_string(c.perceptual) +
                    " style=" + std::to_string(c.style) + " siamese=" + std::to_string(c.siamese));
    }

    graph.backward(pass.total);
    const ParameterList<float> gen_params = models_.generator_parameters();
    adam_step(gen_params, gradients(graph, gen_params), adam_generators_);

    if (config_.use_stage1_adv || config_.use_stage2_adv) {
        Graph<float> critic_graph;
        const Binder<float> bind{critic_graph, true};
        ParameterList<float> critic_params;
        Var<float> critic_total;
        if (config_.use_stage1_adv) {
            Var<float> d = discriminator_loss(models_.critic_structure(bind, critic_graph.frozen(batch.target_structure)),
                                              models_.critic_structure(bind, critic_graph.constant(pass.structure.value())));
            report.critic_structure = d.value().item();
            critic_total = d;
            critic_params = models_.critic_structure.parameters("critic_structure");
        }
        if (config_.use_stage2_adv) {
            Var<float> d = discriminator_loss(models_.critic_content(bind, critic_graph.frozen(batch.target)),
                                              models_.critic_content(bind, critic_graph.constant(pass.output.value())));
            report.critic_content = d.value().item();
            critic_total = critic_total.valid() ? critic_total + d : d;
            for (auto& p : models_.critic_content.parameters("critic_content")) critic_params.push_back(p);
        }
        critic_graph.backward(critic_total);
        adam_step(critic_params, gradients(critic_graph, critic_params), adam_critics_);
    }

    report.iteration = ++iteration_;
    return report;
}

double Trainer::evaluate(const TaskBatch& batch) const
{
    NetworkInput<float> in{batch.canvas, batch.mask, batch.structure};
    const Tensorf coarse = structure_forward(models_.structure, in);
    const Tensorf output = content_forward(models_.content, batch.canvas, batch.mask, coarse).first;
    return masked_l1(output, batch.target, batch.mask);
}

void Trainer::set_run_control(const TrainConfig& run)
{
    config_.iterations = run.iterations;
    config_.checkpoint_every = run.checkpoint_every;
    config_.output_dir = run.output_dir;
    config_.loss_log = run.loss_log;
    config_.images_dir = run.images_dir;
    config_.structures_dir = run.structures_dir;
    config_.validate();
}

NamedTensors Trainer::checkpoint() const
{
    NamedTensors out;
    out.config = checkpoint_config_text(config_);
    out.put_int("meta.iteration", iteration_);
    out.put_int("meta.feature_seed", std::int64_t(config_.feature_seed));
    out.put_int("meta.config_hash", std::int64_t(fnv1a(out.config)));
    Models& m = const_cast<Models&>(models_);
    for (const auto& [name, t] : m.generator_parameters()) out.put(name, *t);
    for (const auto& [name, t] : m.discriminator_parameters()) out.put(name, *t);
    put_adam(out, "adam.generators", adam_generators_);
    put_adam(out, "adam.critics", adam_critics_);
    return out;
}

Trainer Trainer::from_checkpoint(const NamedTensors& ckpt)
{
    Trainer t(checkpoint_config(ckpt));
    load_parameters(ckpt, t.models_.generator_parameters());
    load_parameters(ckpt, t.models_.discriminator_parameters());
    t.adam_generators_ = get_adam(ckpt, "adam.generators", t.config_.adam);
    t.adam_critics_ = get_adam(ckpt, "adam.critics", t.config_.adam);
    t.iteration_ = ckpt.get_int("meta.iteration");
    return t;
}

Models load_models(const NamedTensors& ckpt, TrainConfig* config_out)
{
    TrainConfig config = checkpoint_config(ckpt);
    Models models = Models::init(config);
    load_parameters(ckpt, models.generator_parameters());
    load_parameters(ckpt, models.discriminator_parameters());
    if (config_out) *config_out = config;
    return models;
}

TaskBatch batch_for_iteration(const Dataset& dataset, const TrainConfig& config, std::int64_t k)
{
    const BatchStream stream(dataset, config.batch_size, config.seed);
    TaskOptions options;
    options.mode = config.mode;
    options.ratio = config.ratio;
    options.size = config.resolution;
    options.structure = config.structure;
    options.flip = config.flip;
    std::vector<FillingTask> tasks;
    for (std::size_t idx : stream.batch_at(std::uint64_t(k)))
        tasks.push_back(load_task(dataset.entries()[idx], options, mix_seed(config.seed, std::uint64_t(k), idx)));
    return stack_tasks(tasks);
}

TrainResult train_joint(const TrainConfig& requested, const std::optional<fs::path>& resume,
                        const std::function<void(const StepReport&)>& on_step)
{
    requested.validate();
    if (requested.images_dir.empty()) throw ConfigError("images_dir", "config key 'images_dir' is required");
    if (!fs::is_directory(requested.images_dir))
        throw ConfigError("images_dir", "config key 'images_dir': '" + requested.images_dir + "' is not a directory");

    Trainer trainer = resume ? Trainer::from_checkpoint(NamedTensors::load(*resume)) : Trainer(requested);
    trainer.set_run_control(requested);
    const TrainConfig& config = trainer.config();

    const Dataset dataset = Dataset::open(
        config.images_dir, config.structures_dir.empty() ? std::nullopt : std::optional<fs::path>(config.structures_dir));
    const fs::path out_dir = config.output_dir;
    fs::create_directories(out_dir);
    const fs::path log_path = config.loss_log.empty() ? out_dir / "loss.csv" : fs::path(config.loss_log);

    // Keep only rows up to the resume point so the log matches an uninterrupted run.
    std::string kept = csv_header();
    if (resume && fs::exists(log_path)) {
        std::ifstream in(log_path);
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            if (std::stoll(line.substr(0, line.find(','))) <= trainer.iteration()) kept += line + "\n";
        }
    }
    {
        std::ofstream out(log_path, std::ios::trunc);
        out << kept;
        if (!out) throw Error("cannot write loss log '" + log_path.string() + "'");
    }
    std::ofstream log(log_path, std::ios::app);

    auto save = [&](const fs::path& path) { trainer.checkpoint().save(path); };
    while (trainer.iteration() < config.iterations) {
        const TaskBatch batch = batch_for_iteration(dataset, config, trainer.iteration());
        const StepReport report = trainer.train_step(batch);
        log << csv_row(report);
        log.flush();
        if (!log) throw Error("failed writing loss log '" + log_path.string() + "'");
        if (on_step) on_step(report);
        if (config.checkpoint_every > 0 && report.iteration % config.checkpoint_every == 0) {
            char name[64];
            std::snprintf(name, sizeof name, "ckpt_%08lld.sien", static_cast<long long>(report.iteration));
            save(out_dir / name);
            save(out_dir / "latest.sien");
        }
    }
    TrainResult result;
    result.final_checkpoint = out_dir / "final.sien";
    save(result.final_checkpoint);
    result.loss_log = log_path;
    result.iterations = trainer.iteration();
    return result;
}

}  // namespace sienet
