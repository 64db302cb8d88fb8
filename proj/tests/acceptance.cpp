// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include "sienet/discriminator.hpp"
#include "sienet/generators.hpp"
#include "sienet/kernels.hpp"
#include "sienet/losses.hpp"
#include "sienet/metrics.hpp"
#include "sienet/training.hpp"
#include "test_support.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <numeric>

using namespace sienet;
using namespace sienet::testing;

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(int id, const char* title, bool pass, const std::string& detail)
{
    std::printf("[%s] criterion %2d  %-28s %s\n", pass ? "PASS" : "FAIL", id, title, detail.c_str());
    std::fflush(stdout);
    if (!pass) ++failures;
}

template <typename... Args>
std::string fmt(const char* f, Args... args)
{
    char buf[256];
    std::snprintf(buf, sizeof buf, f, double(args)...);
    return buf;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

// Smooth periodic scene with a few hard edges, so both the structure and the texture matter.
Image8 synthetic_scene(int size)
{
    Image8 img{size, size, std::vector<std::uint8_t>(std::size_t(size) * size * 3)};
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const double r = 128 + 90 * std::sin(x / 6.0) + (y > size / 2 ? 30 : -30);
            const double g = 128 + 80 * std::cos(y / 5.0);
            const double b = 128 + 60 * std::sin((x + y) / 9.0) + ((x / 8) % 2 ? 25 : -25);
            img.at(y, x, 0) = std::uint8_t(std::clamp(r, 0.0, 255.0));
            img.at(y, x, 1) = std::uint8_t(std::clamp(g, 0.0, 255.0));
            img.at(y, x, 2) = std::uint8_t(std::clamp(b, 0.0, 255.0));
        }
    return img;
}

fs::path scene_dataset(const std::string& name, int size)
{
    const fs::path dir = scratch_dir(name);
    fs::create_directories(dir / "images");
    write_image8(synthetic_scene(size), dir / "images" / "scene.png");
    return dir;
}

void operator_oracle()
{
    const auto t0 = Clock::now();
    std::mt19937_64 rng(101);
    std::uniform_int_distribution<int> n(1, 2), c(1, 4), side(1, 8), kern(0, 2);
    double worst = 0.0;
    int cases = 0;
    for (; cases < 200; ++cases) {
        const int k = 1 + 2 * kern(rng);
        const Tensord x = random_tensor(Shape{n(rng), c(rng), side(rng), side(rng)}, rng);
        const auto p = random_filling_params(x.shape().c, k, rng);
        const SkipBranch skip = cases % 2 ? SkipBranch::center : SkipBranch::box;
        const Tensord a = filling_conv_forward(x, p, skip).output;
        const Tensord b = filling_conv_oracle(x, p, skip);
        for (std::int64_t i = 0; i < a.size(); ++i) worst = std::max(worst, relative_error(a[i], b[i], 1e-12));
    }
    const double t = seconds_since(t0);
    report(1, "operator oracle", worst < 1e-6 && t < 10.0,
           fmt("%.0f cases, max rel err %.3g (< 1e-6), %.2f s (< 10 s)", cases, worst, t));
}

void reduction_property()
{
    std::mt19937_64 rng(102);
    std::int64_t mismatches = 0, compared = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const int k = 1 + 2 * (trial % 4);
        const int ch = 1 + trial % 5;
        const Tensorf x = random_tensor<float>(Shape{1 + trial % 2, ch, 4 + trial % 9, 5 + trial % 7}, rng);
        FillingConvParams<float> p = FillingConvParams<float>::init(ch, k, rng, 0.3f);
        p.padding_bias.fill_uniform(rng, -1.0f, 1.0f);
        p.mask_weight.fill_uniform(rng, -1.0f, 1.0f);
        const Shape s = x.shape();
        const Tensorf ones(Shape{s.n, 1, s.h, s.w}, 1.0f);
        const Tensorf a = filling_conv_forward(x, p, ones).output;
        const Tensorf b = kernels::conv2d(x, p.padding_weight, &p.padding_bias, 1, k / 2);
        for (std::int64_t i = 0; i < a.size(); ++i) mismatches += a[i] != b[i];
        compared += a.size();
    }
    report(2, "reduction to conv2d", mismatches == 0,
           fmt("%.0f of %.0f outputs differ bit-wise (exact)", double(mismatches), double(compared)));
}

void gradient_suite()
{
    const auto t0 = Clock::now();
    std::mt19937_64 rng(103);
    double worst = 0.0;
    int checked = 0, kinked = 0, fewest = 1 << 30;
    auto take = [&](const GradCheck& r) {
        worst = std::max(worst, r.max_rel_error);
        fewest = std::min(fewest, r.checked);
        checked += r.checked;
        kinked += r.kinked;
    };

    for (SkipBranch skip : {SkipBranch::box, SkipBranch::center}) {
        Tensord x = random_tensor(Shape{2, 3, 6, 5}, rng);
        auto p = random_filling_params(3, 3, rng);
        const Tensord probe = random_tensor(x.shape(), rng);
        take(check_gradients(
            [&](Graph<double>& g, const std::vector<Var<double>>& v) {
                return sum(filling_conv(v[0], v[1], v[2], v[3], v[4], skip) * g.constant(probe));
            },
            {&x, &p.padding_weight, &p.padding_bias, &p.mask_weight, &p.mask_bias}));
    }

    const FeatureExtractor<double> fe = FeatureExtractor<double>::seeded();
    const Tensord target = random_tensor(Shape{1, 3, 16, 16}, rng);
    const Tensord feature_target = random_tensor(Shape{1, 8, 2, 2}, rng);
    const Tensord real_logits = random_tensor(Shape{1, 1, 4, 4}, rng, -3.0, 3.0);
    for (int which = 0; which < 6; ++which) {
        Tensord generated = which == 0   ? random_tensor(Shape{1, 8, 2, 2}, rng)
                            : which >= 4 ? random_tensor(Shape{1, 1, 4, 4}, rng, -3.0, 3.0)
                                         : random_tensor(Shape{1, 3, 16, 16}, rng);
        take(check_gradients(
            [&](Graph<double>& g, const std::vector<Var<double>>& v) {
                switch (which) {
                    case 0: return siamese_loss(v[0], g.constant(feature_target));
                    case 1: return distance_loss(v[0], g.constant(target));
                    case 2: return perceptual_loss(fe, g.constant(target), v[0]);
                    case 3: return style_loss(fe, g.constant(target), v[0]);
                    case 4: return discriminator_loss(g.constant(real_logits), v[0]);
                    default: return generator_adversarial_loss(v[0]);
                }
            },
            {&generated}, 1e-3, 64, 200 + which));
    }

    Tensord x = random_tensor(Shape{1, 2, 6, 6}, rng);
    Tensord w = random_tensor(Shape{3, 2, 3, 3}, rng);
    const Tensord chain_target = random_tensor(Shape{1, 3, 6, 6}, rng, 2.0, 3.0);
    take(check_gradients(
        [&](Graph<double>& g, const std::vector<Var<double>>& v) {
            return mean_abs_diff(leaky_relu(instance_norm(conv2d(v[0], v[1], 1, 1))), g.constant(chain_target));
        },
        {&x, &w}));

    const double t = seconds_since(t0);
    report(3, "gradient suite", worst < 1e-4 && t < 120.0 && fewest >= 16,
           fmt("%.0f probes (%.0f kink-straddling skipped, >= %.0f per check), max rel err %.3g (< 1e-4), %.1f s (< 120 s)",
               checked, kinked, fewest, worst, t));
}

void loss_identities()
{
    std::mt19937_64 rng(104);
    const Tensord a = random_tensor(Shape{1, 3, 32, 32}, rng);
    const FeatureExtractor<double> fe = FeatureExtractor<double>::seeded();
    Graph<double> g;
    Var<double> x = g.constant(a), y = g.constant(a);
    const double s = siamese_loss(x, y).value().item();
    const double d = distance_loss(x, y).value().item();
    const double p = perceptual_loss(fe, x, y).value().item();
    const double st = style_loss(fe, x, y).value().item();
    const double adv = adversarial_losses(Tensord(Shape{1, 1, 16, 16}), Tensord(Shape{1, 1, 16, 16})).d_loss;
    const double total = total_loss(LossWeights{}, LossComponents{1, 1, 1, 1, 1});
    const bool pass = s == 0 && d == 0 && p == 0 && st == 0 && std::abs(adv - 2 * std::log(2.0)) <= 1e-9 &&
                      std::abs(total - 257.1) <= 1e-9;
    report(4, "loss identities", pass,
           fmt("identical-input losses max %.3g; d_loss(0) - 2 log 2 = %.3g; total(1) = %.12g", std::max({s, d, p, st}),
               adv - 2 * std::log(2.0), total));
}

void gram_invariance()
{
    std::mt19937_64 rng(105);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const Tensord x = random_tensor(Shape{2, 16, 8, 8}, rng);
        std::vector<int> perm(64);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        Tensord shuffled(x.shape());
        for (int n = 0; n < 2; ++n)
            for (int c = 0; c < 16; ++c)
                for (int q = 0; q < 64; ++q) shuffled.sample(n)(c, q) = x.sample(n)(c, perm[q]);
        Graph<double> g;
        const Tensord ga = gram(g.constant(x)).value();
        const Tensord gb = gram(g.constant(shuffled)).value();
        worst = std::max(worst, (ga.array() - gb.array()).abs().maxCoeff());
    }
    report(5, "gram invariance", worst <= 1e-6, fmt("20 permutations, max |dG| %.3g (<= 1e-6)", worst));
}

void shape_pipeline()
{
    std::mt19937_64 rng(106);
    const GeneratorConfig cfg;
    const auto structure = StructureGenerator<float>::init(cfg, rng);
    const auto content = ContentGenerator<float>::init(cfg, rng);
    const auto critic = Discriminator<float>::init(cfg.width, rng);
    const Tensorf image = random_tensor<float>(Shape{1, 3, 256, 256}, rng);
    StructureOptions so;
    const FillingTask task = make_filling_task(image, smooth_structure(image, so), OutpaintMode::two_direction, 0.25);

    Graph<float> g;
    const Binder<float> frozen{g, false};
    Var<float> input = network_input(g, NetworkInput<float>{task.canvas, task.mask, task.structure});
    auto s = structure(frozen, input);
    auto c = content(frozen, g.frozen(task.canvas), g.frozen(task.mask), s.image);
    Var<float> logits = critic(frozen, c.image);
    const bool shapes = input.shape() == Shape{1, 7, 256, 256} && s.bottleneck.shape() == Shape{1, 256, 32, 32} &&
                        s.image.shape() == Shape{1, 3, 256, 256} && c.image.shape() == Shape{1, 3, 256, 256} &&
                        logits.shape() == Shape{1, 1, 16, 16};
    const bool finite = s.image.value().all_finite() && c.image.value().all_finite() && logits.value().all_finite();
    report(6, "shape pipeline", shapes && finite,
           "bottleneck " + to_string(s.bottleneck.shape()) + ", S_gen " + to_string(s.image.shape()) + ", Y_hat " +
               to_string(c.image.shape()) + ", logits " + to_string(logits.shape()) + (finite ? ", finite" : ", NON-FINITE"));
}

void metric_oracles()
{
    std::mt19937_64 rng(107);
    std::uniform_int_distribution<int> byte(0, 255);
    auto random_bytes = [&](const Shape& s) {
        Tensord t(s);
        for (std::int64_t i = 0; i < t.size(); ++i) t[i] = byte(rng);
        return t;
    };
    const double p = psnr(Tensord(Shape{1, 3, 8, 8}, 0.0), Tensord(Shape{1, 3, 8, 8}, 127.5));
    const Tensord x = random_bytes(Shape{1, 3, 32, 32});
    const double self = ssim(x, x);
    double asym = 0.0, ref = 0.0;
    for (int i = 0; i < 100; ++i) {
        const Tensord a = random_bytes(Shape{1, 3, 16, 16});
        const Tensord b = random_bytes(Shape{1, 3, 16, 16});
        asym = std::max(asym, std::abs(ssim(a, b) - ssim(b, a)));
    }
    for (int i = 0; i < 10; ++i) {
        const Tensord a = random_bytes(Shape{1, 3, 21, 18});
        Tensord b = a;
        std::normal_distribution<double> noise(0.0, 8.0 * (i + 1));
        for (std::int64_t k = 0; k < b.size(); ++k) b[k] = std::clamp(std::round(b[k] + noise(rng)), 0.0, 255.0);
        ref = std::max(ref, std::abs(ssim(a, b) - reference_ssim(a, b)));
    }
    const bool pass = std::abs(p - 10 * std::log10(4.0)) <= 1e-6 && self == 1.0 && asym <= 1e-9 && ref <= 1e-6;
    report(7, "metric oracles", pass,
           fmt("psnr %.7f dB; ssim(x,x) = %.17g; max asym %.3g; max |ssim - ref| %.3g", p, self, asym, ref));
}

void training_dynamics()
{
    const auto t0 = Clock::now();
    TrainConfig config;
    config.images_dir = scene_dataset("acceptance_overfit", 64).string();
    config.resolution = 64;
    config.batch_size = 1;
    const Dataset dataset = Dataset::open(config.images_dir);
    Trainer trainer(config);
    const double initial = trainer.evaluate(batch_for_iteration(dataset, config, 0));
    bool finite = true;
    for (std::int64_t k = 0; k < 500; ++k) finite &= std::isfinite(trainer.train_step(batch_for_iteration(dataset, config, k)).total);
    const double final_l1 = trainer.evaluate(batch_for_iteration(dataset, config, 500));
    const double t = seconds_since(t0);
    report(8, "training dynamics", finite && final_l1 <= 0.5 * initial && t < 900.0,
           fmt("masked L1 %.4f -> %.4f (ratio %.3f <= 0.5) after 500 its, %.0f s (< 900 s)", initial, final_l1,
               final_l1 / initial, t));
}

void ablation_mechanics()
{
    const auto t0 = Clock::now();
    const fs::path data = scene_dataset("acceptance_ablation", 64);
    bool pass = true;
    std::string detail;
    for (bool fconv : {true, false})
        for (bool sam : {true, false}) {
            TrainConfig config;
            config.images_dir = data.string();
            config.output_dir = scratch_dir("acceptance_ablation_run").string();
            config.batch_size = 1;
            config.iterations = 100;
            config.checkpoint_every = 0;
            config.use_filling_conv = fconv;
            config.use_siamese = sam;
            bool ok = true, siamese_zero = true;
            try {
                train_joint(config, {}, [&](const StepReport& r) {
                    ok &= std::isfinite(r.total);
                    siamese_zero &= r.components.siamese == 0.0 && !r.siamese_branch_ran;
                });
            } catch (const std::exception& e) {
                ok = false;
                detail += std::string(" error: ") + e.what();
            }
            const bool good = ok && (sam || siamese_zero);
            pass &= good;
            detail += std::string(fconv ? "+F" : "-F") + (sam ? "+S" : "-S") + (good ? " ok; " : " FAILED; ");
        }
    report(9, "ablation mechanics", pass, detail + fmt("%.0f s", seconds_since(t0)));
}

void reproducibility()
{
    const fs::path data = scene_dataset("acceptance_repro", 64);
    TrainConfig config;
    config.images_dir = data.string();
    config.batch_size = 1;
    config.iterations = 6;
    config.checkpoint_every = 3;

    config.output_dir = scratch_dir("acceptance_repro_a").string();
    const TrainResult a = train_joint(config);
    config.output_dir = scratch_dir("acceptance_repro_b").string();
    const TrainResult b = train_joint(config);
    const bool same_ckpt = slurp(a.final_checkpoint) == slurp(b.final_checkpoint) &&
                           slurp(fs::path(a.final_checkpoint).parent_path() / "ckpt_00000003.sien") ==
                               slurp(fs::path(b.final_checkpoint).parent_path() / "ckpt_00000003.sien");
    const bool same_log = slurp(a.loss_log) == slurp(b.loss_log);

    // Interrupted run: stop at 4, resume from the iteration-3 checkpoint.
    config.output_dir = scratch_dir("acceptance_repro_c").string();
    config.iterations = 4;
    train_joint(config);
    config.iterations = 6;
    const TrainResult c = train_joint(config, fs::path(config.output_dir) / "ckpt_00000003.sien");
    const bool resume_ckpt = slurp(c.final_checkpoint) == slurp(a.final_checkpoint);
    const bool resume_log = slurp(c.loss_log) == slurp(a.loss_log);
    report(10, "reproducibility", same_ckpt && same_log && resume_ckpt && resume_log,
           std::string("repeat run: checkpoints ") + (same_ckpt ? "identical" : "DIFFER") + ", log " +
               (same_log ? "identical" : "DIFFERS") + "; resume at k=3: checkpoint " +
               (resume_ckpt ? "identical" : "DIFFERS") + ", log " + (resume_log ? "identical" : "DIFFERS"));
}

}  // namespace

int main()
{
    const std::pair<int, void (*)()> criteria[] = {{1, operator_oracle},  {2, reduction_property}, {3, gradient_suite},
                                                   {4, loss_identities},  {5, gram_invariance},    {6, shape_pipeline},
                                                   {7, metric_oracles},   {8, training_dynamics},  {9, ablation_mechanics},
                                                   {10, reproducibility}};
    for (const auto& [id, run] : criteria) {
        try {
            run();
        } catch (const std::exception& e) {
            report(id, "(aborted)", false, e.what());
        }
    }
    std::printf("%d of 10 criteria passed\n", 10 - failures);
    return failures == 0 ? 0 : 1;
}
