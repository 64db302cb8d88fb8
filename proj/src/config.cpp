#include "sienet/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace sienet {

namespace {

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string format_double(double v)
{
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

double parse_double(const std::string& key, const std::string& v)
{
    char* end = nullptr;
    const double d = std::strtod(v.c_str(), &end);
    if (v.empty() || end != v.c_str() + v.size()) throw ConfigError(key, "config key '" + key + "': '" + v + "' is not a number");
    return d;
}

std::int64_t parse_int(const std::string& key, const std::string& v)
{
    std::int64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (v.empty() || ec != std::errc() || p != v.data() + v.size())
        throw ConfigError(key, "config key '" + key + "': '" + v + "' is not an integer");
    return out;
}

std::uint64_t parse_uint(const std::string& key, const std::string& v)
{
    std::uint64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (v.empty() || ec != std::errc() || p != v.data() + v.size())
        throw ConfigError(key, "config key '" + key + "': '" + v + "' is not a nonnegative integer");
    return out;
}

bool parse_bool(const std::string& key, const std::string& v)
{
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError(key, "config key '" + key + "': '" + v + "' is not a boolean");
}

template <typename F>
auto wrap(const std::string& key, F&& f)
{
    try {
        return f();
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(key, "config key '" + key + "': " + e.what());
    }
}

#define SIENET_STRING(name, member, text)                                                              \
    ConfigField{name, text, [](TrainConfig& c, const std::string& v) { c.member = v; },                 \
                [](const TrainConfig& c) { return std::string(c.member); }}
#define SIENET_DOUBLE(name, member, text)                                                              \
    ConfigField{name, text, [](TrainConfig& c, const std::string& v) { c.member = parse_double(name, v); }, \
                [](const TrainConfig& c) { return format_double(c.member); }}
#define SIENET_INT(name, member, text)                                                                      \
    ConfigField{name, text,                                                                                 \
                [](TrainConfig& c, const std::string& v) { c.member = decltype(c.member)(parse_int(name, v)); }, \
                [](const TrainConfig& c) { return std::to_string(c.member); }}
#define SIENET_UINT(name, member, text)                                                               \
    ConfigField{name, text, [](TrainConfig& c, const std::string& v) { c.member = parse_uint(name, v); }, \
                [](const TrainConfig& c) { return std::to_string(c.member); }}
#define SIENET_BOOL(name, member, text)                                                               \
    ConfigField{name, text, [](TrainConfig& c, const std::string& v) { c.member = parse_bool(name, v); }, \
                [](const TrainConfig& c) { return std::string(c.member ? "true" : "false"); }}

}  // namespace

const std::vector<ConfigField>& config_fields()
{
    static const std::vector<ConfigField> fields = {
        SIENET_STRING("images_dir", images_dir, "dataset directory (images/*.png or a flat folder)"),
        SIENET_STRING("structures_dir", structures_dir, "precomputed structure maps, paired by filename stem"),
        SIENET_STRING("output_dir", output_dir, "where checkpoints and the loss log are written"),
        SIENET_STRING("loss_log", loss_log, "loss CSV path (default <output_dir>/loss.csv)"),
        SIENET_INT("resolution", resolution, "working resolution, multiple of 16"),
        ConfigField{"mode", "two_direction or single_direction",
                    [](TrainConfig& c, const std::string& v) { c.mode = wrap("mode", [&] { return parse_outpaint_mode(v); }); },
                    [](const TrainConfig& c) { return std::string(to_string(c.mode)); }},
        SIENET_DOUBLE("ratio", ratio, "fraction of the width generated per extrapolated side, in (0, 0.5)"),
        ConfigField{"structure_method", "gaussian, bilateral or file",
                    [](TrainConfig& c, const std::string& v) {
                        c.structure.method = wrap("structure_method", [&] { return parse_structure_method(v); });
                    },
                    [](const TrainConfig& c) { return std::string(to_string(c.structure.method)); }},
        SIENET_DOUBLE("structure_sigma", structure.sigma, "gaussian structure sigma in pixels"),
        SIENET_INT("bilateral_iterations", structure.iterations, "bilateral structure passes"),
        SIENET_DOUBLE("bilateral_sigma_spatial", structure.sigma_spatial, "bilateral spatial sigma in pixels"),
        SIENET_DOUBLE("bilateral_sigma_range", structure.sigma_range, "bilateral range sigma on the [-1,1] scale"),
        SIENET_BOOL("flip", flip, "random horizontal flips"),
        SIENET_INT("width", width, "base generator/discriminator channel width"),
        ConfigField{"skip", "filling-conv pass-through branch: box or center",
                    [](TrainConfig& c, const std::string& v) { c.skip = wrap("skip", [&] { return parse_skip_branch(v); }); },
                    [](const TrainConfig& c) { return std::string(to_string(c.skip)); }},
        SIENET_STRING("feature_weights", feature_weights, "optional feature-extractor weight file"),
        SIENET_UINT("feature_seed", feature_seed, "seed of the fixed feature extractor"),
        SIENET_INT("batch_size", batch_size, "images per iteration"),
        SIENET_INT("iterations", iterations, "total training iterations"),
        SIENET_UINT("seed", seed, "global seed (default from SIENET_SEED)"),
        SIENET_DOUBLE("lr", adam.lr, "Adam learning rate"),
        SIENET_DOUBLE("beta1", adam.beta1, "Adam beta1"),
        SIENET_DOUBLE("beta2", adam.beta2, "Adam beta2"),
        SIENET_DOUBLE("adam_eps", adam.eps, "Adam epsilon"),
        SIENET_DOUBLE("lambda_dist", weights.distance, "structure distance weight"),
        SIENET_DOUBLE("lambda_adv", weights.adversarial, "adversarial weight"),
        SIENET_DOUBLE("lambda_p", weights.perceptual, "perceptual weight"),
        SIENET_DOUBLE("lambda_s", weights.style, "style weight"),
        SIENET_DOUBLE("lambda_sie", weights.siamese, "siamese weight"),
        SIENET_INT("checkpoint_every", checkpoint_every, "checkpoint cadence in iterations (0 = final only)"),
        SIENET_BOOL("use_filling_conv", use_filling_conv, "filling convolution at both bottlenecks"),
        SIENET_BOOL("use_siamese", use_siamese, "siamese feature loss"),
        SIENET_BOOL("use_stage1_adv", use_stage1_adv, "structure-stage discriminator"),
        SIENET_BOOL("use_stage2_adv", use_stage2_adv, "content-stage discriminator"),
        SIENET_BOOL("siamese_symmetric", siamese_symmetric, "let gradient flow through the ground-truth branch too"),
        SIENET_BOOL("siamese_rooted", siamese_rooted, "use the rooted (norm) siamese distance"),
    };
    return fields;
}

#undef SIENET_STRING
#undef SIENET_DOUBLE
#undef SIENET_INT
#undef SIENET_UINT
#undef SIENET_BOOL

TrainConfig TrainConfig::defaults()
{
    TrainConfig c;
    if (const char* env = std::getenv("SIENET_SEED"); env && *env) c.seed = parse_uint("SIENET_SEED", env);
    return c;
}

void TrainConfig::validate() const
{
    auto fail = [](const char* key, const std::string& msg) { throw ConfigError(key, std::string("config key '") + key + "': " + msg); };
    if (resolution < 16 || resolution % 16 != 0) fail("resolution", "must be a positive multiple of 16");
    if (!(ratio > 0.0 && ratio < 0.5)) fail("ratio", "must be in (0, 0.5)");
    if (width < 1) fail("width", "must be >= 1");
    if (batch_size < 1) fail("batch_size", "must be >= 1");
    if (iterations < 1) fail("iterations", "must be >= 1");
    if (checkpoint_every < 0) fail("checkpoint_every", "must be >= 0");
    if (!(adam.lr > 0.0)) fail("lr", "must be positive");
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0)) fail("beta1", "must be in [0, 1)");
    if (!(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) fail("beta2", "must be in [0, 1)");
    if (!(adam.eps > 0.0)) fail("adam_eps", "must be positive");
    if (structure.iterations < 0) fail("bilateral_iterations", "must be >= 0");
    try {
        weights.validate();
    } catch (const Error& e) {
        throw ConfigError("lambda", e.what());
    }
}

void apply_setting(TrainConfig& config, const std::string& key, const std::string& value)
{
    for (const auto& f : config_fields()) {
        if (f.key == key) {
            f.set(config, value);
            return;
        }
    }
    throw ConfigError(key, "unknown config key '" + key + "'");
}

TrainConfig parse_config(const std::string& text, TrainConfig base)
{
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(line, "config line " + std::to_string(lineno) + ": expected key=value, got '" + line + "'");
        apply_setting(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return base;
}

TrainConfig load_config(const std::string& path, TrainConfig base)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("config", "cannot read config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), std::move(base));
}

std::string to_text(const TrainConfig& config)
{
    std::string out;
    for (const auto& f : config_fields()) out += f.key + "=" + f.get(config) + "\n";
    return out;
}

}  // namespace sienet
