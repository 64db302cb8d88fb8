#ifndef SIENET_CONFIG_HPP
#define SIENET_CONFIG_HPP

#include "sienet/data.hpp"
#include "sienet/filling_conv.hpp"
#include "sienet/losses.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace sienet {

/// Raised for unknown keys and unparseable or out-of-range values; `key()` names the culprit.
class ConfigError : public Error {
public:
    ConfigError(std::string key, const std::string& message) : Error(message), key_(std::move(key)) {}
    const std::string& key() const { return key_; }

private:
    std::string key_;
};

struct AdamOptions {
    double lr = 1e-4;
    double beta1 = 0.0;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct TrainConfig {
    // data
    std::string images_dir;
    std::string structures_dir;
    std::string output_dir = "run";
    std::string loss_log;  // empty: <output_dir>/loss.csv
    int resolution = 64;
    OutpaintMode mode = OutpaintMode::two_direction;
    double ratio = 0.25;
    StructureOptions structure;
    bool flip = false;

    // model
    int width = 64;
    SkipBranch skip = SkipBranch::box;
    std::string feature_weights;
    std::uint64_t feature_seed = kDefaultFeatureSeed;

    // optimisation
    int batch_size = 2;
    std::int64_t iterations = 2000;
    std::uint64_t seed = 1;
    AdamOptions adam;
    LossWeights weights;
    std::int64_t checkpoint_every = 500;

    // ablations
    bool use_filling_conv = true;
    bool use_siamese = true;
    bool use_stage1_adv = true;
    bool use_stage2_adv = true;
    bool siamese_symmetric = false;
    bool siamese_rooted = false;

    /// Defaults, with the seed taken from SIENET_SEED when set.
    static TrainConfig defaults();

    /// Range and consistency checks (paths are checked by the consumers that need them).
    void validate() const;
};

struct ConfigField {
    std::string key;
    std::string help;
    std::function<void(TrainConfig&, const std::string&)> set;
    std::function<std::string(const TrainConfig&)> get;
};

const std::vector<ConfigField>& config_fields();

/// Sets one key; unknown keys and bad values raise ConfigError.
void apply_setting(TrainConfig& config, const std::string& key, const std::string& value);

/// Parses `key = value` lines ('#' comments and blank lines allowed) on top of `base`.
TrainConfig parse_config(const std::string& text, TrainConfig base = TrainConfig::defaults());
TrainConfig load_config(const std::string& path, TrainConfig base = TrainConfig::defaults());

/// Fully resolved config, one `key=value` per line in a fixed order.
std::string to_text(const TrainConfig& config);

}  // namespace sienet

#endif  // SIENET_CONFIG_HPP
