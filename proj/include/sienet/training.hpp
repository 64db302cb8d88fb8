#ifndef SIENET_TRAINING_HPP
#define SIENET_TRAINING_HPP

#include "sienet/config.hpp"
#include "sienet/data.hpp"
#include "sienet/discriminator.hpp"
#include "sienet/generators.hpp"
#include "sienet/losses.hpp"
#include "sienet/serialize.hpp"

#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <string>

namespace sienet {

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

template <typename Scalar>
struct AdamState {
    AdamOptions options;
    std::int64_t step = 0;
    std::map<std::string, Tensor<Scalar>> first;
    std::map<std::string, Tensor<Scalar>> second;
};

/// One bias-corrected Adam update. `grads[i]` belongs to `params[i]`; a non-finite gradient
/// aborts before anything is modified.
template <typename Scalar>
void adam_step(const ParameterList<Scalar>& params, const std::vector<Tensor<Scalar>>& grads, AdamState<Scalar>& state)
{
    if (params.size() != grads.size()) throw Error("adam_step: parameter/gradient count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (grads[i].shape() != params[i].second->shape())
            throw Error("adam_step: gradient shape mismatch for '" + params[i].first + "'");
        if (!grads[i].all_finite()) throw Error("adam_step: non-finite gradient for parameter '" + params[i].first + "'");
    }
    const AdamOptions& o = state.options;
    ++state.step;
    const double c1 = 1.0 - std::pow(o.beta1, double(state.step));
    const double c2 = 1.0 - std::pow(o.beta2, double(state.step));
    const Scalar b1 = Scalar(o.beta1);
    const Scalar b2 = Scalar(o.beta2);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const std::string& name = params[i].first;
        Tensor<Scalar>& p = *params[i].second;
        auto& m = state.first.try_emplace(name, Tensor<Scalar>(p.shape())).first->second;
        auto& v = state.second.try_emplace(name, Tensor<Scalar>(p.shape())).first->second;
        const auto& g = grads[i].array();
        m.array() = b1 * m.array() + (Scalar(1) - b1) * g;
        v.array() = b2 * v.array() + (Scalar(1) - b2) * g.square();
        const Scalar step_size = Scalar(o.lr / c1);
        const Scalar root_c2 = Scalar(std::sqrt(c2));
        p.array() -= step_size * m.array() / (v.array().sqrt() / root_c2 + Scalar(o.eps));
    }
}

// ---------------------------------------------------------------------------
// Models
// ---------------------------------------------------------------------------

GeneratorConfig generator_config(const TrainConfig& config);

/// Generators, per-stage critics and the frozen feature pyramid.
struct Models {
    StructureGenerator<float> structure;
    ContentGenerator<float> content;
    Discriminator<float> critic_structure;
    Discriminator<float> critic_content;
    FeatureExtractor<float> features;

    static Models init(const TrainConfig& config);

    ParameterList<float> generator_parameters();
    ParameterList<float> discriminator_parameters();
};

/// Graph variables of one generator forward pass.
struct GeneratorPass {
    Var<float> structure;        // S_gen'
    Var<float> output;           // Y_hat
    Var<float> feature;          // F'
    Var<float> feature_target;   // F^gt (unbound when the siamese branch is off)
    Var<float> distance;
    Var<float> perceptual;
    Var<float> style;
    Var<float> adversarial;      // unbound when both critics are off
    Var<float> siamese;          // unbound when the siamese branch is off
    Var<float> total;
    bool siamese_branch_ran = false;
};

/// Builds the full generator objective on `graph` (parameters bound trainable).
GeneratorPass generator_pass(Models& models, const TaskBatch& batch, const TrainConfig& config, Graph<float>& graph);

/// Mean |Y_hat - Y| over the masked (generated) pixels.
double masked_l1(const Tensorf& output, const Tensorf& target, const Tensorf& mask);

struct StepReport {
    std::int64_t iteration = 0;  // 1-based index of the completed step
    LossComponents components;
    double total = 0.0;
    double critic_structure = 0.0;
    double critic_content = 0.0;
    double masked_l1 = 0.0;
    bool siamese_branch_ran = false;
};

std::string csv_header();
std::string csv_row(const StepReport& r);

class Trainer {
public:
    explicit Trainer(TrainConfig config);

    /// Generators first, then critics, one Adam step each.
    StepReport train_step(const TaskBatch& batch);

    /// Masked L1 of the current generators on `batch`, without training.
    double evaluate(const TaskBatch& batch) const;

    std::int64_t iteration() const { return iteration_; }
    const TrainConfig& config() const { return config_; }
    Models& models() { return models_; }
    const Models& models() const { return models_; }

    /// Takes iterations, cadence, paths and dataset location from `run`; the rest stays.
    void set_run_control(const TrainConfig& run);

    NamedTensors checkpoint() const;
    static Trainer from_checkpoint(const NamedTensors& ckpt);

private:
    TrainConfig config_;
    Models models_;
    AdamState<float> adam_generators_;
    AdamState<float> adam_critics_;
    std::int64_t iteration_ = 0;
};

/// Loads the models stored in a checkpoint (config included) for inference.
Models load_models(const NamedTensors& ckpt, TrainConfig* config_out = nullptr);

/// Batch for iteration k (0-based) of a run.
TaskBatch batch_for_iteration(const Dataset& dataset, const TrainConfig& config, std::int64_t k);

struct TrainResult {
    std::filesystem::path final_checkpoint;
    std::filesystem::path loss_log;
    std::int64_t iterations = 0;
};

/// Runs (or resumes) training to `config.iterations`, writing checkpoints at the cadence and a
/// loss CSV. `on_step` sees every report.
TrainResult train_joint(const TrainConfig& config, const std::optional<std::filesystem::path>& resume = {},
                        const std::function<void(const StepReport&)>& on_step = {});

}  // namespace sienet

#endif  // SIENET_TRAINING_HPP
