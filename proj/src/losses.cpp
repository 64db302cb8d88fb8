#include "sienet/losses.hpp"

#include <cmath>

namespace sienet {

void LossWeights::validate() const
{
    const std::pair<const char*, double> all[] = {{"lambda_dist", distance},
                                                  {"lambda_adv", adversarial},
                                                  {"lambda_p", perceptual},
                                                  {"lambda_s", style},
                                                  {"lambda_sie", siamese}};
    for (const auto& [name, value] : all) {
        if (!std::isfinite(value) || value < 0.0)
            throw Error(std::string("loss weight ") + name + " must be finite and nonnegative, got " +
                        std::to_string(value));
    }
}

double total_loss(const LossWeights& weights, const LossComponents& c)
{
    weights.validate();
    for (double v : {c.distance, c.adversarial, c.perceptual, c.style, c.siamese})
        if (!std::isfinite(v)) throw Error("total_loss: non-finite loss component");
    return weights.distance * c.distance + weights.adversarial * c.adversarial + weights.perceptual * c.perceptual +
           weights.style * c.style + weights.siamese * c.siamese;
}

}  // namespace sienet
