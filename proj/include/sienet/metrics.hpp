#ifndef SIENET_METRICS_HPP
#define SIENET_METRICS_HPP

#include "sienet/data.hpp"
#include "sienet/tensor.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace sienet {

/// Returned when the two images are identical (MSE = 0).
inline constexpr double kPsnrCap = 100.0;

/// 10 log10(max_val^2 / MSE) over all elements, or only where `mask` (N,1,H,W) is nonzero.
double psnr(const Tensord& a, const Tensord& b, double max_val = 255.0, const Tensord* mask = nullptr);
double psnr(const Image8& a, const Image8& b, const Tensord* mask = nullptr);

struct SsimOptions {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double dynamic_range = 255.0;
};

/// ITU-R 601 luma of an (N,3,H,W) tensor, as (N,1,H,W). Single-channel input passes through.
Tensord luma(const Tensord& rgb);

/// Local SSIM map over the valid region (every window fully inside the image), (N,1,H-w+1,W-w+1).
Tensord ssim_map(const Tensord& a, const Tensord& b, const SsimOptions& options = {});

/// Mean local SSIM of the luma channel on an 8-bit value scale. With `mask`, only windows whose
/// centre pixel is masked contribute.
double ssim(const Tensord& a, const Tensord& b, const SsimOptions& options = {}, const Tensord* mask = nullptr);
double ssim(const Image8& a, const Image8& b, const Tensord* mask = nullptr);

/// 8-bit image as a (1,3,H,W) tensor on the [0,255] scale.
Tensord to_byte_tensor(const Image8& image);

struct MetricEntry {
    std::string name;
    double psnr = 0.0;
    double ssim = 0.0;
};

struct MetricReport {
    std::vector<MetricEntry> entries;  // sorted by name
    std::vector<std::string> unmatched;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;

    std::string table() const;
    std::string csv() const;
};

struct EvalOptions {
    bool bands_only = false;
    OutpaintMode mode = OutpaintMode::two_direction;
    double ratio = 0.25;
};

/// Pairs files by stem across the two directories and scores every pair.
MetricReport evaluate_directories(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir,
                                  const EvalOptions& options = {});

}  // namespace sienet

#endif  // SIENET_METRICS_HPP
