#ifndef SIENET_DATA_HPP
#define SIENET_DATA_HPP

#include "sienet/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sienet {

/// Interleaved 8-bit RGB raster.
struct Image8 {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb;

    std::uint8_t& at(int y, int x, int c) { return rgb[(std::size_t(y) * width + x) * 3 + c]; }
    std::uint8_t at(int y, int x, int c) const { return rgb[(std::size_t(y) * width + x) * 3 + c]; }
    friend bool operator==(const Image8&, const Image8&) = default;
};

/// Reads an 8-bit RGB PNG or a binary PPM (P6, maxval 255); format is detected from the bytes.
Image8 read_image8(const std::filesystem::path& path);
/// Writes PNG or PPM depending on the extension (.png / .ppm).
void write_image8(const Image8& image, const std::filesystem::path& path);

Image8 decode_ppm(std::string_view bytes);
std::string encode_ppm(const Image8& image);

/// Bytes map to [-1, 1] by v / 127.5 - 1; the tensor is (1, 3, H, W).
Tensorf to_tensor(const Image8& image);
/// Inverse mapping with rounding and clamping. Uses sample n of a (N, 3, H, W) tensor.
Image8 to_image8(const Tensorf& tensor, int n = 0);

Tensorf load_image(const std::filesystem::path& path);
void save_image(const Tensorf& tensor, const std::filesystem::path& path);

/// Bilinear resampling (pixel-centre aligned) with rounding back to bytes. Identity when sizes match.
Image8 resize(const Image8& image, int width, int height);

// ---------------------------------------------------------------------------
// Filling tasks
// ---------------------------------------------------------------------------

enum class OutpaintMode { two_direction, single_direction };

OutpaintMode parse_outpaint_mode(std::string_view name);
std::string_view to_string(OutpaintMode mode);

/// Per-side band width in pixels for a canvas of width `size`.
int band_width(double ratio, int size);

/// (1, 1, size, size) map with 1 on the full-height border bands to be predicted.
Tensorf make_filling_map(OutpaintMode mode, double ratio, int size);

/// One outpainting instance, each tensor (1, C, H, W).
struct FillingTask {
    Tensorf canvas;            // X: target with bands zeroed
    Tensorf mask;              // M: 1 = predict
    Tensorf structure;         // S: target structure with bands zeroed
    Tensorf target;            // Y
    Tensorf target_structure;  // S^gt
    OutpaintMode mode = OutpaintMode::two_direction;
    double ratio = 0.25;
};

/// Builds a task from an image already at the working resolution (square) and its structure map.
FillingTask make_filling_task(const Tensorf& target, const Tensorf& target_structure, OutpaintMode mode, double ratio);

// ---------------------------------------------------------------------------
// Smooth structure
// ---------------------------------------------------------------------------

enum class StructureMethod { gaussian, bilateral, file };

StructureMethod parse_structure_method(std::string_view name);
std::string_view to_string(StructureMethod method);

struct StructureOptions {
    StructureMethod method = StructureMethod::gaussian;
    double sigma = 3.0;         // gaussian
    int iterations = 3;         // bilateral
    double sigma_spatial = 2.0;  // bilateral
    double sigma_range = 0.2;    // bilateral, on the [-1, 1] value scale
    std::filesystem::path path;  // file
};

/// Normalized 1-D Gaussian taps with radius ceil(3 sigma); sigma <= 0 gives the single tap {1}.
std::vector<double> gaussian_taps(double sigma);

/// Edge-preserving smoothed rendition of `image` (N, 3, H, W); borders replicate the edge pixel.
Tensorf smooth_structure(const Tensorf& image, const StructureOptions& options);

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

struct DatasetEntry {
    std::string stem;
    std::filesystem::path image;
    std::optional<std::filesystem::path> structure;
};

/// Sorted image list from `dir/images` (or `dir` itself) with optional `structures/` pairing by
/// filename stem.
class Dataset {
public:
    static Dataset open(const std::filesystem::path& dir, const std::optional<std::filesystem::path>& structures = {});

    std::size_t size() const { return entries_.size(); }
    const std::vector<DatasetEntry>& entries() const { return entries_; }

    /// Seeded permutation of entry indices for one epoch.
    std::vector<std::size_t> epoch_order(std::uint64_t seed, std::uint64_t epoch) const;
    /// Batches of one epoch in order; the last batch may be short.
    std::vector<std::vector<std::size_t>> epoch_batches(std::uint64_t seed, std::uint64_t epoch, int batch) const;

private:
    std::vector<DatasetEntry> entries_;
};

/// Infinite deterministic stream of batches across epochs; position k depends only on (seed, k).
class BatchStream {
public:
    BatchStream(const Dataset& dataset, int batch, std::uint64_t seed);

    std::size_t batches_per_epoch() const { return per_epoch_; }
    std::vector<std::size_t> batch_at(std::uint64_t k) const;

private:
    const Dataset* dataset_;
    int batch_;
    std::uint64_t seed_;
    std::size_t per_epoch_;
};

/// A stacked batch of tasks ready for the network.
struct TaskBatch {
    Tensorf canvas;
    Tensorf mask;
    Tensorf structure;
    Tensorf target;
    Tensorf target_structure;

    int size() const { return canvas.shape().n; }
};

TaskBatch stack_tasks(const std::vector<FillingTask>& tasks);

struct TaskOptions {
    OutpaintMode mode = OutpaintMode::two_direction;
    double ratio = 0.25;
    int size = 256;
    StructureOptions structure;
    bool flip = false;
};

/// Loads, resizes, optionally flips (seeded by `flip_seed`) and masks one dataset entry.
FillingTask load_task(const DatasetEntry& entry, const TaskOptions& options, std::uint64_t flip_seed);

/// Mixes a seed with stream coordinates (splitmix64).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

}  // namespace sienet

#endif  // SIENET_DATA_HPP
