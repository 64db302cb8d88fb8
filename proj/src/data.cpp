#include "sienet/data.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <map>
#include <cmath>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>

namespace sienet {

namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

bool is_png(std::string_view bytes)
{
    static constexpr unsigned char kSig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    return bytes.size() >= 8 && std::equal(kSig, kSig + 8, reinterpret_cast<const unsigned char*>(bytes.data()));
}

Image8 decode_png(std::string_view bytes, const std::string& name)
{
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size()))
        throw Error("PNG '" + name + "': " + img.message);
    img.format = PNG_FORMAT_RGB;
    Image8 out;
    out.width = int(img.width);
    out.height = int(img.height);
    out.rgb.resize(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, out.rgb.data(), 0, nullptr)) {
        std::string msg = img.message;
        png_image_free(&img);
        throw Error("PNG '" + name + "': " + msg);
    }
    return out;
}

void encode_png(const Image8& image, const fs::path& path)
{
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    img.width = png_uint_32(image.width);
    img.height = png_uint_32(image.height);
    img.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&img, path.string().c_str(), 0, image.rgb.data(), 0, nullptr))
        throw Error("cannot write PNG '" + path.string() + "': " + img.message);
}

std::string lower_extension(const fs::path& path)
{
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return char(std::tolower(c)); });
    return ext;
}

bool is_image_file(const fs::path& path)
{
    const std::string ext = lower_extension(path);
    return ext == ".png" || ext == ".ppm";
}

}  // namespace

// ---------------------------------------------------------------------------
// I/O
// ---------------------------------------------------------------------------

Image8 decode_ppm(std::string_view bytes)
{
    std::size_t pos = 0;
    auto skip_space = [&] {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto read_int = [&](const char* what) {
        skip_space();
        if (pos >= bytes.size() || !std::isdigit(static_cast<unsigned char>(bytes[pos])))
            throw Error(std::string("PPM: malformed header, expected ") + what);
        long v = 0;
        while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
            v = v * 10 + (bytes[pos++] - '0');
            if (v > (1L << 24)) throw Error(std::string("PPM: ") + what + " too large");
        }
        return int(v);
    };
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') throw Error("PPM: missing P6 magic");
    pos = 2;
    Image8 img;
    img.width = read_int("width");
    img.height = read_int("height");
    const int maxval = read_int("maxval");
    if (maxval != 255) throw Error("PPM: only 8-bit (maxval 255) images are supported, got " + std::to_string(maxval));
    if (img.width <= 0 || img.height <= 0) throw Error("PPM: empty image");
    if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
        throw Error("PPM: malformed header");
    ++pos;
    const std::size_t need = std::size_t(img.width) * img.height * 3;
    if (bytes.size() - pos < need)
        throw Error("PPM: truncated pixel data (" + std::to_string(bytes.size() - pos) + " of " +
                    std::to_string(need) + " bytes)");
    img.rgb.assign(bytes.begin() + std::ptrdiff_t(pos), bytes.begin() + std::ptrdiff_t(pos + need));
    return img;
}

std::string encode_ppm(const Image8& image)
{
    std::string out = "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
    out.append(reinterpret_cast<const char*>(image.rgb.data()), image.rgb.size());
    return out;
}

Image8 read_image8(const fs::path& path)
{
    const std::string bytes = read_file(path);
    if (is_png(bytes)) return decode_png(bytes, path.string());
    if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') {
        try {
            return decode_ppm(bytes);
        } catch (const Error& e) {
            throw Error("'" + path.string() + "': " + e.what());
        }
    }
    throw Error("'" + path.string() + "': unsupported image format (expected PNG or binary PPM)");
}

void write_image8(const Image8& image, const fs::path& path)
{
    if (image.rgb.size() != std::size_t(image.width) * image.height * 3) throw Error("write_image8: bad raster size");
    const std::string ext = lower_extension(path);
    if (ext == ".png") {
        encode_png(image, path);
    } else if (ext == ".ppm") {
        std::ofstream out(path, std::ios::binary);
        const std::string bytes = encode_ppm(image);
        out.write(bytes.data(), std::streamsize(bytes.size()));
        if (!out) throw Error("cannot write '" + path.string() + "'");
    } else {
        throw Error("'" + path.string() + "': unsupported output extension (use .png or .ppm)");
    }
}

Tensorf to_tensor(const Image8& image)
{
    Tensorf t(Shape{1, 3, image.height, image.width});
    for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x)
            for (int c = 0; c < 3; ++c) t(0, c, y, x) = float(image.at(y, x, c) / 127.5 - 1.0);
    return t;
}

Image8 to_image8(const Tensorf& tensor, int n)
{
    const Shape s = tensor.shape();
    if (s.c != 3 || n < 0 || n >= s.n) throw Error("to_image8: expects an (N,3,H,W) tensor, got " + to_string(s));
    Image8 img;
    img.width = s.w;
    img.height = s.h;
    img.rgb.resize(std::size_t(s.w) * s.h * 3);
    for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x)
            for (int c = 0; c < 3; ++c) {
                const double v = std::round((double(tensor(n, c, y, x)) + 1.0) * 127.5);
                img.at(y, x, c) = std::uint8_t(std::clamp(v, 0.0, 255.0));
            }
    return img;
}

Tensorf load_image(const fs::path& path) { return to_tensor(read_image8(path)); }

void save_image(const Tensorf& tensor, const fs::path& path) { write_image8(to_image8(tensor), path); }

Image8 resize(const Image8& image, int width, int height)
{
    if (width <= 0 || height <= 0) throw Error("resize: target size must be positive");
    if (image.width == width && image.height == height) return image;
    Image8 out;
    out.width = width;
    out.height = height;
    out.rgb.resize(std::size_t(width) * height * 3);
    const double sx = double(image.width) / width;
    const double sy = double(image.height) / height;
    for (int y = 0; y < height; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, double(image.height - 1));
        const int y0 = int(fy);
        const int y1 = std::min(y0 + 1, image.height - 1);
        const double ty = fy - y0;
        for (int x = 0; x < width; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, double(image.width - 1));
            const int x0 = int(fx);
            const int x1 = std::min(x0 + 1, image.width - 1);
            const double tx = fx - x0;
            for (int c = 0; c < 3; ++c) {
                const double top = image.at(y0, x0, c) * (1 - tx) + image.at(y0, x1, c) * tx;
                const double bottom = image.at(y1, x0, c) * (1 - tx) + image.at(y1, x1, c) * tx;
                out.at(y, x, c) = std::uint8_t(std::clamp(std::round(top * (1 - ty) + bottom * ty), 0.0, 255.0));
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Filling tasks
// ---------------------------------------------------------------------------

OutpaintMode parse_outpaint_mode(std::string_view name)
{
    if (name == "two_direction") return OutpaintMode::two_direction;
    if (name == "single_direction") return OutpaintMode::single_direction;
    throw Error("unknown outpainting mode '" + std::string(name) + "' (expected two_direction or single_direction)");
}

std::string_view to_string(OutpaintMode mode)
{
    return mode == OutpaintMode::two_direction ? "two_direction" : "single_direction";
}

int band_width(double ratio, int size)
{
    if (!(ratio > 0.0 && ratio < 0.5)) throw Error("outpainting ratio must be in (0, 0.5), got " + std::to_string(ratio));
    return int(std::lround(ratio * size));
}

Tensorf make_filling_map(OutpaintMode mode, double ratio, int size)
{
    const int band = band_width(ratio, size);
    Tensorf m(Shape{1, 1, size, size});
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const bool right = x >= size - band;
            const bool left = mode == OutpaintMode::two_direction && x < band;
            m(0, 0, y, x) = (left || right) ? 1.0f : 0.0f;
        }
    return m;
}

FillingTask make_filling_task(const Tensorf& target, const Tensorf& target_structure, OutpaintMode mode, double ratio)
{
    const Shape s = target.shape();
    if (s.n != 1 || s.c != 3 || s.h != s.w)
        throw Error("make_filling_task: expects a square (1,3,S,S) image, got " + to_string(s));
    require_same_shape(target, target_structure, "make_filling_task structure");
    FillingTask task;
    task.mode = mode;
    task.ratio = ratio;
    task.mask = make_filling_map(mode, ratio, s.w);
    task.target = target;
    task.target_structure = target_structure;
    task.canvas = target;
    task.structure = target_structure;
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < s.h; ++y)
            for (int x = 0; x < s.w; ++x)
                if (task.mask(0, 0, y, x) != 0.0f) {
                    task.canvas(0, c, y, x) = 0.0f;
                    task.structure(0, c, y, x) = 0.0f;
                }
    return task;
}

// ---------------------------------------------------------------------------
// Smooth structure
// ---------------------------------------------------------------------------

StructureMethod parse_structure_method(std::string_view name)
{
    if (name == "gaussian") return StructureMethod::gaussian;
    if (name == "bilateral") return StructureMethod::bilateral;
    if (name == "file") return StructureMethod::file;
    throw Error("unknown structure method '" + std::string(name) + "' (expected gaussian, bilateral or file)");
}

std::string_view to_string(StructureMethod method)
{
    switch (method) {
        case StructureMethod::gaussian: return "gaussian";
        case StructureMethod::bilateral: return "bilateral";
        case StructureMethod::file: return "file";
    }
    return "gaussian";
}

std::vector<double> gaussian_taps(double sigma)
{
    if (!(sigma > 0.0)) return {1.0};
    const int radius = int(std::ceil(3.0 * sigma));
    std::vector<double> taps(std::size_t(2 * radius + 1));
    double total = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        taps[std::size_t(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
        total += taps[std::size_t(i + radius)];
    }
    for (double& t : taps) t /= total;
    return taps;
}

namespace {

Tensorf gaussian_blur(const Tensorf& image, double sigma)
{
    const std::vector<double> taps = gaussian_taps(sigma);
    const int r = int(taps.size() / 2);
    const Shape s = image.shape();
    Tensorf rows(s);
    Tensorf out(s);
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
            for (int y = 0; y < s.h; ++y)
                for (int x = 0; x < s.w; ++x) {
                    double acc = 0.0;
                    for (int d = -r; d <= r; ++d) acc += taps[std::size_t(d + r)] * image(n, c, y, std::clamp(x + d, 0, s.w - 1));
                    rows(n, c, y, x) = float(acc);
                }
            for (int y = 0; y < s.h; ++y)
                for (int x = 0; x < s.w; ++x) {
                    double acc = 0.0;
                    for (int d = -r; d <= r; ++d) acc += taps[std::size_t(d + r)] * rows(n, c, std::clamp(y + d, 0, s.h - 1), x);
                    out(n, c, y, x) = float(acc);
                }
        }
    return out;
}

Tensorf bilateral_smooth(const Tensorf& image, const StructureOptions& o)
{
    if (o.iterations < 0 || !(o.sigma_spatial > 0.0) || !(o.sigma_range > 0.0))
        throw Error("bilateral structure: iterations >= 0 and positive sigmas required");
    const int r = int(std::ceil(2.0 * o.sigma_spatial));
    const Shape s = image.shape();
    Tensorf cur = image;
    for (int it = 0; it < o.iterations; ++it) {
        Tensorf next(s);
        for (int n = 0; n < s.n; ++n)
            for (int y = 0; y < s.h; ++y)
                for (int x = 0; x < s.w; ++x) {
                    double acc[3] = {0, 0, 0};
                    double total = 0.0;
                    for (int dy = -r; dy <= r; ++dy)
                        for (int dx = -r; dx <= r; ++dx) {
                            const int yy = std::clamp(y + dy, 0, s.h - 1);
                            const int xx = std::clamp(x + dx, 0, s.w - 1);
                            double d2 = 0.0;
                            for (int c = 0; c < s.c; ++c) {
                                const double d = double(cur(n, c, yy, xx)) - cur(n, c, y, x);
                                d2 += d * d;
                            }
                            const double w = std::exp(-0.5 * (dx * dx + dy * dy) / (o.sigma_spatial * o.sigma_spatial) -
                                                      0.5 * d2 / (o.sigma_range * o.sigma_range));
                            total += w;
                            for (int c = 0; c < s.c && c < 3; ++c) acc[c] += w * cur(n, c, yy, xx);
                        }
                    for (int c = 0; c < s.c && c < 3; ++c) next(n, c, y, x) = float(acc[c] / total);
                }
        cur = std::move(next);
    }
    return cur;
}

}  // namespace

Tensorf smooth_structure(const Tensorf& image, const StructureOptions& options)
{
    if (image.shape().c != 3) throw Error("smooth_structure: expects 3-channel images, got " + to_string(image.shape()));
    switch (options.method) {
        case StructureMethod::gaussian: return gaussian_blur(image, options.sigma);
        case StructureMethod::bilateral: return bilateral_smooth(image, options);
        case StructureMethod::file: {
            if (options.path.empty() || !fs::exists(options.path))
                throw Error("structure file '" + options.path.string() + "' does not exist");
            if (image.shape().n != 1) throw Error("smooth_structure: file method works on single images");
            return to_tensor(resize(read_image8(options.path), image.shape().w, image.shape().h));
        }
    }
    throw Error("smooth_structure: unknown method");
}

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b)
{
    auto splitmix = [](std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    };
    return splitmix(splitmix(splitmix(seed) ^ a) ^ b);
}

Dataset Dataset::open(const fs::path& dir, const std::optional<fs::path>& structures)
{
    if (!fs::is_directory(dir)) throw Error("dataset directory '" + dir.string() + "' does not exist");
    const fs::path images = fs::is_directory(dir / "images") ? dir / "images" : dir;
    std::optional<fs::path> structure_dir = structures;
    if (!structure_dir && fs::is_directory(dir / "structures")) structure_dir = dir / "structures";
    if (structure_dir && !fs::is_directory(*structure_dir))
        throw Error("structure directory '" + structure_dir->string() + "' does not exist");

    std::map<std::string, fs::path> paired;
    if (structure_dir) {
        for (const auto& e : fs::directory_iterator(*structure_dir))
            if (e.is_regular_file() && is_image_file(e.path())) paired[e.path().stem().string()] = e.path();
    }
    Dataset d;
    for (const auto& e : fs::directory_iterator(images)) {
        if (!e.is_regular_file() || !is_image_file(e.path())) continue;
        DatasetEntry entry;
        entry.stem = e.path().stem().string();
        entry.image = e.path();
        if (auto it = paired.find(entry.stem); it != paired.end()) entry.structure = it->second;
        d.entries_.push_back(std::move(entry));
    }
    if (d.entries_.empty()) throw Error("dataset directory '" + images.string() + "' contains no PNG/PPM images");
    std::sort(d.entries_.begin(), d.entries_.end(),
              [](const DatasetEntry& a, const DatasetEntry& b) { return a.image.filename() < b.image.filename(); });
    return d;
}

std::vector<std::size_t> Dataset::epoch_order(std::uint64_t seed, std::uint64_t epoch) const
{
    std::vector<std::size_t> order(entries_.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::mt19937_64 rng(mix_seed(seed, 0x0e90c4, epoch));
    for (std::size_t i = order.size(); i > 1; --i) {
        const std::size_t j = std::size_t(rng() % i);
        std::swap(order[i - 1], order[j]);
    }
    return order;
}

std::vector<std::vector<std::size_t>> Dataset::epoch_batches(std::uint64_t seed, std::uint64_t epoch, int batch) const
{
    if (batch < 1) throw Error("batch size must be >= 1");
    const auto order = epoch_order(seed, epoch);
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t i = 0; i < order.size(); i += std::size_t(batch))
        out.emplace_back(order.begin() + std::ptrdiff_t(i),
                         order.begin() + std::ptrdiff_t(std::min(order.size(), i + std::size_t(batch))));
    return out;
}

BatchStream::BatchStream(const Dataset& dataset, int batch, std::uint64_t seed)
    : dataset_(&dataset), batch_(batch), seed_(seed)
{
    if (batch < 1) throw Error("batch size must be >= 1");
    per_epoch_ = (dataset.size() + std::size_t(batch) - 1) / std::size_t(batch);
}

std::vector<std::size_t> BatchStream::batch_at(std::uint64_t k) const
{
    const std::uint64_t epoch = k / per_epoch_;
    return dataset_->epoch_batches(seed_, epoch, batch_)[std::size_t(k % per_epoch_)];
}

TaskBatch stack_tasks(const std::vector<FillingTask>& tasks)
{
    if (tasks.empty()) throw Error("stack_tasks: empty batch");
    auto stack = [&](auto member) {
        const Shape s0 = (tasks.front().*member).shape();
        Tensorf out(Shape{int(tasks.size()), s0.c, s0.h, s0.w});
        for (std::size_t i = 0; i < tasks.size(); ++i) {
            const Tensorf& t = tasks[i].*member;
            if (t.shape() != s0) throw Error("stack_tasks: tasks have different shapes");
            out.sample(int(i)) = t.sample(0);
        }
        return out;
    };
    TaskBatch b;
    b.canvas = stack(&FillingTask::canvas);
    b.mask = stack(&FillingTask::mask);
    b.structure = stack(&FillingTask::structure);
    b.target = stack(&FillingTask::target);
    b.target_structure = stack(&FillingTask::target_structure);
    return b;
}

FillingTask load_task(const DatasetEntry& entry, const TaskOptions& options, std::uint64_t flip_seed)
{
    const Image8 image = resize(read_image8(entry.image), options.size, options.size);
    Tensorf target = to_tensor(image);
    Tensorf structure;
    if (entry.structure) {
        StructureOptions file = options.structure;
        file.method = StructureMethod::file;
        file.path = *entry.structure;
        structure = smooth_structure(target, file);
    } else if (options.structure.method == StructureMethod::file) {
        throw Error("no precomputed structure map for '" + entry.stem + "'");
    } else {
        structure = smooth_structure(target, options.structure);
    }
    if (options.flip && (mix_seed(flip_seed, 0xf11b) & 1U)) {
        auto mirror = [](Tensorf& t) {
            const Shape s = t.shape();
            for (int c = 0; c < s.c; ++c)
                for (int y = 0; y < s.h; ++y)
                    for (int x = 0; x < s.w / 2; ++x) std::swap(t(0, c, y, x), t(0, c, y, s.w - 1 - x));
        };
        mirror(target);
        mirror(structure);
    }
    return make_filling_task(target, structure, options.mode, options.ratio);
}

}  // namespace sienet
