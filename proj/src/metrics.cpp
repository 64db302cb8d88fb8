#include "sienet/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

namespace sienet {

namespace fs = std::filesystem;

double psnr(const Tensord& a, const Tensord& b, double max_val, const Tensord* mask)
{
    require_same_shape(a, b, "psnr");
    if (!(max_val > 0.0)) throw Error("psnr: max_val must be positive");
    const Shape s = a.shape();
    double sse = 0.0;
    std::int64_t count = 0;
    if (mask) {
        if (mask->shape() != Shape{s.n, 1, s.h, s.w}) throw Error("psnr: mask shape mismatch");
        for (int n = 0; n < s.n; ++n)
            for (int c = 0; c < s.c; ++c)
                for (int y = 0; y < s.h; ++y)
                    for (int x = 0; x < s.w; ++x) {
                        if ((*mask)(n, 0, y, x) == 0.0) continue;
                        const double d = a(n, c, y, x) - b(n, c, y, x);
                        sse += d * d;
                        ++count;
                    }
    } else {
        sse = (a.array() - b.array()).square().sum();
        count = a.size();
    }
    if (count == 0) throw Error("psnr: no pixels selected");
    const double mse = sse / double(count);
    if (mse == 0.0) return kPsnrCap;
    return 10.0 * std::log10(max_val * max_val / mse);
}

Tensord to_byte_tensor(const Image8& image)
{
    Tensord t(Shape{1, 3, image.height, image.width});
    for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x)
            for (int c = 0; c < 3; ++c) t(0, c, y, x) = image.at(y, x, c);
    return t;
}

double psnr(const Image8& a, const Image8& b, const Tensord* mask)
{
    return psnr(to_byte_tensor(a), to_byte_tensor(b), 255.0, mask);
}

Tensord luma(const Tensord& rgb)
{
    const Shape s = rgb.shape();
    if (s.c == 1) return rgb;
    if (s.c != 3) throw Error("luma: expects 1 or 3 channels, got " + to_string(s));
    Tensord y(Shape{s.n, 1, s.h, s.w});
    for (int n = 0; n < s.n; ++n)
        y.sample(n).row(0) = 0.299 * rgb.sample(n).row(0) + 0.587 * rgb.sample(n).row(1) + 0.114 * rgb.sample(n).row(2);
    return y;
}

namespace {

/// Valid-region separable Gaussian filtering of one (H, W) plane.
Eigen::MatrixXd filter_valid(const Eigen::MatrixXd& plane, const std::vector<double>& taps)
{
    const Eigen::Index k = Eigen::Index(taps.size());
    const Eigen::Index oh = plane.rows() - k + 1;
    const Eigen::Index ow = plane.cols() - k + 1;
    Eigen::MatrixXd rows(plane.rows(), ow);
    for (Eigen::Index y = 0; y < plane.rows(); ++y)
        for (Eigen::Index x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (Eigen::Index t = 0; t < k; ++t) acc += taps[std::size_t(t)] * plane(y, x + t);
            rows(y, x) = acc;
        }
    Eigen::MatrixXd out(oh, ow);
    for (Eigen::Index y = 0; y < oh; ++y)
        for (Eigen::Index x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (Eigen::Index t = 0; t < k; ++t) acc += taps[std::size_t(t)] * rows(y + t, x);
            out(y, x) = acc;
        }
    return out;
}

std::vector<double> window_taps(const SsimOptions& o)
{
    if (o.window < 1 || o.window % 2 == 0) throw Error("ssim: window must be a positive odd size");
    std::vector<double> taps(std::size_t(o.window));
    const int r = o.window / 2;
    double total = 0.0;
    for (int i = -r; i <= r; ++i) total += taps[std::size_t(i + r)] = std::exp(-0.5 * i * i / (o.sigma * o.sigma));
    for (double& t : taps) t /= total;
    return taps;
}

}  // namespace

Tensord ssim_map(const Tensord& a, const Tensord& b, const SsimOptions& o)
{
    require_same_shape(a, b, "ssim");
    const Tensord la = luma(a);
    const Tensord lb = luma(b);
    const Shape s = la.shape();
    if (s.h < o.window || s.w < o.window)
        throw Error("ssim: image " + std::to_string(s.w) + "x" + std::to_string(s.h) + " is smaller than the " +
                    std::to_string(o.window) + "x" + std::to_string(o.window) + " window");
    const std::vector<double> taps = window_taps(o);
    const double c1 = (o.k1 * o.dynamic_range) * (o.k1 * o.dynamic_range);
    const double c2 = (o.k2 * o.dynamic_range) * (o.k2 * o.dynamic_range);
    const int oh = s.h - o.window + 1;
    const int ow = s.w - o.window + 1;
    Tensord out(Shape{s.n, 1, oh, ow});
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    for (int n = 0; n < s.n; ++n) {
        const Eigen::MatrixXd pa = Eigen::Map<const RowMajor>(la.data() + std::int64_t(n) * s.plane(), s.h, s.w);
        const Eigen::MatrixXd pb = Eigen::Map<const RowMajor>(lb.data() + std::int64_t(n) * s.plane(), s.h, s.w);
        const Eigen::MatrixXd mu_a = filter_valid(pa, taps);
        const Eigen::MatrixXd mu_b = filter_valid(pb, taps);
        const Eigen::MatrixXd e_aa = filter_valid(pa.cwiseProduct(pa), taps);
        const Eigen::MatrixXd e_bb = filter_valid(pb.cwiseProduct(pb), taps);
        const Eigen::MatrixXd e_ab = filter_valid(pa.cwiseProduct(pb), taps);
        for (int y = 0; y < oh; ++y)
            for (int x = 0; x < ow; ++x) {
                const double ma = mu_a(y, x);
                const double mb = mu_b(y, x);
                const double va = e_aa(y, x) - ma * ma;
                const double vb = e_bb(y, x) - mb * mb;
                const double cov = e_ab(y, x) - ma * mb;
                out(n, 0, y, x) = ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            }
    }
    return out;
}

double ssim(const Tensord& a, const Tensord& b, const SsimOptions& o, const Tensord* mask)
{
    const Tensord map = ssim_map(a, b, o);
    if (!mask) return map.array().mean();
    const Shape s = a.shape();
    if (mask->shape() != Shape{s.n, 1, s.h, s.w}) throw Error("ssim: mask shape mismatch");
    const int r = o.window / 2;
    double total = 0.0;
    std::int64_t count = 0;
    const Shape ms = map.shape();
    for (int n = 0; n < ms.n; ++n)
        for (int y = 0; y < ms.h; ++y)
            for (int x = 0; x < ms.w; ++x)
                if ((*mask)(n, 0, y + r, x + r) != 0.0) {
                    total += map(n, 0, y, x);
                    ++count;
                }
    if (count == 0) throw Error("ssim: mask selects no complete windows");
    return total / double(count);
}

double ssim(const Image8& a, const Image8& b, const Tensord* mask)
{
    return ssim(to_byte_tensor(a), to_byte_tensor(b), SsimOptions{}, mask);
}

std::string MetricReport::table() const
{
    std::ostringstream out;
    char line[256];
    std::snprintf(line, sizeof line, "%-32s %12s %10s\n", "image", "PSNR(dB)", "SSIM");
    out << line;
    for (const auto& e : entries) {
        std::snprintf(line, sizeof line, "%-32s %12.4f %10.4f\n", e.name.c_str(), e.psnr, e.ssim);
        out << line;
    }
    std::snprintf(line, sizeof line, "%-32s %12.4f %10.4f\n", "mean", mean_psnr, mean_ssim);
    out << line;
    return out.str();
}

std::string MetricReport::csv() const
{
    std::ostringstream out;
    out.precision(10);
    out << "image,psnr,ssim\n";
    for (const auto& e : entries) out << e.name << ',' << e.psnr << ',' << e.ssim << '\n';
    out << "mean," << mean_psnr << ',' << mean_ssim << '\n';
    return out.str();
}

MetricReport evaluate_directories(const fs::path& pred_dir, const fs::path& gt_dir, const EvalOptions& options)
{
    auto list = [](const fs::path& dir) {
        if (!fs::is_directory(dir)) throw Error("'" + dir.string() + "' is not a directory");
        std::map<std::string, fs::path> files;
        for (const auto& e : fs::directory_iterator(dir)) {
            if (!e.is_regular_file()) continue;
            std::string ext = e.path().extension().string();
            for (auto& ch : ext) ch = char(std::tolower(static_cast<unsigned char>(ch)));
            if (ext == ".png" || ext == ".ppm") files[e.path().stem().string()] = e.path();
        }
        return files;
    };
    const auto pred = list(pred_dir);
    const auto gt = list(gt_dir);
    MetricReport report;
    for (const auto& [stem, path] : pred) {
        auto it = gt.find(stem);
        if (it == gt.end()) {
            report.unmatched.push_back(path.filename().string());
            continue;
        }
        const Image8 p = read_image8(path);
        const Image8 g = resize(read_image8(it->second), p.width, p.height);
        Tensord mask;
        if (options.bands_only) {
            if (p.width != p.height) throw Error("band-restricted evaluation needs square images");
            mask = make_filling_map(options.mode, options.ratio, p.width).cast<double>();
        }
        const Tensord* m = options.bands_only ? &mask : nullptr;
        report.entries.push_back({stem, psnr(p, g, m), ssim(p, g, m)});
    }
    for (const auto& [stem, path] : gt)
        if (!pred.count(stem)) report.unmatched.push_back(path.filename().string());
    if (!report.entries.empty()) {
        for (const auto& e : report.entries) {
            report.mean_psnr += e.psnr;
            report.mean_ssim += e.ssim;
        }
        report.mean_psnr /= double(report.entries.size());
        report.mean_ssim /= double(report.entries.size());
    }
    return report;
}

}  // namespace sienet
