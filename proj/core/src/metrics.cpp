#include "higan/metrics.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <limits>

#include <fmt/format.h>

#include "higan/error.hpp"
#include "higan/imaging.hpp"

namespace higan::metrics {

namespace {

void require_same_shape(const ImageTensor& a, const ImageTensor& b, const char* what) {
  if (!a.same_shape(b)) {
    throw InvalidArgument(fmt::format("{}: shape mismatch {}x{}x{} vs {}x{}x{}", what, a.channels(), a.height(),
                                      a.width(), b.channels(), b.height(), b.width()));
  }
}

std::array<double, kSsimWindow> gaussian_window() {
  std::array<double, kSsimWindow> w{};
  double sum = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double d = i - kSsimWindow / 2;
    w[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
    sum += w[i];
  }
  for (auto& x : w) x /= sum;
  return w;
}

// Valid-mode separable filtering of a row-major h x w plane.
std::vector<double> filter_valid(const std::vector<double>& in, int h, int w) {
  static const auto g = gaussian_window();
  const int ow = w - kSsimWindow + 1;
  const int oh = h - kSsimWindow + 1;
  std::vector<double> rows(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kSsimWindow; ++k) acc += g[k] * in[static_cast<std::size_t>(y) * w + x + k];
      rows[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kSsimWindow; ++k) acc += g[k] * rows[static_cast<std::size_t>(y + k) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  }
  return out;
}

double channel_ssim(const ImageTensor& a, const ImageTensor& b, int c) {
  const int h = a.height();
  const int w = a.width();
  const std::size_t n = static_cast<std::size_t>(h) * w;
  std::vector<double> pa(n), pb(n), aa(n), bb(n), ab(n);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      pa[i] = a.at(c, y, x);
      pb[i] = b.at(c, y, x);
      aa[i] = pa[i] * pa[i];
      bb[i] = pb[i] * pb[i];
      ab[i] = pa[i] * pb[i];
    }
  }
  const auto mu_a = filter_valid(pa, h, w);
  const auto mu_b = filter_valid(pb, h, w);
  const auto e_aa = filter_valid(aa, h, w);
  const auto e_bb = filter_valid(bb, h, w);
  const auto e_ab = filter_valid(ab, h, w);
  const double c1 = kSsimK1 * kSsimK1;
  const double c2 = kSsimK2 * kSsimK2;
  double sum = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i];
    const double mb = mu_b[i];
    const double va = e_aa[i] - ma * ma;
    const double vb = e_bb[i] - mb * mb;
    const double cov = e_ab[i] - ma * mb;
    sum += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return sum / static_cast<double>(mu_a.size());
}

// Sum of |d| and d^2 on the 0-255 scale, plus the number of contributing values.
struct Residuals {
  double abs_sum = 0.0;
  double sq_sum = 0.0;
  std::size_t count = 0;
};

Residuals residuals(const ImageTensor& a, const ImageTensor& b, const Mask* holes) {
  if (holes && (holes->height() != a.height() || holes->width() != a.width())) {
    throw InvalidArgument("metric mask does not match the image size");
  }
  Residuals r;
  for (int c = 0; c < a.channels(); ++c) {
    for (int y = 0; y < a.height(); ++y) {
      for (int x = 0; x < a.width(); ++x) {
        if (holes && !holes->at(y, x)) continue;
        const double d = 255.0 * (static_cast<double>(a.at(c, y, x)) - static_cast<double>(b.at(c, y, x)));
        r.abs_sum += std::abs(d);
        r.sq_sum += d * d;
        ++r.count;
      }
    }
  }
  return r;
}

ImageTensor as_rgb(const ImageTensor& image) {
  if (image.channels() == 3) return image;
  ImageTensor out(image.height(), image.width(), 3);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < image.height(); ++y)
      for (int x = 0; x < image.width(); ++x) out.at(c, y, x) = image.at(0, y, x);
  return out;
}

ImageTensor mask_image(const Mask& mask) {
  ImageTensor out(mask.height(), mask.width(), 3);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < mask.height(); ++y)
      for (int x = 0; x < mask.width(); ++x) out.at(c, y, x) = mask.at(y, x) ? 1.0f : 0.0f;
  return out;
}

}  // namespace

double ssim(const ImageTensor& a, const ImageTensor& b) {
  require_same_shape(a, b, "ssim");
  if (a.height() < kSsimWindow || a.width() < kSsimWindow) {
    throw InvalidArgument(fmt::format("ssim needs images of at least {0}x{0}", kSsimWindow));
  }
  double sum = 0.0;
  for (int c = 0; c < a.channels(); ++c) sum += channel_ssim(a, b, c);
  return sum / a.channels();
}

double psnr(const ImageTensor& a, const ImageTensor& b, double max_val) {
  require_same_shape(a, b, "psnr");
  if (!(max_val > 0.0)) throw InvalidArgument("psnr max_val must be positive");
  double sq = 0.0;
  const auto& da = a.data();
  const auto& db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) {
    const double d = static_cast<double>(da[i]) - static_cast<double>(db[i]);
    sq += d * d;
  }
  const double mse = sq / static_cast<double>(da.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(max_val * max_val / mse);
}

double mae(const ImageTensor& a, const ImageTensor& b, const Mask* holes) {
  require_same_shape(a, b, "mae");
  const auto r = residuals(a, b, holes);
  return r.count ? r.abs_sum / static_cast<double>(r.count) : 0.0;
}

double rmse(const ImageTensor& a, const ImageTensor& b, const Mask* holes) {
  require_same_shape(a, b, "rmse");
  const auto r = residuals(a, b, holes);
  return r.count ? std::sqrt(r.sq_sum / static_cast<double>(r.count)) : 0.0;
}

const char* to_string(Region region) { return region == Region::Full ? "full" : "holes"; }

Region parse_region(const std::string& text) {
  if (text == "full") return Region::Full;
  if (text == "holes") return Region::Holes;
  throw InvalidArgument(fmt::format("unknown region '{}' (expected full or holes)", text));
}

SampleMetrics MetricReport::aggregate() const {
  SampleMetrics mean;
  mean.name = "mean";
  if (samples.empty()) return mean;
  for (const auto& s : samples) {
    mean.rgb_ssim += s.rgb_ssim;
    mean.rgb_psnr += s.rgb_psnr;
    mean.depth_psnr += s.depth_psnr;
    mean.rgb_mae += s.rgb_mae;
    mean.rgb_rmse += s.rgb_rmse;
    mean.depth_mae += s.depth_mae;
    mean.depth_rmse += s.depth_rmse;
  }
  const double n = static_cast<double>(samples.size());
  mean.rgb_ssim /= n;
  mean.rgb_psnr /= n;
  mean.depth_psnr /= n;
  mean.rgb_mae /= n;
  mean.rgb_rmse /= n;
  mean.depth_mae /= n;
  mean.depth_rmse /= n;
  return mean;
}

namespace {

std::string csv_row(const SampleMetrics& m) {
  return fmt::format("{},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f}", m.name, m.rgb_ssim, m.rgb_psnr,
                     m.depth_psnr, m.rgb_mae, m.rgb_rmse, m.depth_mae, m.depth_rmse);
}

}  // namespace

void MetricReport::write_csv(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
  out << "sample";
  for (const char* column : kMetricColumns) out << ',' << column;
  out << '\n';
  for (const auto& s : samples) out << csv_row(s) << '\n';
  out << csv_row(aggregate()) << '\n';
  if (!out) throw Error(fmt::format("failed writing '{}'", path.string()));
}

std::string MetricReport::table() const {
  std::string out = fmt::format("region: {}\n{:<16}", to_string(region), "sample");
  for (const char* column : kMetricColumns) out += fmt::format("{:>12}", column);
  out += '\n';
  const auto line = [&](const SampleMetrics& m) {
    out += fmt::format("{:<16}{:>12.4f}{:>12.3f}{:>12.3f}{:>12.4f}{:>12.4f}{:>12.4f}{:>12.4f}\n", m.name,
                       m.rgb_ssim, m.rgb_psnr, m.depth_psnr, m.rgb_mae, m.rgb_rmse, m.depth_mae, m.depth_rmse);
  };
  for (const auto& s : samples) line(s);
  line(aggregate());
  return out;
}

SampleMetrics evaluate_sample(const RgbdPrediction& prediction, const data::SampleBundle& truth, Region region,
                              std::string name) {
  const auto rgb = composite(prediction.rgb, truth.rgb, truth.mask);
  const auto depth = composite(prediction.depth, truth.depth, truth.mask);
  const Mask* holes = region == Region::Holes ? &truth.mask : nullptr;
  SampleMetrics m;
  m.name = std::move(name);
  m.rgb_ssim = ssim(rgb, truth.rgb);
  m.rgb_psnr = psnr(rgb, truth.rgb);
  m.depth_psnr = psnr(depth, truth.depth);
  m.rgb_mae = mae(rgb, truth.rgb, holes);
  m.rgb_rmse = rmse(rgb, truth.rgb, holes);
  m.depth_mae = mae(depth, truth.depth, holes);
  m.depth_rmse = rmse(depth, truth.depth, holes);
  return m;
}

MetricReport evaluate_dataset(std::span<const RgbdPrediction> predictions, std::span<const data::SampleBundle> truths,
                              Region region, std::span<const std::string> names) {
  if (predictions.size() != truths.size()) throw InvalidArgument("evaluate_dataset: prediction/truth count mismatch");
  if (!names.empty() && names.size() != truths.size()) throw InvalidArgument("evaluate_dataset: name count mismatch");
  MetricReport report;
  report.region = region;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    report.samples.push_back(
        evaluate_sample(predictions[i], truths[i], region, names.empty() ? std::to_string(i) : names[i]));
  }
  return report;
}

ImageTensor figure_grid(const data::SampleBundle& truth, const RgbdPrediction& prediction) {
  const int h = truth.height();
  const int w = truth.width();
  const ImageTensor tiles[2][4] = {
      {mask_image(truth.mask), truth.masked_rgb, composite(prediction.rgb, truth.rgb, truth.mask), truth.rgb},
      {mask_image(truth.mask), as_rgb(truth.masked_depth),
       as_rgb(composite(prediction.depth, truth.depth, truth.mask)), as_rgb(truth.depth)},
  };
  ImageTensor grid(2 * h, 4 * w, 3);
  for (int row = 0; row < 2; ++row)
    for (int col = 0; col < 4; ++col)
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x) grid.at(c, row * h + y, col * w + x) = tiles[row][col].at(c, y, x);
  return grid;
}

}  // namespace higan::metrics
