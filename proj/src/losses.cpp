#include "geoworld/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "geoworld/parallel.hpp"

namespace geoworld {

PointMap project_pointmap(const DepthVideo& depth, const Raymap& decoded) {
  if (depth.frames != decoded.frames || depth.height != decoded.height ||
      depth.width != decoded.width) {
    fail(ErrorCode::shape_mismatch, "project_pointmap: depth and raymap shapes differ");
  }
  PointMap p;
  p.frames = depth.frames;
  p.height = depth.height;
  p.width = depth.width;
  p.points.setConstant(depth.size() * 3, std::numeric_limits<double>::quiet_NaN());
  p.valid = Mask(depth.frames, depth.height, depth.width, 0);
  p.depth = depth;
  parallel_for(static_cast<std::size_t>(depth.frames), [&](std::size_t ti) {
    const int t = static_cast<int>(ti);
    for (int y = 0; y < depth.height; ++y) {
      for (int x = 0; x < depth.width; ++x) {
        const double d = depth(t, y, x);
        if (!is_valid_depth(d)) continue;
        const Eigen::Vector3d pt = d * decoded.direction(t, y, x) + decoded.origin(t, y, x);
        p.points.segment<3>(p.index(t, y, x)) = pt;
        p.valid(t, y, x) = 1;
      }
    }
  });
  return p;
}

namespace {

bool use_pixel(const DepthVideo& pred, const DepthVideo& gt, const Mask& mask, Eigen::Index i) {
  return mask.values[i] != 0 && std::isfinite(pred.values[i]) && std::isfinite(gt.values[i]);
}

void check_ssi_shapes(const DepthVideo& pred, const DepthVideo& gt, const Mask& mask) {
  require_same_shape(pred, gt, "ssi");
  if (mask.frames != pred.frames || mask.height != pred.height || mask.width != pred.width) {
    fail(ErrorCode::shape_mismatch, "ssi: mask shape mismatch");
  }
}

}  // namespace

SsiAlignment ssi_align(const DepthVideo& pred, const DepthVideo& gt, const Mask& mask) {
  check_ssi_shapes(pred, gt, mask);
  double n = 0, sp = 0, sg = 0;
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    if (!use_pixel(pred, gt, mask, i)) continue;
    n += 1;
    sp += pred.values[i];
    sg += gt.values[i];
  }
  if (n < 2) fail(ErrorCode::degenerate, "ssi_align: fewer than 2 valid pixels");
  const double mp = sp / n;
  const double mg = sg / n;
  double var = 0, cov = 0;
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    if (!use_pixel(pred, gt, mask, i)) continue;
    const double dp = pred.values[i] - mp;
    var += dp * dp;
    cov += dp * (gt.values[i] - mg);
  }
  if (!(var > 1e-300) || var <= 1e-24 * n * std::max(1.0, mp * mp)) {
    fail(ErrorCode::degenerate, "ssi_align: prediction is constant under the mask");
  }
  SsiAlignment a;
  a.scale = cov / var;
  a.shift = mg - a.scale * mp;
  return a;
}

double ssi_loss(const DepthVideo& pred, const DepthVideo& gt, const Mask& mask,
                const SsiLossConfig& cfg) {
  if (cfg.num_scales < 0) fail(ErrorCode::invalid_argument, "ssi_loss: num_scales must be >= 0");
  const SsiAlignment a = ssi_align(pred, gt, mask);

  DepthVideo residual(pred.frames, pred.height, pred.width, 0.0);
  Mask used(pred.frames, pred.height, pred.width, 0);
  double data = 0;
  double n = 0;
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    if (!use_pixel(pred, gt, mask, i)) continue;
    residual.values[i] = a.scale * pred.values[i] + a.shift - gt.values[i];
    used.values[i] = 1;
    data += std::abs(residual.values[i]);
    n += 1;
  }
  data /= n;

  double gradient = 0;
  for (int k = 0; k < cfg.num_scales; ++k) {
    const int step = 1 << k;
    double sum = 0;
    double count = 0;
    for (int t = 0; t < pred.frames; ++t) {
      for (int y = 0; y < pred.height; y += step) {
        for (int x = 0; x < pred.width; x += step) {
          if (!used(t, y, x)) continue;
          if (x + step < pred.width && used(t, y, x + step)) {
            sum += std::abs(residual(t, y, x + step) - residual(t, y, x));
            count += 1;
          }
          if (y + step < pred.height && used(t, y + step, x)) {
            sum += std::abs(residual(t, y + step, x) - residual(t, y, x));
            count += 1;
          }
        }
      }
    }
    if (count > 0) gradient += sum / count;
  }
  return data + cfg.alpha * gradient;
}

double pointmap_loss(const PointMap& pred, const PointMap& gt, int norm_p) {
  if (norm_p != 1 && norm_p != 2) fail(ErrorCode::invalid_argument, "pointmap_loss: p must be 1 or 2");
  if (pred.frames != gt.frames || pred.height != gt.height || pred.width != gt.width ||
      gt.depth.frames != gt.frames || gt.depth.height != gt.height || gt.depth.width != gt.width) {
    fail(ErrorCode::shape_mismatch, "pointmap_loss: shape mismatch");
  }
  double weighted = 0;
  double weight_sum = 0;
  for (int t = 0; t < gt.frames; ++t) {
    for (int y = 0; y < gt.height; ++y) {
      for (int x = 0; x < gt.width; ++x) {
        if (!pred.valid(t, y, x) || !gt.valid(t, y, x)) continue;
        const double d = gt.depth(t, y, x);
        if (!std::isfinite(d)) continue;
        const Eigen::Vector3d diff = pred.at(t, y, x) - gt.at(t, y, x);
        const double dist = norm_p == 1 ? diff.lpNorm<1>() : diff.norm();
        const double w = 1.0 / std::max(d, kPointmapDepthFloor);
        weighted += w * dist;
        weight_sum += w;
      }
    }
  }
  if (!(weight_sum > 0)) fail(ErrorCode::degenerate, "pointmap_loss: no jointly valid points");
  return weighted / weight_sum;
}

namespace {

constexpr int kWindow = 11;
constexpr double kWindowSigma = 1.5;

Eigen::Matrix<double, kWindow, 1> gaussian_window() {
  Eigen::Matrix<double, kWindow, 1> g;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - kWindow / 2;
    g[i] = std::exp(-d * d / (2 * kWindowSigma * kWindowSigma));
  }
  return g / g.sum();
}

// Separable "valid" correlation with the Gaussian window.
Eigen::ArrayXXd filter_valid(const Eigen::ArrayXXd& img) {
  static const Eigen::Matrix<double, kWindow, 1> g = gaussian_window();
  const Eigen::Index rows = img.rows() - kWindow + 1;
  const Eigen::Index cols = img.cols() - kWindow + 1;
  Eigen::ArrayXXd tmp = Eigen::ArrayXXd::Zero(rows, img.cols());
  for (int k = 0; k < kWindow; ++k) tmp += g[k] * img.middleRows(k, rows);
  Eigen::ArrayXXd out = Eigen::ArrayXXd::Zero(rows, cols);
  for (int k = 0; k < kWindow; ++k) out += g[k] * tmp.middleCols(k, cols);
  return out;
}

Eigen::ArrayXXd average_pool2(const Eigen::ArrayXXd& img) {
  const Eigen::Index rows = img.rows() / 2;
  const Eigen::Index cols = img.cols() / 2;
  Eigen::ArrayXXd out(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) {
      out(r, c) = 0.25 * (img(2 * r, 2 * c) + img(2 * r + 1, 2 * c) + img(2 * r, 2 * c + 1) +
                          img(2 * r + 1, 2 * c + 1));
    }
  }
  return out;
}

}  // namespace

double ssim(const Eigen::ArrayXXd& a, const Eigen::ArrayXXd& b, double dynamic_range) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    fail(ErrorCode::shape_mismatch, "ssim: image shapes differ");
  }
  if (a.rows() < kWindow || a.cols() < kWindow) {
    fail(ErrorCode::invalid_argument, "ssim: image smaller than the 11x11 window");
  }
  const double c1 = (0.01 * dynamic_range) * (0.01 * dynamic_range);
  const double c2 = (0.03 * dynamic_range) * (0.03 * dynamic_range);
  const Eigen::ArrayXXd mu_a = filter_valid(a);
  const Eigen::ArrayXXd mu_b = filter_valid(b);
  const Eigen::ArrayXXd var_a = filter_valid(a * a) - mu_a.square();
  const Eigen::ArrayXXd var_b = filter_valid(b * b) - mu_b.square();
  const Eigen::ArrayXXd cov = filter_valid(a * b) - mu_a * mu_b;
  const Eigen::ArrayXXd map = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) /
                              ((mu_a.square() + mu_b.square() + c1) * (var_a + var_b + c2));
  return map.mean();
}

double ms_ssim(const Eigen::ArrayXXd& a, const Eigen::ArrayXXd& b, const MsSsimConfig& cfg) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    fail(ErrorCode::shape_mismatch, "ms_ssim: image shapes differ");
  }
  if (cfg.weights.empty()) fail(ErrorCode::invalid_argument, "ms_ssim: no scale weights");
  if (!(cfg.dynamic_range > 0)) fail(ErrorCode::invalid_argument, "ms_ssim: dynamic range must be > 0");
  const Eigen::Index min_dim = (Eigen::Index{1} << (cfg.weights.size() - 1)) * kWindow;
  if (std::min(a.rows(), a.cols()) < min_dim) {
    fail(ErrorCode::invalid_argument, "ms_ssim: image too small for " +
                                          std::to_string(cfg.weights.size()) + " scales");
  }
  Eigen::ArrayXXd x = a;
  Eigen::ArrayXXd y = b;
  double result = 1.0;
  for (std::size_t i = 0; i < cfg.weights.size(); ++i) {
    if (i > 0) {
      x = average_pool2(x);
      y = average_pool2(y);
    }
    const double term = std::max(ssim(x, y, cfg.dynamic_range), 0.0);
    result *= std::pow(term, cfg.weights[i]);
  }
  return result;
}

}  // namespace geoworld
