#include "frontal/oracle.hpp"

#include <cmath>

namespace frontal::oracle {

namespace {

// Value of one average-pooled cell, computed directly from the source image.
double pooled_cell(const Tensor& t, int c, int oy, int ox, int factor) {
  int y1 = oy * factor + factor;
  int x1 = ox * factor + factor;
  if (y1 > t.height) y1 = t.height;
  if (x1 > t.width) x1 = t.width;
  double acc = 0.0;
  int count = 0;
  for (int y = oy * factor; y < y1; ++y)
    for (int x = ox * factor; x < x1; ++x) {
      acc += t(c, y, x);
      ++count;
    }
  return acc / count;
}

}  // namespace

Scalar pixel_loss_ref(const Tensor& y_hat, const Tensor& y) {
  double loss = 0.0;
  for (int scale = 0; scale < 3; ++scale) {
    const int factor = 1 << scale;  // 1, 2, 4
    int oh = y_hat.height / factor;
    int ow = y_hat.width / factor;
    if (oh < 1) oh = 1;
    if (ow < 1) ow = 1;
    double abs_sum = 0.0;
    for (int c = 0; c < y_hat.channels; ++c)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          const double a = pooled_cell(y_hat, c, oy, ox, factor);
          const double b = pooled_cell(y, c, oy, ox, factor);
          abs_sum += a >= b ? a - b : b - a;
        }
    loss += abs_sum / (static_cast<double>(oh) * ow * y_hat.channels) / 3.0;
  }
  return loss;
}

Scalar tv_loss_ref(const Tensor& y_hat) {
  double loss = 0.0;
  for (int c = 0; c < y_hat.channels; ++c)
    for (int y = 0; y < y_hat.height; ++y)
      for (int x = 0; x < y_hat.width; ++x) {
        if (x + 1 < y_hat.width) {
          const double d = y_hat(c, y, x + 1) - y_hat(c, y, x);
          loss += d >= 0 ? d : -d;
        }
        if (y + 1 < y_hat.height) {
          const double d = y_hat(c, y + 1, x) - y_hat(c, y, x);
          loss += d >= 0 ? d : -d;
        }
      }
  return loss;
}

namespace {

double cosine_distance_ref(const Mat& a, Eigen::Index ra, const Mat& b, Eigen::Index rb) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (Eigen::Index k = 0; k < a.cols(); ++k) {
    dot += a(ra, k) * b(rb, k);
    na += a(ra, k) * a(ra, k);
    nb += b(rb, k) * b(rb, k);
  }
  return 1.0 - dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

std::vector<int> rank1_ref(const Mat& probe_orig, const Mat& probe_gen, const Mat& gallery_orig,
                           const Mat& gallery_gen, const std::vector<int>& gallery_ids) {
  std::vector<int> predictions;
  predictions.reserve(static_cast<std::size_t>(probe_orig.rows()));
  for (Eigen::Index p = 0; p < probe_orig.rows(); ++p) {
    double best = 0.0;
    int best_id = -1;
    for (Eigen::Index g = 0; g < gallery_orig.rows(); ++g) {
      const double d = 0.5 * (cosine_distance_ref(probe_orig, p, gallery_orig, g) +
                              cosine_distance_ref(probe_gen, p, gallery_gen, g));
      const int id = gallery_ids[static_cast<std::size_t>(g)];
      if (best_id == -1 || d < best || (d == best && id < best_id)) {
        best = d;
        best_id = id;
      }
    }
    predictions.push_back(best_id);
  }
  return predictions;
}

}  // namespace frontal::oracle
