#include "frontal/parsing.hpp"

#include "frontal/image_io.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace frontal {

std::uint64_t MaskTriple::digest() const {
  std::uint64_t h = 14695981039346656037ull;
  for (const Plane* p : {&m_hair, &m_skin, &m_face}) {
    const auto rows = p->rows(), cols = p->cols();
    h = fnv1a64(&rows, sizeof(rows), h);
    h = fnv1a64(&cols, sizeof(cols), h);
    h = fnv1a64(p->data(), static_cast<std::size_t>(p->size()) * sizeof(Scalar), h);
  }
  return h;
}

MaskTriple landmark_stand_in_masks(const Landmarks5& landmarks, int height, int width) {
  if (height <= 0 || width <= 0) fail_validation("parsing", "mask dims must be positive");

  const Eigen::Matrix<Scalar, 1, 2> mean = landmarks.colwise().mean();
  Eigen::Matrix<Scalar, 5, 2> centered = landmarks.rowwise() - mean;

  Eigen::JacobiSVD<Eigen::Matrix<Scalar, 5, 2>> svd(centered);
  const Scalar s0 = svd.singularValues()(0);
  const Scalar s1 = svd.singularValues()(1);
  if (s0 <= 0.0 || s1 <= 1e-6 * s0)
    fail_validation("parsing", "degenerate landmarks (collinear within tolerance)");

  // Second-moment matrix of the five points; its Mahalanobis ball is the
  // ellipse we grow until the whole landmark set is covered.
  Eigen::Matrix<Scalar, 2, 2> cov = centered.transpose() * centered / 5.0;
  const Eigen::Matrix<Scalar, 2, 2> cov_inv = cov.inverse();

  Scalar hull_radius = 0.0;
  for (int i = 0; i < 5; ++i) {
    const Eigen::Matrix<Scalar, 2, 1> d = centered.row(i).transpose();
    hull_radius = std::max(hull_radius, std::sqrt(d.dot(cov_inv * d)));
  }
  const Scalar radius = hull_radius * 1.25;  // ellipse dilated by 25%
  const Scalar rim = std::max(0.08 * radius, 1e-6);

  const Scalar sigma = 0.06 * static_cast<Scalar>(width);
  const Scalar inv2s2 = 1.0 / (2.0 * sigma * sigma);
  const Scalar eye_line = 0.5 * (landmarks(0, 1) + landmarks(1, 1));
  const Scalar band_soft = std::max(0.04 * static_cast<Scalar>(height), 1e-6);

  MaskTriple m;
  m.m_hair.setZero(height, width);
  m.m_skin.setZero(height, width);
  m.m_face.setZero(height, width);

  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const Scalar px = static_cast<Scalar>(x) - mean(0);
      const Scalar py = static_cast<Scalar>(y) - mean(1);
      const Scalar maha = std::sqrt(px * (cov_inv(0, 0) * px + cov_inv(0, 1) * py) +
                                    py * (cov_inv(1, 0) * px + cov_inv(1, 1) * py));
      const Scalar skin = std::clamp((radius - maha) / rim + 1.0, 0.0, 1.0);
      m.m_skin(y, x) = skin;

      Scalar face = 0.0;
      for (int i = 0; i < 5; ++i) {
        const Scalar dx = static_cast<Scalar>(x) - landmarks(i, 0);
        const Scalar dy = static_cast<Scalar>(y) - landmarks(i, 1);
        face += std::exp(-(dx * dx + dy * dy) * inv2s2);
      }
      m.m_face(y, x) = std::min(face, 1.0);

      const Scalar band = std::clamp((eye_line - static_cast<Scalar>(y)) / band_soft, 0.0, 1.0);
      m.m_hair(y, x) = std::clamp(band - skin, 0.0, 1.0);
    }
  }
  return m;
}

MaskTriple LandmarkStandInParser::parse(const Tensor& frontal_image,
                                        const Landmarks5& landmarks) const {
  return landmark_stand_in_masks(landmarks, frontal_image.height, frontal_image.width);
}

MaskTriple parse_masks(const Tensor& frontal_image, const Landmarks5& landmarks,
                       const FacialParser& parser) {
  MaskTriple m = parser.parse(frontal_image, landmarks);
  if (m.height() != frontal_image.height || m.width() != frontal_image.width ||
      m.m_skin.rows() != m.m_hair.rows() || m.m_skin.cols() != m.m_hair.cols() ||
      m.m_face.rows() != m.m_hair.rows() || m.m_face.cols() != m.m_hair.cols())
    fail_validation("parsing", "parser '" + parser.id() + "' returned masks of size " +
                                   std::to_string(m.width()) + "x" + std::to_string(m.height()) +
                                   " for a " + std::to_string(frontal_image.width) + "x" +
                                   std::to_string(frontal_image.height) + " image");
  m.m_hair = m.m_hair.min(1.0).max(0.0);
  m.m_skin = m.m_skin.min(1.0).max(0.0);
  m.m_face = m.m_face.min(1.0).max(0.0);
  return m;
}

MaskTriple read_mask_image(const std::string& path) {
  const Tensor raster = read_image(path);
  if (raster.channels != 3)
    fail_validation("parsing", path + ": mask image must have 3 channels");
  MaskTriple m;
  // Raster values arrive in [-1, 1]; masks live in [0, 1].
  m.m_hair = (raster.plane(0) + 1.0) / 2.0;
  m.m_skin = (raster.plane(1) + 1.0) / 2.0;
  m.m_face = (raster.plane(2) + 1.0) / 2.0;
  return m;
}

void write_mask_image(const std::string& path, const MaskTriple& masks) {
  Tensor raster(3, masks.height(), masks.width());
  raster.plane(0) = masks.m_hair * 2.0 - 1.0;
  raster.plane(1) = masks.m_skin * 2.0 - 1.0;
  raster.plane(2) = masks.m_face * 2.0 - 1.0;
  write_image(path, raster);
}

Tensor hadamard_mask(const Tensor& image, const Plane& mask) {
  if (mask.rows() != image.height || mask.cols() != image.width)
    fail_validation("parsing", "mask dims " + std::to_string(mask.cols()) + "x" +
                                   std::to_string(mask.rows()) + " do not match image " +
                                   std::to_string(image.width) + "x" +
                                   std::to_string(image.height));
  Tensor out(image.channels, image.height, image.width);
  for (int c = 0; c < image.channels; ++c) out.plane(c) = image.plane(c) * mask;
  return out;
}

LocalViews apply_attention(const Tensor& image, const MaskTriple& masks) {
  LocalViews v;
  v.y_hair = hadamard_mask(image, masks.m_hair);
  v.y_skin = hadamard_mask(image, masks.m_skin);
  v.y_face = hadamard_mask(image, masks.m_face);
  return v;
}

}  // namespace frontal
