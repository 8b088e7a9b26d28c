#pragma once

#include "frontal/common.hpp"
#include "frontal/tensor.hpp"

#include <cstdint>
#include <string>

namespace frontal {

// Soft region masks (hair / skin / facial features), each H x W in [0, 1].
struct MaskTriple {
  Plane m_hair;
  Plane m_skin;
  Plane m_face;

  int height() const { return static_cast<int>(m_hair.rows()); }
  int width() const { return static_cast<int>(m_hair.cols()); }
  std::uint64_t digest() const;
};

// Region-masked copies of one image (image masked by hair / skin / face).
struct LocalViews {
  Tensor y_hair;
  Tensor y_skin;
  Tensor y_face;
};

// Pluggable facial parser. Implementations receive the frontal ground-truth
// image plus its landmarks and return the three soft masks. Masks are always
// derived from the real frontal image, never from a synthesized one.
class FacialParser {
public:
  virtual ~FacialParser() = default;
  virtual MaskTriple parse(const Tensor& frontal_image, const Landmarks5& landmarks) const = 0;
  virtual std::string id() const = 0;
};

// Geometric stand-in for a learned parser: skin = soft filled ellipse covering
// the landmarks dilated by 25%; face = sum of Gaussian blobs (sigma = 6% of
// width) at the landmarks, clipped to 1; hair = soft horizontal band above the
// eye line minus the skin mask, clipped to [0, 1].
MaskTriple landmark_stand_in_masks(const Landmarks5& landmarks, int height, int width);

class LandmarkStandInParser : public FacialParser {
public:
  MaskTriple parse(const Tensor& frontal_image, const Landmarks5& landmarks) const override;
  std::string id() const override { return "landmark-stand-in-v1"; }
};

// Runs the parser and enforces the mask contract: spatial dims must match the
// image, values are clipped to [0, 1].
MaskTriple parse_masks(const Tensor& frontal_image, const Landmarks5& landmarks,
                       const FacialParser& parser);

// Reads a precomputed mask triple stored as a 3-channel raster image
// (channel order hair, skin, face; the raster's value range maps linearly
// onto [0, 1]).
MaskTriple read_mask_image(const std::string& path);
void write_mask_image(const std::string& path, const MaskTriple& masks);

// Soft attention: each view is image (.) mask, broadcast across channels.
LocalViews apply_attention(const Tensor& image, const MaskTriple& masks);

// Per-channel Hadamard product with a single mask (helper shared with the
// local-discriminator backward pass).
Tensor hadamard_mask(const Tensor& image, const Plane& mask);

}  // namespace frontal
