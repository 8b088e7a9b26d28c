#pragma once

#include "frontal/common.hpp"
#include "frontal/dataset.hpp"
#include "frontal/tensor.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace frontal {

// Synthetic corpus description. Every (identity, pose, attribute,
// illumination) combination yields one record, so the corpus has
// n_identities * |poses| * |attributes| * |illuminations| rows.
struct ToySpec {
  int n_identities = 64;
  int image_size = 32;
  std::uint64_t seed = 0;
  std::vector<std::pair<Scalar, Scalar>> poses;  // (yaw, pitch), taxonomy members
  std::vector<std::string> attributes;           // subset of kAttributes
  std::vector<std::string> illuminations;        // subset of kIlluminations

  void validate() const;
};

// The training smoke corpus: 64 identities at 32x32, the frontal pose plus
// ten yaw-only poses, neutral attribute, two illuminations.
ToySpec smoke_spec();

// JSON spec reader. Keys: n_identities, image_size, seed, poses ("all62",
// "protocol57", "smoke11", or an array of [yaw, pitch] pairs), attributes and
// illuminations ("all" or an array of names). Unknown keys are an error.
ToySpec load_toy_spec(const std::string& path);

// In-plane pose warp used to synthesize non-frontal views. Centered
// coordinates; shear and shift grow with sin(angle). Closed-form inverse.
struct WarpCoeffs {
  Scalar a = 0.0, b = 0.0, d = 0.0, e = 0.0;
};
WarpCoeffs warp_coeffs(int image_size, Scalar yaw_deg, Scalar pitch_deg);

// Landmarks of the posed image: the canonical template pushed through the
// forward warp.
Landmarks5 posed_landmarks(int image_size, Scalar yaw_deg, Scalar pitch_deg);

// Canonical-frame face canvas for one identity: identity-specific base color
// (golden-ratio hue), blobs and stripes, plus the attribute glyph and the
// additive illumination ramp, all faded to zero at the borders.
Tensor render_identity_canvas(const ToySpec& spec, int identity, const std::string& attribute,
                              const std::string& illumination);

// Posed view of a canvas: inverse-warp bilinear resampling, fill 0.
Tensor render_posed(const Tensor& canvas, Scalar yaw_deg, Scalar pitch_deg);

// Deterministic relative file name of one record's image.
std::string toy_image_name(int identity, Scalar yaw_deg, Scalar pitch_deg,
                           const std::string& attribute, const std::string& illumination);

// Manifest rows exactly as generate_toy_dataset would emit them, without
// touching the filesystem (pixels are irrelevant for protocol-scale tests).
std::vector<ImageRecord> make_records(const ToySpec& spec);

// Writes out_dir/images/*.ppm and out_dir/manifest.jsonl; returns the records.
std::vector<ImageRecord> generate_toy_dataset(const ToySpec& spec, const std::string& out_dir);

}  // namespace frontal
