#include "frontal/toygen.hpp"

#include "frontal/image_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace frontal {
namespace {

constexpr Scalar kPi = 3.14159265358979323846;

bool known_name(const std::string& name, const char* const* table, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i)
    if (name == table[i]) return true;
  return false;
}

// Simple HSV -> RGB (h in [0,1), s,v in [0,1]).
void hsv_to_rgb(Scalar h, Scalar s, Scalar v, Scalar rgb[3]) {
  const Scalar hh = (h - std::floor(h)) * 6.0;
  const int sector = std::min(5, static_cast<int>(hh));
  const Scalar f = hh - sector;
  const Scalar p = v * (1.0 - s);
  const Scalar q = v * (1.0 - s * f);
  const Scalar t = v * (1.0 - s * (1.0 - f));
  switch (sector) {
    case 0: rgb[0] = v; rgb[1] = t; rgb[2] = p; break;
    case 1: rgb[0] = q; rgb[1] = v; rgb[2] = p; break;
    case 2: rgb[0] = p; rgb[1] = v; rgb[2] = t; break;
    case 3: rgb[0] = p; rgb[1] = q; rgb[2] = v; break;
    case 4: rgb[0] = t; rgb[1] = p; rgb[2] = v; break;
    default: rgb[0] = v; rgb[1] = p; rgb[2] = q; break;
  }
}

struct IlluminationRamp {
  Scalar gx = 0.0, gy = 0.0;  // gradient direction (pixel coords, y down)
  Scalar amp = 0.0;
  Scalar bias = 0.0;
};

IlluminationRamp illumination_ramp(const std::string& name) {
  if (name == "above") return {0.0, -1.0, 0.24, 0.0};
  if (name == "front") return {0.0, 0.0, 0.0, 0.08};
  if (name == "front_above") return {0.0, -0.6, 0.24, 0.06};
  if (name == "front_below") return {0.0, 0.6, 0.24, 0.06};
  if (name == "behind") return {0.0, 0.0, 0.0, -0.12};
  if (name == "left") return {-1.0, 0.0, 0.24, 0.0};
  if (name == "right") return {1.0, 0.0, 0.24, 0.0};
  fail_validation("toygen", "unknown illumination '" + name + "'");
}

Scalar vignette(int x, int y, int size) {
  const Scalar m = static_cast<Scalar>(
      std::min(std::min(x, y), std::min(size - 1 - x, size - 1 - y)));
  Scalar w = m / (0.12 * static_cast<Scalar>(size));
  w = std::clamp(w, 0.0, 1.0);
  return w * w * (3.0 - 2.0 * w);
}

}  // namespace

void ToySpec::validate() const {
  if (n_identities < 2) fail_validation("toygen", "n_identities must be at least 2");
  if (image_size != 32 && image_size != 64 && image_size != 128)
    fail_validation("toygen", "image_size must be 32, 64, or 128");
  if (poses.empty()) fail_validation("toygen", "poses must not be empty");
  for (const auto& [yaw, pitch] : poses)
    if (!pose_in_taxonomy(yaw, pitch))
      fail_validation("toygen", "pose (" + std::to_string(yaw) + ", " + std::to_string(pitch) +
                                    ") is not in the pose taxonomy");
  if (attributes.empty()) fail_validation("toygen", "attributes must not be empty");
  for (const std::string& a : attributes)
    if (!known_name(a, kAttributes.data(), kAttributes.size()))
      fail_validation("toygen", "unknown attribute '" + a + "'");
  if (illuminations.empty()) fail_validation("toygen", "illuminations must not be empty");
  for (const std::string& l : illuminations)
    if (!known_name(l, kIlluminations.data(), kIlluminations.size()))
      fail_validation("toygen", "unknown illumination '" + l + "'");
}

ToySpec smoke_spec() {
  ToySpec spec;
  spec.n_identities = 64;
  spec.image_size = 32;
  spec.seed = 7;
  spec.poses = {{0.0, 0.0}};
  for (Scalar yaw : {15.0, 30.0, 45.0, 60.0, 75.0}) {
    spec.poses.emplace_back(yaw, 0.0);
    spec.poses.emplace_back(-yaw, 0.0);
  }
  spec.attributes = {"neutral"};
  spec.illuminations = {"above", "front"};
  return spec;
}

ToySpec load_toy_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail_validation("toygen", "cannot open spec: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail_validation("toygen", path + ": " + e.what());
  }
  if (!j.is_object()) fail_validation("toygen", path + ": top level must be a JSON object");

  ToySpec spec;
  spec.poses = {{0.0, 0.0}};
  spec.attributes = {"neutral"};
  spec.illuminations = {"above"};
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "n_identities") {
        spec.n_identities = value.get<int>();
      } else if (key == "image_size") {
        spec.image_size = value.get<int>();
      } else if (key == "seed") {
        spec.seed = value.get<std::uint64_t>();
      } else if (key == "poses") {
        if (value.is_string()) {
          const std::string name = value.get<std::string>();
          if (name == "all62") {
            spec.poses = taxonomy_poses(true);
          } else if (name == "protocol57") {
            spec.poses = taxonomy_poses(false);
          } else if (name == "smoke11") {
            spec.poses = smoke_spec().poses;
          } else {
            fail_validation("toygen", path + ": unknown pose set '" + name + "'");
          }
        } else {
          spec.poses.clear();
          for (const auto& p : value) {
            if (!p.is_array() || p.size() != 2)
              fail_validation("toygen", path + ": each pose must be a [yaw, pitch] pair");
            spec.poses.emplace_back(p[0].get<Scalar>(), p[1].get<Scalar>());
          }
        }
      } else if (key == "attributes") {
        if (value.is_string() && value.get<std::string>() == "all") {
          spec.attributes.assign(kAttributes.begin(), kAttributes.end());
        } else {
          spec.attributes = value.get<std::vector<std::string>>();
        }
      } else if (key == "illuminations") {
        if (value.is_string() && value.get<std::string>() == "all") {
          spec.illuminations.assign(kIlluminations.begin(), kIlluminations.end());
        } else {
          spec.illuminations = value.get<std::vector<std::string>>();
        }
      } else {
        fail_validation("toygen", path + ": unknown key '" + key + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      fail_validation("toygen", path + ": key '" + key + "': " + e.what());
    }
  }
  spec.validate();
  return spec;
}

WarpCoeffs warp_coeffs(int image_size, Scalar yaw_deg, Scalar pitch_deg) {
  const Scalar sy = std::sin(yaw_deg * kPi / 180.0);
  const Scalar sp = std::sin(pitch_deg * kPi / 180.0);
  WarpCoeffs c;
  c.a = 0.18 * sy;
  c.b = 0.08 * static_cast<Scalar>(image_size) * sy;
  c.d = 0.12 * sp;
  c.e = 0.06 * static_cast<Scalar>(image_size) * sp;
  return c;
}

Landmarks5 posed_landmarks(int image_size, Scalar yaw_deg, Scalar pitch_deg) {
  const WarpCoeffs c = warp_coeffs(image_size, yaw_deg, pitch_deg);
  const Scalar cx = (static_cast<Scalar>(image_size) - 1.0) / 2.0;
  const Landmarks5 base = canonical_template(image_size);
  Landmarks5 out;
  for (int i = 0; i < 5; ++i) {
    const Scalar uc = base(i, 0) - cx;
    const Scalar vc = base(i, 1) - cx;
    out(i, 0) = uc + c.a * vc + c.b + cx;
    out(i, 1) = vc + c.d * uc + c.e + cx;
  }
  return out;
}

Tensor render_identity_canvas(const ToySpec& spec, int identity, const std::string& attribute,
                              const std::string& illumination) {
  if (identity < 0 || identity >= spec.n_identities)
    fail_validation("toygen", "identity out of range");
  const int size = spec.image_size;
  const Scalar s = static_cast<Scalar>(size);

  std::uint64_t h = fnv1a64("toy-identity");
  h = fnv1a64(&spec.seed, sizeof(spec.seed), h);
  const auto idu = static_cast<std::uint64_t>(identity);
  h = fnv1a64(&idu, sizeof(idu), h);
  Rng rng(h);

  // Identity base color: golden-ratio hue walk keeps identities far apart.
  const Scalar hue =
      static_cast<Scalar>(identity + 1) * 0.61803398874989485 +
      static_cast<Scalar>(spec.seed % 1024) / 1024.0;
  Scalar rgb[3];
  hsv_to_rgb(hue, 0.65 + 0.3 * rng.uniform(), 0.75 + 0.25 * rng.uniform(), rgb);
  Scalar base[3];
  for (int c = 0; c < 3; ++c) base[c] = (rgb[c] - 0.5) * 0.8;

  struct Blob {
    Scalar cx, cy, sigma, amp[3];
  };
  Blob blobs[3];
  for (Blob& blob : blobs) {
    blob.cx = rng.uniform(0.25 * s, 0.75 * s);
    blob.cy = rng.uniform(0.25 * s, 0.75 * s);
    blob.sigma = rng.uniform(0.08 * s, 0.16 * s);
    for (int c = 0; c < 3; ++c) blob.amp[c] = rng.uniform(-0.45, 0.45);
  }
  const Scalar stripe_freq = rng.uniform(1.5, 4.5);
  const Scalar stripe_theta = rng.uniform(0.0, kPi);
  const Scalar stripe_phase = rng.uniform(0.0, 2.0 * kPi);
  const Scalar stripe_amp = rng.uniform(0.08, 0.22);
  const Scalar ct = std::cos(stripe_theta), st = std::sin(stripe_theta);

  const Landmarks5 marks = canonical_template(size);
  const IlluminationRamp ramp = illumination_ramp(illumination);
  const Scalar cx = (s - 1.0) / 2.0;

  Tensor img(3, size, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const Scalar xf = static_cast<Scalar>(x), yf = static_cast<Scalar>(y);

      Scalar glyph = 0.0;
      if (attribute == "glasses") {
        for (int eye = 0; eye < 2; ++eye) {
          const Scalar dx = xf - marks(eye, 0), dy = yf - marks(eye, 1);
          const Scalar r = std::sqrt(dx * dx + dy * dy);
          const Scalar r0 = 0.09 * s, width = 0.025 * s;
          glyph -= 0.6 * std::exp(-(r - r0) * (r - r0) / (2.0 * width * width));
        }
      } else if (attribute == "smile") {
        const Scalar mx = 0.5 * (marks(3, 0) + marks(4, 0));
        const Scalar my = 0.5 * (marks(3, 1) + marks(4, 1));
        const Scalar dx = xf - mx, dy = yf - my;
        const Scalar sx = 0.12 * s, sy = 0.035 * s;
        glyph += 0.5 * std::exp(-(dx * dx / (2.0 * sx * sx) + dy * dy / (2.0 * sy * sy)));
      } else if (attribute == "surprise") {
        const Scalar mx = 0.5 * (marks(3, 0) + marks(4, 0));
        const Scalar my = 0.5 * (marks(3, 1) + marks(4, 1));
        const Scalar dx = xf - mx, dy = yf - my;
        const Scalar sigma = 0.07 * s;
        glyph += 0.5 * std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      }

      const Scalar illum =
          ramp.bias + ramp.amp * (ramp.gx * (xf - cx) + ramp.gy * (yf - cx)) / s;
      const Scalar stripes =
          stripe_amp * std::sin(2.0 * kPi * stripe_freq * (xf * ct + yf * st) / s + stripe_phase);
      const Scalar fade = vignette(x, y, size);

      for (int c = 0; c < 3; ++c) {
        Scalar v = base[c] + stripes + glyph + illum;
        for (const Blob& blob : blobs) {
          const Scalar dx = xf - blob.cx, dy = yf - blob.cy;
          v += blob.amp[c] * std::exp(-(dx * dx + dy * dy) / (2.0 * blob.sigma * blob.sigma));
        }
        // + 0.0 turns the border's -0.0 (negative value times zero fade) into
        // +0.0 so resampling identities hold bit-for-bit.
        img(c, y, x) = std::clamp(v * fade, -1.0, 1.0) + 0.0;
      }
    }
  }
  return img;
}

Tensor render_posed(const Tensor& canvas, Scalar yaw_deg, Scalar pitch_deg) {
  if (canvas.height != canvas.width) fail_validation("toygen", "canvas must be square");
  const int size = canvas.height;
  const WarpCoeffs c = warp_coeffs(size, yaw_deg, pitch_deg);
  const Scalar cx = (static_cast<Scalar>(size) - 1.0) / 2.0;
  const Scalar det = 1.0 - c.a * c.d;

  Tensor out(canvas.channels, size, size);
  for (int yp = 0; yp < size; ++yp) {
    for (int xp = 0; xp < size; ++xp) {
      const Scalar up = static_cast<Scalar>(xp) - cx;
      const Scalar vp = static_cast<Scalar>(yp) - cx;
      const Scalar uc = ((up - c.b) - c.a * (vp - c.e)) / det;
      const Scalar vc = (vp - c.e) - c.d * uc;
      for (int ch = 0; ch < canvas.channels; ++ch)
        out(ch, yp, xp) = sample_bilinear(canvas, ch, uc + cx, vc + cx, 0.0);
    }
  }
  return out;
}

std::string toy_image_name(int identity, Scalar yaw_deg, Scalar pitch_deg,
                           const std::string& attribute, const std::string& illumination) {
  const int yaw_tenths = static_cast<int>(std::lround(yaw_deg * 10.0));
  const int pitch_tenths = static_cast<int>(std::lround(pitch_deg * 10.0));
  char buf[160];
  std::snprintf(buf, sizeof(buf), "images/id%04d_y%+05d_p%+05d_%s_%s.ppm", identity, yaw_tenths,
                pitch_tenths, attribute.c_str(), illumination.c_str());
  return buf;
}

std::vector<ImageRecord> make_records(const ToySpec& spec) {
  spec.validate();
  std::vector<ImageRecord> records;
  records.reserve(static_cast<std::size_t>(spec.n_identities) * spec.poses.size() *
                  spec.attributes.size() * spec.illuminations.size());
  for (int id = 0; id < spec.n_identities; ++id) {
    for (const auto& [yaw, pitch] : spec.poses) {
      const Landmarks5 marks = posed_landmarks(spec.image_size, yaw, pitch);
      for (const std::string& attr : spec.attributes) {
        for (const std::string& illum : spec.illuminations) {
          ImageRecord rec;
          rec.image_ref = toy_image_name(id, yaw, pitch, attr, illum);
          rec.subject_id = id + 1;
          rec.yaw_deg = yaw;
          rec.pitch_deg = pitch;
          rec.attribute = attr;
          rec.illumination = illum;
          rec.landmarks = marks;
          records.push_back(std::move(rec));
        }
      }
    }
  }
  return records;
}

std::vector<ImageRecord> generate_toy_dataset(const ToySpec& spec, const std::string& out_dir) {
  std::vector<ImageRecord> records = make_records(spec);
  const std::filesystem::path root(out_dir);
  std::filesystem::create_directories(root / "images");

  for (int id = 0; id < spec.n_identities; ++id) {
    for (const std::string& attr : spec.attributes) {
      for (const std::string& illum : spec.illuminations) {
        const Tensor canvas = render_identity_canvas(spec, id, attr, illum);
        for (const auto& [yaw, pitch] : spec.poses) {
          const Tensor posed =
              (yaw == 0.0 && pitch == 0.0) ? canvas : render_posed(canvas, yaw, pitch);
          const std::string name = toy_image_name(id, yaw, pitch, attr, illum);
          write_image((root / name).string(), posed);
        }
      }
    }
  }

  write_manifest((root / "manifest.jsonl").string(), records);
  return records;
}

}  // namespace frontal
