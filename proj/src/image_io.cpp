#include "frontal/image_io.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <vector>

namespace frontal {

namespace {

// Reads one whitespace/comment-delimited token from a PNM header.
std::string next_token(std::istream& in, const std::string& path) {
  std::string tok;
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (std::isspace(c)) {
      c = in.get();
    } else {
      break;
    }
  }
  while (c != EOF && !std::isspace(c)) {
    tok.push_back(static_cast<char>(c));
    c = in.get();
  }
  if (tok.empty()) fail_validation("image_io", path + ": truncated header");
  return tok;
}

long parse_positive(const std::string& tok, const std::string& path, const char* what) {
  long v = 0;
  for (char ch : tok) {
    if (!std::isdigit(static_cast<unsigned char>(ch)))
      fail_validation("image_io", path + ": bad " + what + " '" + tok + "'");
    v = v * 10 + (ch - '0');
    if (v > 1000000) fail_validation("image_io", path + ": " + what + " out of range");
  }
  if (v <= 0) fail_validation("image_io", path + ": " + what + " must be positive");
  return v;
}

}  // namespace

Tensor read_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_validation("image_io", "cannot open " + path);

  const std::string magic = next_token(in, path);
  int channels = 0;
  if (magic == "P6") channels = 3;
  else if (magic == "P5") channels = 1;
  else fail_validation("image_io", path + ": unsupported magic '" + magic + "'");

  const long w = parse_positive(next_token(in, path), path, "width");
  const long h = parse_positive(next_token(in, path), path, "height");
  const long maxval = parse_positive(next_token(in, path), path, "maxval");
  if (maxval != 255) fail_validation("image_io", path + ": maxval must be 255");
  // The single whitespace byte after maxval was already consumed by next_token.

  const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * channels;
  std::vector<unsigned char> raw(n);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n)
    fail_validation("image_io", path + ": truncated pixel data");

  Tensor t(channels, static_cast<int>(h), static_cast<int>(w));
  const Eigen::Index plane = t.plane_size();
  for (Eigen::Index i = 0; i < plane; ++i) {
    for (int c = 0; c < channels; ++c) {
      const unsigned char byte = raw[static_cast<std::size_t>(i) * channels + c];
      t.data[c * plane + i] = static_cast<Scalar>(byte) / 255.0 * 2.0 - 1.0;
    }
  }
  return t;
}

void write_image(const std::string& path, const Tensor& image) {
  if (image.channels != 1 && image.channels != 3)
    fail_validation("image_io", path + ": image must have 1 or 3 channels, has " +
                                     std::to_string(image.channels));
  if (image.height <= 0 || image.width <= 0)
    fail_validation("image_io", path + ": empty image");

  std::ofstream out(path, std::ios::binary);
  if (!out) fail_runtime("image_io", "cannot write " + path);

  out << (image.channels == 3 ? "P6" : "P5") << "\n"
      << image.width << " " << image.height << "\n255\n";

  const Eigen::Index plane = image.plane_size();
  std::vector<unsigned char> raw(static_cast<std::size_t>(plane) * image.channels);
  for (Eigen::Index i = 0; i < plane; ++i) {
    for (int c = 0; c < image.channels; ++c) {
      Scalar v = (image.data[c * plane + i] + 1.0) / 2.0 * 255.0;
      v = std::floor(v + 0.5);  // round half up, independent of FP rounding mode
      if (v < 0.0) v = 0.0;
      if (v > 255.0) v = 255.0;
      raw[static_cast<std::size_t>(i) * image.channels + c] = static_cast<unsigned char>(v);
    }
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) fail_runtime("image_io", "short write to " + path);
}

}  // namespace frontal
