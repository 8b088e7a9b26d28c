#include "frontal/dataset.hpp"

#include <json.hpp>

#include <Eigen/Geometry>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace frontal {

namespace {

using nlohmann::json;

const std::vector<Scalar>& yaw_set_fine() {
  static const std::vector<Scalar> v = {-90, -75, -60, -45, -30, -15, 0,
                                        15,  30,  45,  60,  75,  90};
  return v;
}
const std::vector<Scalar>& yaw_set_mid() {
  static const std::vector<Scalar> v = {-90, -67.5, -45, -22.5, 0, 22.5, 45, 67.5, 90};
  return v;
}
const std::vector<Scalar>& yaw_set_top() {
  static const std::vector<Scalar> v = {-90, -45, 0, 45, 90};
  return v;
}

const std::vector<Scalar>* yaw_set_for_pitch(Scalar pitch) {
  if (pitch == 0.0 || pitch == 15.0 || pitch == -15.0) return &yaw_set_fine();
  if (pitch == 30.0 || pitch == -30.0) return &yaw_set_mid();
  if (pitch == 45.0) return &yaw_set_top();
  return nullptr;
}

[[noreturn]] void row_error(std::size_t row, const std::string& msg) {
  fail_validation("manifest", "row " + std::to_string(row) + ": " + msg);
}

Scalar require_number(const json& obj, const char* key, std::size_t row) {
  if (!obj.contains(key)) row_error(row, std::string("missing field '") + key + "'");
  const json& v = obj.at(key);
  if (!v.is_number()) row_error(row, std::string("field '") + key + "' is not a number");
  return v.get<Scalar>();
}

std::string require_string(const json& obj, const char* key, std::size_t row) {
  if (!obj.contains(key)) row_error(row, std::string("missing field '") + key + "'");
  const json& v = obj.at(key);
  if (!v.is_string()) row_error(row, std::string("field '") + key + "' is not a string");
  return v.get<std::string>();
}

}  // namespace

bool pose_in_taxonomy(Scalar yaw_deg, Scalar pitch_deg) {
  const auto* yaws = yaw_set_for_pitch(pitch_deg);
  if (!yaws) return false;
  return std::find(yaws->begin(), yaws->end(), yaw_deg) != yaws->end();
}

std::vector<Scalar> taxonomy_yaw_magnitudes(Scalar pitch_deg) {
  const auto* yaws = yaw_set_for_pitch(pitch_deg);
  if (!yaws) return {};
  std::set<Scalar> mags;
  for (Scalar y : *yaws) mags.insert(std::abs(y));
  return std::vector<Scalar>(mags.begin(), mags.end());
}

std::vector<std::pair<Scalar, Scalar>> taxonomy_poses(bool include_top_pitch) {
  std::vector<std::pair<Scalar, Scalar>> out;
  const std::vector<Scalar> pitches = include_top_pitch
                                          ? std::vector<Scalar>{45, 30, 15, 0, -15, -30}
                                          : std::vector<Scalar>{30, 15, 0, -15, -30};
  for (Scalar p : pitches)
    for (Scalar y : *yaw_set_for_pitch(p)) out.emplace_back(y, p);
  return out;
}

std::vector<ImageRecord> load_manifest(const std::string& path, ManifestMode mode) {
  std::ifstream in(path);
  if (!in) fail_validation("manifest", "cannot open " + path);

  std::vector<ImageRecord> records;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;

    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::exception& e) {
      row_error(row, std::string("invalid JSON: ") + e.what());
    }
    if (!obj.is_object()) row_error(row, "line is not a JSON object");

    ImageRecord rec;
    rec.image_ref = require_string(obj, "image_ref", row);

    if (!obj.contains("subject_id")) row_error(row, "missing field 'subject_id'");
    if (!obj.at("subject_id").is_number_integer())
      row_error(row, "field 'subject_id' is not an integer");
    rec.subject_id = obj.at("subject_id").get<int>();
    if (rec.subject_id < 0) row_error(row, "field 'subject_id' is negative");

    rec.yaw_deg = require_number(obj, "yaw_deg", row);
    rec.pitch_deg = require_number(obj, "pitch_deg", row);
    if (!std::isfinite(rec.yaw_deg) || rec.yaw_deg < -90.0 || rec.yaw_deg > 90.0)
      row_error(row, "field 'yaw_deg' outside [-90, 90]");
    if (!std::isfinite(rec.pitch_deg)) row_error(row, "field 'pitch_deg' is not finite");

    rec.attribute = require_string(obj, "attribute", row);
    if (std::find(kAttributes.begin(), kAttributes.end(), rec.attribute) == kAttributes.end())
      row_error(row, "field 'attribute' has unknown value '" + rec.attribute + "'");

    rec.illumination = require_string(obj, "illumination", row);
    if (std::find(kIlluminations.begin(), kIlluminations.end(), rec.illumination) ==
        kIlluminations.end())
      row_error(row, "field 'illumination' has unknown value '" + rec.illumination + "'");

    if (!obj.contains("landmarks")) row_error(row, "missing field 'landmarks'");
    const json& lms = obj.at("landmarks");
    if (!lms.is_array() || lms.size() != 5)
      row_error(row, "field 'landmarks' must be an array of 5 points");
    for (int i = 0; i < 5; ++i) {
      const json& pt = lms[static_cast<std::size_t>(i)];
      if (!pt.is_array() || pt.size() != 2 || !pt[0].is_number() || !pt[1].is_number())
        row_error(row, "field 'landmarks' entry " + std::to_string(i) + " is not an [x, y] pair");
      rec.landmarks(i, 0) = pt[0].get<Scalar>();
      rec.landmarks(i, 1) = pt[1].get<Scalar>();
      if (!std::isfinite(rec.landmarks(i, 0)) || !std::isfinite(rec.landmarks(i, 1)))
        row_error(row, "field 'landmarks' entry " + std::to_string(i) + " is not finite");
    }

    if (obj.contains("mask_ref")) {
      if (!obj.at("mask_ref").is_string()) row_error(row, "field 'mask_ref' is not a string");
      rec.mask_ref = obj.at("mask_ref").get<std::string>();
    }

    if (mode == ManifestMode::strict && !pose_in_taxonomy(rec.yaw_deg, rec.pitch_deg)) {
      std::ostringstream os;
      os << "pose (yaw " << rec.yaw_deg << ", pitch " << rec.pitch_deg
         << ") not in the pose taxonomy";
      row_error(row, os.str());
    }

    records.push_back(std::move(rec));
  }
  return records;
}

void write_manifest(const std::string& path, const std::vector<ImageRecord>& records) {
  std::ofstream out(path);
  if (!out) fail_runtime("manifest", "cannot write " + path);
  for (const ImageRecord& r : records) {
    json obj;
    obj["image_ref"] = r.image_ref;
    obj["subject_id"] = r.subject_id;
    obj["yaw_deg"] = r.yaw_deg;
    obj["pitch_deg"] = r.pitch_deg;
    obj["attribute"] = r.attribute;
    obj["illumination"] = r.illumination;
    json lms = json::array();
    for (int i = 0; i < 5; ++i) lms.push_back({r.landmarks(i, 0), r.landmarks(i, 1)});
    obj["landmarks"] = lms;
    if (!r.mask_ref.empty()) obj["mask_ref"] = r.mask_ref;
    out << obj.dump() << "\n";
  }
  if (!out) fail_runtime("manifest", "short write to " + path);
}

PoseBin pose_bin(const ImageRecord& record) {
  return PoseBin{std::abs(record.yaw_deg), record.pitch_deg};
}

ProtocolSplit build_protocol(const std::vector<ImageRecord>& records,
                             int train_subject_count, std::uint64_t seed) {
  if (train_subject_count <= 0)
    fail_validation("protocol", "train_subject_count must be positive");

  std::set<int> subject_set;
  for (const ImageRecord& r : records) subject_set.insert(r.subject_id);
  std::vector<int> subjects(subject_set.begin(), subject_set.end());  // sorted

  if (subjects.size() < static_cast<std::size_t>(train_subject_count) + 1)
    fail_validation("protocol",
                    "need at least " + std::to_string(train_subject_count + 1) +
                        " distinct subjects, manifest has " + std::to_string(subjects.size()));

  Rng rng(seed);
  rng.shuffle(subjects);

  ProtocolSplit split;
  split.train_subjects.assign(subjects.begin(), subjects.begin() + train_subject_count);
  split.test_subjects.assign(subjects.begin() + train_subject_count, subjects.end());
  std::sort(split.train_subjects.begin(), split.train_subjects.end());
  std::sort(split.test_subjects.begin(), split.test_subjects.end());

  const std::set<int> train_set(split.train_subjects.begin(), split.train_subjects.end());

  std::map<int, std::vector<std::size_t>> gallery_candidates;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const ImageRecord& r = records[i];
    if (train_set.count(r.subject_id)) {
      split.train.push_back(i);
      continue;
    }
    if (!r.is_frontal()) split.probes.push_back(i);
    if (r.is_frontal() && r.attribute == "neutral" && r.illumination == "above")
      gallery_candidates[r.subject_id].push_back(i);
  }

  for (int sid : split.test_subjects) {
    auto it = gallery_candidates.find(sid);
    if (it == gallery_candidates.end())
      fail_validation("protocol", "test subject " + std::to_string(sid) +
                                      " lacks its gallery record (frontal, neutral, above)");
    if (it->second.size() > 1)
      fail_validation("protocol", "test subject " + std::to_string(sid) +
                                      " has multiple gallery candidates");
    split.gallery.push_back(it->second.front());
  }
  return split;
}

std::vector<ImageRecord> select_records(const std::vector<ImageRecord>& records,
                                        const std::vector<std::size_t>& idx) {
  std::vector<ImageRecord> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(records.at(i));
  return out;
}

Landmarks5 canonical_template(int out_size) {
  Landmarks5 t;
  // clang-format off
  t << 38.3, 51.7,
       89.7, 51.5,
       64.0, 71.7,
       46.6, 92.4,
       81.4, 92.2;
  // clang-format on
  return t * (static_cast<Scalar>(out_size) / 128.0);
}

Eigen::Matrix<Scalar, 3, 3> fit_similarity(const Landmarks5& from, const Landmarks5& to) {
  // Degeneracy check: if the centered source points have (near-)zero spread
  // off their principal axis, the similarity fit is ill-posed.
  Eigen::Matrix<Scalar, 5, 2> centered = from.rowwise() - from.colwise().mean();
  Eigen::JacobiSVD<Eigen::Matrix<Scalar, 5, 2>> svd(centered);
  const Scalar s0 = svd.singularValues()(0);
  const Scalar s1 = svd.singularValues()(1);
  if (s0 <= 0.0 || s1 <= 1e-6 * s0)
    fail_validation("align", "degenerate landmarks (collinear within tolerance)");

  const Eigen::Matrix<Scalar, 2, 5> src = from.transpose();
  const Eigen::Matrix<Scalar, 2, 5> dst = to.transpose();
  return Eigen::umeyama(src, dst, true);
}

Scalar sample_bilinear(const Tensor& t, int c, Scalar x, Scalar y, Scalar fill) {
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const Scalar fx = x - x0;
  const Scalar fy = y - y0;
  auto at = [&](int yy, int xx) -> Scalar {
    if (xx < 0 || xx >= t.width || yy < 0 || yy >= t.height) return fill;
    return t(c, yy, xx);
  };
  const Scalar v00 = at(y0, x0);
  const Scalar v01 = at(y0, x0 + 1);
  const Scalar v10 = at(y0 + 1, x0);
  const Scalar v11 = at(y0 + 1, x0 + 1);
  const Scalar top = v00 + (v01 - v00) * fx;
  const Scalar bot = v10 + (v11 - v10) * fx;
  return top + (bot - top) * fy;
}

Tensor align_face(const Tensor& raw, const Landmarks5& landmarks, int out_size) {
  if (out_size != 32 && out_size != 64 && out_size != 128 && out_size != 256)
    fail_validation("align",
                    "out_size must be one of 32, 64, 128, 256, got " + std::to_string(out_size));
  if (raw.channels != 1 && raw.channels != 3)
    fail_validation("align", "image must have 1 or 3 channels");
  for (int i = 0; i < 5; ++i) {
    const Scalar x = landmarks(i, 0), y = landmarks(i, 1);
    if (!(x >= 0.0 && x <= raw.width - 1.0 && y >= 0.0 && y <= raw.height - 1.0))
      fail_validation("align", "landmark " + std::to_string(i) + " outside image bounds");
  }

  const Eigen::Matrix<Scalar, 3, 3> T = fit_similarity(landmarks, canonical_template(out_size));
  const Eigen::Matrix<Scalar, 3, 3> Tinv = T.inverse();

  Tensor out(raw.channels, out_size, out_size);
  for (int yy = 0; yy < out_size; ++yy) {
    for (int xx = 0; xx < out_size; ++xx) {
      const Scalar sx = Tinv(0, 0) * xx + Tinv(0, 1) * yy + Tinv(0, 2);
      const Scalar sy = Tinv(1, 0) * xx + Tinv(1, 1) * yy + Tinv(1, 2);
      for (int c = 0; c < raw.channels; ++c)
        out(c, yy, xx) = sample_bilinear(raw, c, sx, sy, 0.0);
    }
  }
  return out;
}

Landmarks5 align_landmarks(const Landmarks5& landmarks, int out_size) {
  const Eigen::Matrix<Scalar, 3, 3> T =
      fit_similarity(landmarks, canonical_template(out_size));
  Landmarks5 out;
  for (int i = 0; i < 5; ++i) {
    out(i, 0) = T(0, 0) * landmarks(i, 0) + T(0, 1) * landmarks(i, 1) + T(0, 2);
    out(i, 1) = T(1, 0) * landmarks(i, 0) + T(1, 1) * landmarks(i, 1) + T(1, 2);
  }
  return out;
}

void write_protocol_dir(const std::string& dir, const ProtocolDir& protocol) {
  const std::filesystem::path root(dir);
  std::filesystem::create_directories(root);
  write_manifest((root / "train.jsonl").string(), protocol.train);
  write_manifest((root / "probes.jsonl").string(), protocol.probes);
  write_manifest((root / "gallery.jsonl").string(), protocol.gallery);

  json meta;
  meta["seed"] = protocol.seed;
  meta["train_subject_count"] = protocol.train_subject_count;
  meta["image_root"] = protocol.image_root;
  meta["counts"] = {{"train", protocol.train.size()},
                    {"probes", protocol.probes.size()},
                    {"gallery", protocol.gallery.size()}};
  const std::string path = (root / "protocol.json").string();
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail_runtime("protocol", "cannot open for writing: " + path);
  out << meta.dump(2) << "\n";
  out.flush();
  if (!out) fail_runtime("protocol", "write failed: " + path);
}

ProtocolDir read_protocol_dir(const std::string& dir) {
  const std::filesystem::path root(dir);
  const std::string meta_path = (root / "protocol.json").string();
  std::ifstream in(meta_path);
  if (!in) fail_validation("protocol", "cannot open: " + meta_path);
  json meta;
  try {
    in >> meta;
  } catch (const json::exception& e) {
    fail_validation("protocol", meta_path + ": " + e.what());
  }

  ProtocolDir protocol;
  try {
    protocol.seed = meta.at("seed").get<std::uint64_t>();
    protocol.train_subject_count = meta.at("train_subject_count").get<int>();
    protocol.image_root = meta.at("image_root").get<std::string>();
  } catch (const json::exception& e) {
    fail_validation("protocol", meta_path + ": " + e.what());
  }
  protocol.train = load_manifest((root / "train.jsonl").string(), ManifestMode::lax);
  protocol.probes = load_manifest((root / "probes.jsonl").string(), ManifestMode::lax);
  protocol.gallery = load_manifest((root / "gallery.jsonl").string(), ManifestMode::lax);

  if (meta.contains("counts")) {
    const auto want_train = meta["counts"].value("train", protocol.train.size());
    const auto want_probes = meta["counts"].value("probes", protocol.probes.size());
    const auto want_gallery = meta["counts"].value("gallery", protocol.gallery.size());
    if (want_train != protocol.train.size() || want_probes != protocol.probes.size() ||
        want_gallery != protocol.gallery.size())
      fail_validation("protocol", dir + ": manifest row counts disagree with protocol.json");
  }
  return protocol;
}

}  // namespace frontal
