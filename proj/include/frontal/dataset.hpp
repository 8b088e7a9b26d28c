#pragma once

#include "frontal/common.hpp"
#include "frontal/tensor.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace frontal {

// One manifest row. yaw/pitch are head rotation angles in degrees; the five
// landmarks are pixel coordinates in the referenced image.
struct ImageRecord {
  std::string image_ref;
  int subject_id = 0;
  Scalar yaw_deg = 0.0;
  Scalar pitch_deg = 0.0;
  std::string attribute;     // one of kAttributes
  std::string illumination;  // one of kIlluminations
  Landmarks5 landmarks = Landmarks5::Zero();
  std::string mask_ref;  // optional reference to a precomputed mask image ("" = none)

  bool is_frontal() const { return yaw_deg == 0.0 && pitch_deg == 0.0; }
};

inline constexpr std::array<const char*, 4> kAttributes = {
    "neutral", "glasses", "smile", "surprise"};
inline constexpr std::array<const char*, 7> kIlluminations = {
    "above", "front", "front_above", "front_below", "behind", "left", "right"};

// The 62-entry (yaw, pitch) taxonomy: pitch +45 pairs with yaws {0, +-45, +-90};
// pitch +-30 with {0, +-22.5, +-45, +-67.5, +-90}; pitch -15/0/+15 with
// 15-degree-spaced yaws from -90 to +90.
bool pose_in_taxonomy(Scalar yaw_deg, Scalar pitch_deg);

// Non-negative yaw magnitudes allowed at a pitch level (empty if the pitch is
// not in the taxonomy).
std::vector<Scalar> taxonomy_yaw_magnitudes(Scalar pitch_deg);

// All (yaw, pitch) pairs; include_top_pitch=false drops the five +45-pitch
// poses, leaving the 57 poses the training/evaluation protocol uses.
std::vector<std::pair<Scalar, Scalar>> taxonomy_poses(bool include_top_pitch);

enum class ManifestMode { strict, lax };

// JSON-lines manifest ingestion. strict mode additionally requires every
// (yaw, pitch) to belong to the taxonomy. Errors name the row and field.
std::vector<ImageRecord> load_manifest(const std::string& path, ManifestMode mode);
void write_manifest(const std::string& path, const std::vector<ImageRecord>& records);

// Pose bin used by evaluation reports: +yaw and -yaw merge, pitch keeps sign.
struct PoseBin {
  Scalar abs_yaw_deg = 0.0;
  Scalar pitch_deg = 0.0;
  bool operator==(const PoseBin& o) const {
    return abs_yaw_deg == o.abs_yaw_deg && pitch_deg == o.pitch_deg;
  }
};

PoseBin pose_bin(const ImageRecord& record);

// Train/test split. Vectors hold indices into the record list the split was
// built from; train/test subject id lists are sorted ascending.
struct ProtocolSplit {
  std::vector<int> train_subjects;
  std::vector<int> test_subjects;
  std::vector<std::size_t> train;
  std::vector<std::size_t> probes;
  std::vector<std::size_t> gallery;
};

// Seeded split: shuffle the sorted subject ids (Fisher-Yates), first
// train_subject_count become train subjects, the rest test subjects.
// Gallery = the single (yaw 0, pitch 0, neutral, above) record per test
// subject; probes = every test record whose pose is not (0, 0).
ProtocolSplit build_protocol(const std::vector<ImageRecord>& records,
                             int train_subject_count, std::uint64_t seed);

std::vector<ImageRecord> select_records(const std::vector<ImageRecord>& records,
                                        const std::vector<std::size_t>& idx);

// Canonical five-point alignment template for a given output size; stated for
// 128 and scaled linearly otherwise.
Landmarks5 canonical_template(int out_size);

// Least-squares similarity transform (rotation + uniform scale + translation)
// mapping `from` points onto `to` points, returned as a 3x3 homogeneous matrix.
Eigen::Matrix<Scalar, 3, 3> fit_similarity(const Landmarks5& from, const Landmarks5& to);

// Warp `raw` so its landmarks land on the canonical template, resampling
// bilinearly to out_size x out_size (out_size in {32, 64, 128, 256}).
Tensor align_face(const Tensor& raw, const Landmarks5& landmarks, int out_size);

// Where the raw landmarks land in the aligned frame (approximately the
// canonical template, exactly when the pose is a pure similarity).
Landmarks5 align_landmarks(const Landmarks5& landmarks, int out_size);

// A protocol materialized on disk: protocol.json (seed, split sizes, image
// root) plus train.jsonl / probes.jsonl / gallery.jsonl manifests.
struct ProtocolDir {
  std::uint64_t seed = 0;
  int train_subject_count = 0;
  std::string image_root;  // directory image_refs resolve against
  std::vector<ImageRecord> train;
  std::vector<ImageRecord> probes;
  std::vector<ImageRecord> gallery;
};

void write_protocol_dir(const std::string& dir, const ProtocolDir& protocol);
ProtocolDir read_protocol_dir(const std::string& dir);

// Bilinear sample of channel c at real-valued coordinates; positions outside
// the canvas blend toward `fill`.
Scalar sample_bilinear(const Tensor& t, int c, Scalar x, Scalar y, Scalar fill);

}  // namespace frontal
