#include <doctest.h>

#include "frontal/dataset.hpp"
#include "frontal/toygen.hpp"

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

using namespace frontal;

namespace {

std::string fresh_dir(const std::string& tag) {
  static int counter = 0;
  const auto dir = std::filesystem::temp_directory_path() /
                   ("frontal-test-" + tag + "-" + std::to_string(::getpid()) + "-" +
                    std::to_string(counter++));
  std::filesystem::create_directories(dir);
  return dir.string();
}

ImageRecord make_record(int subject, Scalar yaw, Scalar pitch, const std::string& attr,
                        const std::string& illum) {
  ImageRecord r;
  r.image_ref = "images/s" + std::to_string(subject) + ".ppm";
  r.subject_id = subject;
  r.yaw_deg = yaw;
  r.pitch_deg = pitch;
  r.attribute = attr;
  r.illumination = illum;
  r.landmarks = canonical_template(128);
  return r;
}

std::string error_text(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("pose taxonomy has 62 entries, 57 without the top pitch") {
  const auto all = taxonomy_poses(true);
  const auto protocol = taxonomy_poses(false);
  CHECK(all.size() == 62);
  CHECK(protocol.size() == 57);

  std::set<std::pair<Scalar, Scalar>> unique(all.begin(), all.end());
  CHECK(unique.size() == 62);
  for (const auto& [yaw, pitch] : all) CHECK(pose_in_taxonomy(yaw, pitch));
  for (const auto& [yaw, pitch] : protocol) CHECK(pitch != 45.0);
}

TEST_CASE("yaw sets per pitch level match the camera-array geometry") {
  CHECK(taxonomy_yaw_magnitudes(45.0) == std::vector<Scalar>{0, 45, 90});
  CHECK(taxonomy_yaw_magnitudes(30.0) == std::vector<Scalar>{0, 22.5, 45, 67.5, 90});
  CHECK(taxonomy_yaw_magnitudes(-30.0) == std::vector<Scalar>{0, 22.5, 45, 67.5, 90});
  CHECK(taxonomy_yaw_magnitudes(0.0) ==
        std::vector<Scalar>{0, 15, 30, 45, 60, 75, 90});
  CHECK(taxonomy_yaw_magnitudes(15.0) == taxonomy_yaw_magnitudes(-15.0));
  CHECK(taxonomy_yaw_magnitudes(10.0).empty());
  CHECK(taxonomy_yaw_magnitudes(-45.0).empty());

  CHECK(pose_in_taxonomy(45.0, 45.0));
  CHECK(pose_in_taxonomy(-90.0, 30.0));
  CHECK(pose_in_taxonomy(22.5, -30.0));
  CHECK(pose_in_taxonomy(0.0, 0.0));
  CHECK_FALSE(pose_in_taxonomy(22.5, 45.0));
  CHECK_FALSE(pose_in_taxonomy(22.5, 0.0));
  CHECK_FALSE(pose_in_taxonomy(15.0, 30.0));
  CHECK_FALSE(pose_in_taxonomy(0.0, -45.0));
}

TEST_CASE("manifest round trip preserves every field exactly") {
  const std::string dir = fresh_dir("manifest");
  std::vector<ImageRecord> records;
  ImageRecord a = make_record(3, 22.5, -30.0, "glasses", "front_below");
  a.landmarks(2, 0) = 63.123456789012;
  a.mask_ref = "masks/a.ppm";
  records.push_back(a);
  records.push_back(make_record(4, 0.0, 0.0, "neutral", "above"));

  const std::string path = dir + "/m.jsonl";
  write_manifest(path, records);
  const std::vector<ImageRecord> back = load_manifest(path, ManifestMode::strict);

  REQUIRE(back.size() == 2);
  CHECK(back[0].image_ref == a.image_ref);
  CHECK(back[0].subject_id == 3);
  CHECK(back[0].yaw_deg == 22.5);
  CHECK(back[0].pitch_deg == -30.0);
  CHECK(back[0].attribute == "glasses");
  CHECK(back[0].illumination == "front_below");
  CHECK(back[0].landmarks == a.landmarks);  // bit-exact through JSON
  CHECK(back[0].mask_ref == "masks/a.ppm");
  CHECK(back[1].mask_ref.empty());
  CHECK(back[1].is_frontal());
  CHECK_FALSE(back[0].is_frontal());
  std::filesystem::remove_all(dir);
}

TEST_CASE("manifest errors name the offending row and field") {
  const std::string dir = fresh_dir("manifest-err");
  const std::string path = dir + "/m.jsonl";

  auto write_lines = [&](const std::string& body) {
    std::ofstream out(path);
    out << body;
  };
  const std::string good =
      R"({"image_ref":"x.ppm","subject_id":1,"yaw_deg":0,"pitch_deg":0,"attribute":"neutral",)"
      R"("illumination":"above","landmarks":[[1,1],[2,1],[1.5,2],[1.2,3],[1.8,3]]})";

  write_lines(good + "\n{not json\n");
  std::string msg = error_text([&] { load_manifest(path, ManifestMode::lax); });
  CHECK(msg.find("row 2") != std::string::npos);
  CHECK(msg.find("invalid JSON") != std::string::npos);

  write_lines(R"({"image_ref":"x.ppm","subject_id":1})" "\n");
  msg = error_text([&] { load_manifest(path, ManifestMode::lax); });
  CHECK(msg.find("row 1") != std::string::npos);
  CHECK(msg.find("yaw_deg") != std::string::npos);

  std::string bad_attr = good;
  const auto pos = bad_attr.find("neutral");
  bad_attr.replace(pos, 7, "scowl42");
  write_lines(bad_attr + "\n");
  msg = error_text([&] { load_manifest(path, ManifestMode::lax); });
  CHECK(msg.find("attribute") != std::string::npos);
  CHECK(msg.find("scowl42") != std::string::npos);

  // Off-taxonomy pose: rejected in strict mode only.
  std::string off = good;
  off.replace(off.find("\"yaw_deg\":0"), 11, "\"yaw_deg\":10");
  write_lines(off + "\n");
  CHECK(load_manifest(path, ManifestMode::lax).size() == 1);
  msg = error_text([&] { load_manifest(path, ManifestMode::strict); });
  CHECK(msg.find("taxonomy") != std::string::npos);

  // Blank lines are skipped, rows keep their physical line numbers.
  write_lines("\n" + good + "\n\n{bad\n");
  msg = error_text([&] { load_manifest(path, ManifestMode::lax); });
  CHECK(msg.find("row 4") != std::string::npos);

  std::filesystem::remove_all(dir);
}

TEST_CASE("pose bins merge yaw signs and keep pitch signs") {
  const PoseBin a = pose_bin(make_record(1, -67.5, 30.0, "neutral", "above"));
  const PoseBin b = pose_bin(make_record(1, 67.5, 30.0, "neutral", "above"));
  CHECK(a == b);
  CHECK(a.abs_yaw_deg == 67.5);
  CHECK(a.pitch_deg == 30.0);
  const PoseBin c = pose_bin(make_record(1, 67.5, -30.0, "neutral", "above"));
  CHECK_FALSE(a == c);
}

TEST_CASE("canonical template holds the stated 128-scale landmarks and scales linearly") {
  const Landmarks5 t = canonical_template(128);
  CHECK(t(0, 0) == doctest::Approx(38.3).epsilon(1e-12));
  CHECK(t(0, 1) == doctest::Approx(51.7).epsilon(1e-12));
  CHECK(t(1, 0) == doctest::Approx(89.7).epsilon(1e-12));
  CHECK(t(1, 1) == doctest::Approx(51.5).epsilon(1e-12));
  CHECK(t(2, 0) == doctest::Approx(64.0).epsilon(1e-12));
  CHECK(t(2, 1) == doctest::Approx(71.7).epsilon(1e-12));
  CHECK(t(3, 0) == doctest::Approx(46.6).epsilon(1e-12));
  CHECK(t(3, 1) == doctest::Approx(92.4).epsilon(1e-12));
  CHECK(t(4, 0) == doctest::Approx(81.4).epsilon(1e-12));
  CHECK(t(4, 1) == doctest::Approx(92.2).epsilon(1e-12));

  CHECK((canonical_template(256) - 2.0 * t).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((canonical_template(64) - 0.5 * t).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((canonical_template(32) - 0.25 * t).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("similarity fit recovers rotation, scale and translation") {
  const Landmarks5 base = canonical_template(128);
  Rng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const Scalar theta = rng.uniform(-0.6, 0.6);
    const Scalar scale = rng.uniform(0.6, 1.6);
    const Scalar tx = rng.uniform(-20.0, 40.0), ty = rng.uniform(-20.0, 40.0);
    Landmarks5 moved;
    for (int i = 0; i < 5; ++i) {
      const Scalar x = base(i, 0), y = base(i, 1);
      moved(i, 0) = scale * (std::cos(theta) * x - std::sin(theta) * y) + tx;
      moved(i, 1) = scale * (std::sin(theta) * x + std::cos(theta) * y) + ty;
    }
    const Eigen::Matrix<Scalar, 3, 3> T = fit_similarity(moved, base);
    for (int i = 0; i < 5; ++i) {
      const Scalar mx = T(0, 0) * moved(i, 0) + T(0, 1) * moved(i, 1) + T(0, 2);
      const Scalar my = T(1, 0) * moved(i, 0) + T(1, 1) * moved(i, 1) + T(1, 2);
      CHECK(std::abs(mx - base(i, 0)) < 1e-9);
      CHECK(std::abs(my - base(i, 1)) < 1e-9);
    }
    // The linear part is a scaled rotation: equal diagonal, opposite
    // off-diagonal entries.
    CHECK(std::abs(T(0, 0) - T(1, 1)) < 1e-9);
    CHECK(std::abs(T(0, 1) + T(1, 0)) < 1e-9);
  }
}

TEST_CASE("similarity fit rejects collinear landmarks") {
  Landmarks5 line;
  for (int i = 0; i < 5; ++i) {
    line(i, 0) = static_cast<Scalar>(10 + 7 * i);
    line(i, 1) = static_cast<Scalar>(20 + 3 * i);
  }
  CHECK_THROWS_AS(fit_similarity(line, canonical_template(128)), Error);
}

TEST_CASE("alignment with template landmarks reproduces the input") {
  Rng rng(12);
  Tensor img(3, 128, 128);
  for (Eigen::Index i = 0; i < img.data.size(); ++i) img.data[i] = rng.uniform(-1.0, 1.0);
  const Tensor aligned = align_face(img, canonical_template(128), 128);
  CHECK(aligned.same_shape(img));
  CHECK((aligned.data - img.data).abs().maxCoeff() < 1e-6);
}

TEST_CASE("alignment undoes an in-plane rotation of the source image") {
  // A smooth image so resampling differences stay small.
  const int n = 160;
  Tensor img(3, n, n);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x)
        img(c, y, x) = 0.6 * std::sin(0.07 * x + 0.5 * c) * std::cos(0.05 * y - 0.3 * c);

  Landmarks5 marks = canonical_template(128);
  marks.array() += 16.0;  // centered in the larger canvas

  // Quarter-turn counterclockwise: (x, y) -> (y, n-1-x).
  Tensor rot(3, n, n);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) rot(c, n - 1 - x, y) = img(c, y, x);
  Landmarks5 rot_marks;
  for (int i = 0; i < 5; ++i) {
    rot_marks(i, 0) = marks(i, 1);
    rot_marks(i, 1) = static_cast<Scalar>(n - 1) - marks(i, 0);
  }

  const Tensor a = align_face(img, marks, 128);
  const Tensor b = align_face(rot, rot_marks, 128);
  const Scalar mean_diff = (a.data - b.data).abs().mean();
  CHECK(mean_diff < 0.02);

  // The source landmarks land on the canonical template after alignment.
  const Landmarks5 mapped = align_landmarks(rot_marks, 128);
  CHECK((mapped - canonical_template(128)).cwiseAbs().maxCoeff() < 0.5);
}

TEST_CASE("alignment validates sizes, channels and landmark bounds") {
  const Tensor img = Tensor::zeros(3, 128, 128);
  const Landmarks5 t = canonical_template(128);
  CHECK_THROWS_AS(align_face(img, t, 100), Error);
  CHECK_THROWS_AS(align_face(Tensor::zeros(2, 128, 128), t, 128), Error);

  Landmarks5 outside = t;
  outside(0, 0) = -5.0;
  const std::string msg = error_text([&] { align_face(img, outside, 128); });
  CHECK(msg.find("landmark 0") != std::string::npos);

  // All four supported sizes work.
  for (int s : {32, 64, 128, 256}) {
    const Tensor out = align_face(img, t, s);
    CHECK(out.channels == 3);
    CHECK(out.height == s);
    CHECK(out.width == s);
  }
}

TEST_CASE("protocol split enforces subject disjointness and gallery composition") {
  std::vector<ImageRecord> records;
  for (int s = 1; s <= 6; ++s) {
    for (const std::string& illum : {"above", "front"}) {
      records.push_back(make_record(s, 0.0, 0.0, "neutral", illum));
      records.push_back(make_record(s, 45.0, 0.0, "neutral", illum));
      records.push_back(make_record(s, -30.0, 15.0, "neutral", illum));
    }
  }

  const ProtocolSplit split = build_protocol(records, 4, 99);
  CHECK(split.train_subjects.size() == 4);
  CHECK(split.test_subjects.size() == 2);
  for (int s : split.train_subjects)
    CHECK(std::find(split.test_subjects.begin(), split.test_subjects.end(), s) ==
          split.test_subjects.end());
  CHECK(std::is_sorted(split.train_subjects.begin(), split.train_subjects.end()));
  CHECK(std::is_sorted(split.test_subjects.begin(), split.test_subjects.end()));

  CHECK(split.train.size() == 4 * 6);
  CHECK(split.probes.size() == 2 * 4);   // two non-frontal poses x two illums
  CHECK(split.gallery.size() == 2);
  for (std::size_t i : split.gallery) {
    CHECK(records[i].is_frontal());
    CHECK(records[i].attribute == "neutral");
    CHECK(records[i].illumination == "above");
  }
  for (std::size_t i : split.probes) CHECK_FALSE(records[i].is_frontal());

  // Seeded determinism.
  const ProtocolSplit again = build_protocol(records, 4, 99);
  CHECK(again.train_subjects == split.train_subjects);
  CHECK(again.probes == split.probes);
  const ProtocolSplit other = build_protocol(records, 4, 100);
  CHECK(other.train_subjects != split.train_subjects);
}

TEST_CASE("protocol split errors are specific") {
  std::vector<ImageRecord> no_gallery;
  for (int s = 1; s <= 3; ++s) {
    no_gallery.push_back(make_record(s, 45.0, 0.0, "neutral", "above"));
    no_gallery.push_back(make_record(s, 0.0, 0.0, "smile", "above"));  // wrong attribute
  }
  const std::string msg = error_text([&] { build_protocol(no_gallery, 2, 1); });
  CHECK(msg.find("lacks its gallery record") != std::string::npos);
  CHECK(msg.find("test subject") != std::string::npos);

  std::vector<ImageRecord> dup;
  for (int s = 1; s <= 3; ++s) {
    dup.push_back(make_record(s, 0.0, 0.0, "neutral", "above"));
    dup.push_back(make_record(s, 0.0, 0.0, "neutral", "above"));
    dup.push_back(make_record(s, 45.0, 0.0, "neutral", "above"));
  }
  CHECK(error_text([&] { build_protocol(dup, 2, 1); }).find("multiple gallery") !=
        std::string::npos);

  std::vector<ImageRecord> few = {make_record(1, 0.0, 0.0, "neutral", "above"),
                                  make_record(2, 0.0, 0.0, "neutral", "above")};
  CHECK(error_text([&] { build_protocol(few, 2, 1); }).find("distinct subjects") !=
        std::string::npos);
  CHECK_THROWS_AS(build_protocol(few, 0, 1), Error);
}

TEST_CASE("protocol directory round trips and detects tampering") {
  std::vector<ImageRecord> records;
  for (int s = 1; s <= 5; ++s)
    for (Scalar yaw : {0.0, 30.0, -60.0})
      records.push_back(make_record(s, yaw, 0.0, "neutral", "above"));
  const ProtocolSplit split = build_protocol(records, 3, 7);

  ProtocolDir proto;
  proto.seed = 7;
  proto.train_subject_count = 3;
  proto.image_root = "/data/images";
  proto.train = select_records(records, split.train);
  proto.probes = select_records(records, split.probes);
  proto.gallery = select_records(records, split.gallery);

  const std::string dir = fresh_dir("proto");
  write_protocol_dir(dir, proto);
  const ProtocolDir back = read_protocol_dir(dir);
  CHECK(back.seed == 7);
  CHECK(back.train_subject_count == 3);
  CHECK(back.image_root == "/data/images");
  CHECK(back.train.size() == proto.train.size());
  CHECK(back.probes.size() == proto.probes.size());
  CHECK(back.gallery.size() == proto.gallery.size());
  CHECK(back.probes[0].subject_id == proto.probes[0].subject_id);
  CHECK(back.probes[0].landmarks == proto.probes[0].landmarks);

  // A truncated manifest no longer matches the recorded counts.
  {
    std::ofstream out(dir + "/probes.jsonl", std::ios::trunc);
    out << "";
  }
  const std::string msg = error_text([&] { read_protocol_dir(dir); });
  CHECK(msg.find("counts disagree") != std::string::npos);
  std::filesystem::remove_all(dir);
}

TEST_CASE("full-scale corpus and split reproduce the published sizes") {
  ToySpec spec;
  spec.n_identities = 229;
  spec.image_size = 32;
  spec.seed = 1;
  spec.poses = taxonomy_poses(false);  // the 57 protocol poses
  spec.attributes = {kAttributes.begin(), kAttributes.end()};
  spec.illuminations = {kIlluminations.begin(), kIlluminations.end()};

  const std::vector<ImageRecord> records = make_records(spec);
  CHECK(records.size() == 365484);  // 229 x 57 x 4 x 7

  const ProtocolSplit split = build_protocol(records, 162, 20260815);
  CHECK(split.train_subjects.size() == 162);
  CHECK(split.test_subjects.size() == 67);
  CHECK(split.train.size() == 258552);   // 162 x 57 x 4 x 7
  CHECK(split.probes.size() == 105056);  // 67 x 56 x 4 x 7
  CHECK(split.gallery.size() == 67);
}
