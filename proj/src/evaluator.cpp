#include "frontal/evaluator.hpp"

#include "frontal/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

namespace frontal {
namespace {

// Section/row/column ordering of the report: high |pitch| first, positive
// pitch before negative within a section, then |yaw| ascending.
struct BinOrder {
  bool operator()(const PoseBin& a, const PoseBin& b) const {
    const Scalar pa = std::abs(a.pitch_deg), pb = std::abs(b.pitch_deg);
    if (pa != pb) return pa > pb;
    if (a.pitch_deg != b.pitch_deg) return a.pitch_deg > b.pitch_deg;
    return a.abs_yaw_deg < b.abs_yaw_deg;
  }
};

std::string format_angle(Scalar deg) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", deg);
  return buf;
}

std::string format_pct(Scalar pct) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", pct);
  return buf;
}

void check_norms(const EmbeddingSet& set, const char* label) {
  for (Eigen::Index i = 0; i < set.features.rows(); ++i) {
    if (set.features.row(i).norm() <= 0.0)
      fail_validation("evaluation", std::string(label) + " embedding " + std::to_string(i) +
                                        " has zero norm");
    if (!set.features.row(i).allFinite())
      fail_validation("evaluation", std::string(label) + " embedding " + std::to_string(i) +
                                        " is not finite");
  }
}

}  // namespace

Scalar cosine_distance(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) fail_validation("evaluation", "embedding dimensions differ");
  const Scalar na = a.norm(), nb = b.norm();
  if (na <= 0.0 || nb <= 0.0) fail_validation("evaluation", "zero-norm embedding");
  return 1.0 - a.dot(b) / (na * nb);
}

Scalar round_percent_1dp(Scalar fraction) {
  return std::floor(fraction * 100.0 * 10.0 + 0.5) / 10.0;
}

Rank1Result rank1(const EmbeddingSet& probes_orig, const EmbeddingSet& probes_gen,
                  const EmbeddingSet& gallery_orig, const EmbeddingSet& gallery_gen,
                  FusionMode mode) {
  const auto n = static_cast<std::size_t>(probes_orig.features.rows());
  if (n == 0) fail_validation("evaluation", "no probes");
  if (probes_orig.ids.size() != n)
    fail_validation("evaluation", "probe id count does not match embedding rows");
  if (probes_orig.bins.size() != n)
    fail_validation("evaluation", "probe bin count does not match embedding rows");
  if (mode != FusionMode::original_only) {
    if (static_cast<std::size_t>(probes_gen.features.rows()) != n)
      fail_validation("evaluation", "original and generated probe sets differ in size");
    if (probes_gen.ids != probes_orig.ids)
      fail_validation("evaluation", "original and generated probe sets list different subjects");
    if (probes_gen.features.cols() != probes_orig.features.cols())
      fail_validation("evaluation", "original and generated embedding dimensions differ");
  }
  const auto g = static_cast<std::size_t>(gallery_orig.features.rows());
  if (g == 0) fail_validation("evaluation", "empty gallery");
  if (gallery_orig.ids.size() != g)
    fail_validation("evaluation", "gallery id count does not match embedding rows");
  if (gallery_orig.features.cols() != probes_orig.features.cols())
    fail_validation("evaluation", "gallery embedding dimension does not match probes");
  {
    std::set<int> unique(gallery_orig.ids.begin(), gallery_orig.ids.end());
    if (unique.size() != g)
      fail_validation("evaluation", "gallery must hold exactly one entry per subject");
  }
  if (mode != FusionMode::original_only) {
    if (static_cast<std::size_t>(gallery_gen.features.rows()) != g)
      fail_validation("evaluation", "original and generated gallery sets differ in size");
    if (gallery_gen.ids != gallery_orig.ids)
      fail_validation("evaluation",
                      "original and generated gallery sets list different subjects");
    if (gallery_gen.features.cols() != probes_orig.features.cols())
      fail_validation("evaluation", "generated gallery embedding dimension does not match probes");
  }
  check_norms(probes_orig, "probe");
  if (mode != FusionMode::original_only) check_norms(probes_gen, "generated probe");
  check_norms(gallery_orig, "gallery");
  if (mode != FusionMode::original_only) check_norms(gallery_gen, "generated gallery");

  // Scan galleries in ascending subject-id order so distance ties resolve to
  // the lowest id.
  std::vector<std::size_t> order(g);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return gallery_orig.ids[a] < gallery_orig.ids[b];
  });
  std::set<int> gallery_subjects(gallery_orig.ids.begin(), gallery_orig.ids.end());

  Rank1Result result;
  result.predicted.resize(n, 0);
  result.correct.assign(n, 0);
  std::map<PoseBin, BinCell, BinOrder> bins;

  for (std::size_t i = 0; i < n; ++i) {
    const Vec orig = probes_orig.features.row(i).transpose();
    Vec gen;
    if (mode != FusionMode::original_only) gen = probes_gen.features.row(i).transpose();

    Scalar best = 0.0;
    int best_id = 0;
    bool first = true;
    for (std::size_t k : order) {
      const auto row = static_cast<Eigen::Index>(k);
      Scalar d = 0.0;
      switch (mode) {
        case FusionMode::fused:
          d = 0.5 * (cosine_distance(orig, gallery_orig.features.row(row).transpose()) +
                     cosine_distance(gen, gallery_gen.features.row(row).transpose()));
          break;
        case FusionMode::original_only:
          d = cosine_distance(orig, gallery_orig.features.row(row).transpose());
          break;
        case FusionMode::generated_only:
          d = cosine_distance(gen, gallery_gen.features.row(row).transpose());
          break;
      }
      if (first || d < best) {
        best = d;
        best_id = gallery_orig.ids[k];
        first = false;
      }
    }

    result.predicted[i] = best_id;
    if (gallery_subjects.count(probes_orig.ids[i]) == 0) {
      result.missing.push_back(i);
      continue;
    }
    const bool ok = best_id == probes_orig.ids[i];
    result.correct[i] = ok ? 1 : 0;
    ++result.evaluated;
    if (ok) ++result.correct_count;
    BinCell& cell = bins[probes_orig.bins[i]];
    cell.abs_yaw_deg = probes_orig.bins[i].abs_yaw_deg;
    cell.pitch_deg = probes_orig.bins[i].pitch_deg;
    ++cell.total;
    if (ok) ++cell.correct;
  }

  result.overall = result.evaluated > 0
                       ? static_cast<Scalar>(result.correct_count) /
                             static_cast<Scalar>(result.evaluated)
                       : 0.0;
  result.bins.reserve(bins.size());
  for (const auto& [key, cell] : bins) result.bins.push_back(cell);
  return result;
}

std::string rank1_report_csv(const Rank1Result& result) {
  std::ostringstream out;
  out << "section,pitch,abs_yaw,total,correct,accuracy_percent\n";
  for (const BinCell& cell : result.bins) {
    const Scalar pct = round_percent_1dp(static_cast<Scalar>(cell.correct) /
                                         static_cast<Scalar>(cell.total));
    out << "bin," << format_angle(cell.pitch_deg) << "," << format_angle(cell.abs_yaw_deg) << ","
        << cell.total << "," << cell.correct << "," << format_pct(pct) << "\n";
  }
  out << "overall,,," << result.evaluated << "," << result.correct_count << ","
      << format_pct(round_percent_1dp(result.overall)) << "\n";
  out << "missing_gallery,,," << result.missing.size() << ",,\n";
  return out.str();
}

std::string rank1_report_grid(const Rank1Result& result) {
  // Group cells by |pitch| (sections), keep the BinOrder the result already
  // has: |pitch| desc, signed pitch desc, |yaw| asc.
  std::ostringstream out;
  std::size_t i = 0;
  while (i < result.bins.size()) {
    const Scalar pitch_mag = std::abs(result.bins[i].pitch_deg);
    std::size_t end = i;
    while (end < result.bins.size() && std::abs(result.bins[end].pitch_deg) == pitch_mag) ++end;

    std::vector<Scalar> yaws;
    std::vector<Scalar> pitches;
    for (std::size_t k = i; k < end; ++k) {
      if (std::find(yaws.begin(), yaws.end(), result.bins[k].abs_yaw_deg) == yaws.end())
        yaws.push_back(result.bins[k].abs_yaw_deg);
      if (std::find(pitches.begin(), pitches.end(), result.bins[k].pitch_deg) == pitches.end())
        pitches.push_back(result.bins[k].pitch_deg);
    }
    std::sort(yaws.begin(), yaws.end());
    std::sort(pitches.begin(), pitches.end(), std::greater<Scalar>());

    out << "pitch magnitude " << format_angle(pitch_mag) << "\n";
    out << "  pitch \\ |yaw| |";
    for (Scalar y : yaws) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), " %7s", format_angle(y).c_str());
      out << buf;
    }
    out << "\n";
    for (Scalar p : pitches) {
      char buf[48];
      std::snprintf(buf, sizeof(buf), "  %+13.1f |", p);
      out << buf;
      for (Scalar y : yaws) {
        const BinCell* cell = nullptr;
        for (std::size_t k = i; k < end; ++k)
          if (result.bins[k].pitch_deg == p && result.bins[k].abs_yaw_deg == y)
            cell = &result.bins[k];
        if (cell) {
          const Scalar pct = round_percent_1dp(static_cast<Scalar>(cell->correct) /
                                               static_cast<Scalar>(cell->total));
          std::snprintf(buf, sizeof(buf), " %7s", format_pct(pct).c_str());
        } else {
          std::snprintf(buf, sizeof(buf), " %7s", "");
        }
        out << buf;
      }
      out << "\n";
    }
    i = end;
  }
  out << "overall rank-1: " << format_pct(round_percent_1dp(result.overall)) << "% ("
      << result.correct_count << "/" << result.evaluated << " probes";
  if (!result.missing.empty())
    out << "; " << result.missing.size() << " lacked a gallery entry and were excluded";
  out << ")\n";
  return out.str();
}

EmbeddingSet embed_records(const std::vector<ImageRecord>& records, const std::string& image_root,
                           int image_size, const IdentityExtractor& extractor,
                           const Generator* generator, bool with_bins) {
  EmbeddingSet set;
  set.ids.reserve(records.size());
  if (with_bins) set.bins.reserve(records.size());
  set.features.resize(static_cast<Eigen::Index>(records.size()), extractor.feature_dim());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const ImageRecord& rec = records[i];
    const std::string path = (std::filesystem::path(image_root) / rec.image_ref).string();
    const Tensor raw = read_image(path);
    Tensor aligned = align_face(raw, rec.landmarks, image_size);
    if (generator) aligned = generator->forward(aligned);
    const IdentityFeatures feats = extractor.extract(aligned);
    if (feats.phi_f.size() != extractor.feature_dim())
      fail_runtime("evaluation", "extractor returned unexpected feature dimension");
    set.features.row(static_cast<Eigen::Index>(i)) = feats.phi_f.transpose();
    set.ids.push_back(rec.subject_id);
    if (with_bins) set.bins.push_back(pose_bin(rec));
  }
  return set;
}

}  // namespace frontal
