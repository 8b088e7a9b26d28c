#pragma once

#include "frontal/common.hpp"
#include "frontal/dataset.hpp"
#include "frontal/identity.hpp"
#include "frontal/networks.hpp"

#include <string>
#include <vector>

namespace frontal {

// Row-per-item embedding matrix. `bins` is populated for probe sets and left
// empty for galleries.
struct EmbeddingSet {
  std::vector<int> ids;
  std::vector<PoseBin> bins;
  Mat features;  // n x d
};

// 1 - <a, b> / (|a| |b|). Errors on a zero-norm input.
Scalar cosine_distance(const Vec& a, const Vec& b);

// Distances compare like with like: the original probe against the original
// gallery embedding, and the frontalized probe against the frontalized
// gallery embedding, so neither term mixes raw-image and generator-output
// domains.
enum class FusionMode {
  fused,          // 0.5 * (d(probe_orig, gal_orig) + d(probe_gen, gal_gen))
  original_only,  // d(probe_orig, gal_orig)
  generated_only  // d(probe_gen, gal_gen)
};

// One (|yaw|, pitch) accuracy cell.
struct BinCell {
  Scalar abs_yaw_deg = 0.0;
  Scalar pitch_deg = 0.0;
  long total = 0;
  long correct = 0;
};

struct Rank1Result {
  long evaluated = 0;      // probes whose subject has a gallery entry
  long correct_count = 0;
  Scalar overall = 0.0;    // correct_count / evaluated, in [0, 1]
  std::vector<int> predicted;             // per probe: nearest gallery subject
  std::vector<unsigned char> correct;     // per probe: 1 if predicted == true id
  std::vector<std::size_t> missing;       // probes without gallery coverage (excluded above)
  std::vector<BinCell> bins;              // report order: |pitch| desc, pitch desc, |yaw| asc
};

// Nearest-gallery identification over image pairs. The gallery must hold
// exactly one row per subject; candidates are scanned in ascending subject-id
// order and only a strictly smaller distance replaces the best, so ties
// resolve to the lowest id. probes_orig/probes_gen must list the same
// subjects in the same order, as must gallery_orig/gallery_gen (the latter
// holds the frontalized gallery embeddings). original_only ignores both
// generated sets; generated_only takes ids and bins from the original sets
// but measures only the generated pair.
Rank1Result rank1(const EmbeddingSet& probes_orig, const EmbeddingSet& probes_gen,
                  const EmbeddingSet& gallery_orig, const EmbeddingSet& gallery_gen,
                  FusionMode mode);

// Percentage accuracy rounded half-up to one decimal.
Scalar round_percent_1dp(Scalar fraction);

// CSV: one "bin" row per cell plus "overall" and "missing_gallery" rows.
std::string rank1_report_csv(const Rank1Result& result);
// Human-readable grid: one section per |pitch|, signed-pitch rows, |yaw|
// columns; empty bins print as blanks.
std::string rank1_report_grid(const Rank1Result& result);

// Embeds records end to end: read image, align to image_size, optionally run
// the generator, take the extractor's feature vector. generator == nullptr
// embeds the aligned input itself.
EmbeddingSet embed_records(const std::vector<ImageRecord>& records, const std::string& image_root,
                           int image_size, const IdentityExtractor& extractor,
                           const Generator* generator, bool with_bins);

}  // namespace frontal
