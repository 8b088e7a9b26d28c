#pragma once

#include "frontal/common.hpp"
#include "frontal/tensor.hpp"

#include <vector>

namespace frontal::oracle {

// Independent brute-force reference implementations used to cross-check the
// production code paths. Deliberately written as plain scalar loops with no
// shared helpers, so a bug would have to be made twice to go unnoticed.

Scalar pixel_loss_ref(const Tensor& y_hat, const Tensor& y);

Scalar tv_loss_ref(const Tensor& y_hat);

// Exhaustive double-loop rank-1 assignment under the fused pair distance
// 0.5 * ((1 - cos(probe_orig, gal_orig)) + (1 - cos(probe_gen, gal_gen))),
// comparing original with original and frontalized with frontalized. Returns
// the predicted gallery subject id per probe; ties resolve to the lowest
// subject id.
std::vector<int> rank1_ref(const Mat& probe_orig, const Mat& probe_gen, const Mat& gallery_orig,
                           const Mat& gallery_gen, const std::vector<int>& gallery_ids);

}  // namespace frontal::oracle
