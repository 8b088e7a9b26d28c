#pragma once

#include "frontal/common.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace frontal {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

// Loss values against independent straight-loop reference implementations,
// plus the frozen closed-form fixtures.
std::vector<CheckResult> run_loss_oracle_checks();

// Central finite differences against every analytic gradient: the image-space
// loss gradients, discriminator parameter gradients, and the generator
// parameter gradients through the full composite objective. Coordinates whose
// h and 2h difference quotients disagree (a kink in |.| or leaky-relu sits
// inside the stencil) are excluded; everything else must match to 1e-3
// relative error at step 1e-5.
std::vector<CheckResult> run_gradient_checks();

// Structural invariants: attention linearity, shift-invariant total
// variation, alignment and mask properties, identification against the
// reference scorer, protocol partition rules, serialization round trips.
std::vector<CheckResult> run_property_checks();

std::vector<CheckResult> run_all_checks();

// Prints one line per check; returns the number of failures.
int report_checks(const std::vector<CheckResult>& results, std::ostream& out);

}  // namespace frontal
