#include <doctest.h>

#include "frontal/common.hpp"
#include "frontal/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

using namespace frontal;

TEST_CASE("tensor layout is channel-major with row-major planes") {
  Tensor t(2, 3, 4);
  CHECK(t.size() == 24);
  CHECK(t.plane_size() == 12);
  CHECK(t.data.size() == 24);
  CHECK((t.data == 0.0).all());

  t(1, 2, 3) = 7.0;
  CHECK(t.data[(1 * 3 + 2) * 4 + 3] == 7.0);
  t(0, 0, 1) = -2.0;
  CHECK(t.data[1] == -2.0);

  // Plane maps alias the same storage.
  auto p = t.plane(1);
  CHECK(p(2, 3) == 7.0);
  p(0, 0) = 9.0;
  CHECK(t(1, 0, 0) == 9.0);

  const Tensor& ct = t;
  CHECK(ct.plane(1)(0, 0) == 9.0);
}

TEST_CASE("tensor constructors, shape comparison and finiteness") {
  const Tensor z = Tensor::zeros(1, 2, 2);
  CHECK((z.data == 0.0).all());
  const Tensor c = Tensor::constant(2, 2, 2, 0.5);
  CHECK((c.data == 0.5).all());

  CHECK(z.same_shape(Tensor(1, 2, 2)));
  CHECK_FALSE(z.same_shape(c));
  CHECK_FALSE(Tensor(1, 2, 3).same_shape(Tensor(1, 3, 2)));

  Tensor t(1, 2, 2);
  CHECK(t.all_finite());
  t(0, 0, 0) = std::numeric_limits<Scalar>::quiet_NaN();
  CHECK_FALSE(t.all_finite());
  t(0, 0, 0) = std::numeric_limits<Scalar>::infinity();
  CHECK_FALSE(t.all_finite());
}

TEST_CASE("tensor digest separates contents and shapes") {
  Tensor a(1, 2, 6);
  Tensor b(1, 2, 6);
  for (int i = 0; i < 12; ++i) {
    a.data[i] = static_cast<Scalar>(i);
    b.data[i] = static_cast<Scalar>(i);
  }
  CHECK(a.digest() == b.digest());

  b(0, 1, 5) += 1e-12;  // any bit change shows up
  CHECK(a.digest() != b.digest());

  // Same flat data, different shape.
  Tensor c(1, 3, 4);
  for (int i = 0; i < 12; ++i) c.data[i] = static_cast<Scalar>(i);
  CHECK(a.digest() != c.digest());
}

TEST_CASE("rng draws are deterministic and correctly ranged") {
  Rng a(123), b(123), c(124);
  bool all_equal = true, any_diff = false;
  for (int i = 0; i < 16; ++i) {
    const Scalar ua = a.uniform();
    const Scalar ub = b.uniform();
    const Scalar uc = c.uniform();
    all_equal = all_equal && ua == ub;
    any_diff = any_diff || ua != uc;
    CHECK(ua >= 0.0);
    CHECK(ua < 1.0);
  }
  CHECK(all_equal);
  CHECK(any_diff);

  Rng r(5);
  for (int i = 0; i < 100; ++i) {
    const Scalar v = r.uniform(-3.0, 2.0);
    CHECK(v >= -3.0);
    CHECK(v < 2.0);
    CHECK(r.index(7) < 7);
  }
}

TEST_CASE("rng normal has plausible first moments") {
  Rng r(777);
  const int n = 4000;
  Scalar sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const Scalar v = r.normal();
    sum += v;
    sum2 += v * v;
  }
  const Scalar mean = sum / n;
  const Scalar var = sum2 / n - mean * mean;
  CHECK(std::abs(mean) < 0.1);
  CHECK(var > 0.85);
  CHECK(var < 1.15);
}

TEST_CASE("rng shuffle permutes deterministically") {
  std::vector<int> v(20);
  for (int i = 0; i < 20; ++i) v[i] = i;
  std::vector<int> w = v, u = v;

  Rng(9).shuffle(v);
  Rng(9).shuffle(w);
  Rng(10).shuffle(u);
  CHECK(v == w);
  CHECK(v != u);

  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 20; ++i) CHECK(sorted[static_cast<std::size_t>(i)] == i);
}

TEST_CASE("fnv1a64 matches the published test vectors") {
  CHECK(fnv1a64(std::string()) == 0xcbf29ce484222325ull);  // offset basis
  CHECK(fnv1a64(std::string("a")) == 0xaf63dc4c8601ec8cull);
  CHECK(fnv1a64(std::string("foobar")) == 0x85944171f73967e8ull);
  // Chaining equals hashing the concatenation.
  const std::uint64_t h1 = fnv1a64(std::string("foo"));
  CHECK(fnv1a64(std::string("bar"), h1) == fnv1a64(std::string("foobar")));
}

TEST_CASE("hex64 renders fixed-width lowercase hex") {
  CHECK(hex64(0) == "0000000000000000");
  CHECK(hex64(0xdeadbeefull) == "00000000deadbeef");
  CHECK(hex64(0xffffffffffffffffull) == "ffffffffffffffff");
  CHECK(hex64(0x123456789abcdef0ull) == "123456789abcdef0");
}

TEST_CASE("error helpers carry the kind and compose the message") {
  try {
    fail_validation("somewhere", "bad thing");
    FAIL("unreachable");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::validation);
    CHECK(std::string(e.what()) == "somewhere: bad thing");
  }
  try {
    fail_usage("wrong flags");
    FAIL("unreachable");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::usage);
  }
  try {
    fail_runtime("io", "disk gone");
    FAIL("unreachable");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::runtime);
  }
}
