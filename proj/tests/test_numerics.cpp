#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "metademod/numerics.hpp"

using namespace metademod;

TEST_SUITE("numerics") {

// Reference tail values from a 30-digit erfc evaluation.
TEST_CASE("q_function reference values") {
  CHECK(q_function(0.0) == 0.5);
  CHECK(q_function(1.0) == doctest::Approx(0.158655253931457051).epsilon(1e-13));
  CHECK(q_function(3.0) == doctest::Approx(0.00134989803163009453).epsilon(1e-12));
  CHECK(q_function(6.0) == doctest::Approx(9.86587645037698141e-10).epsilon(1e-12));
  CHECK(q_function(-1.5) == doctest::Approx(0.933192798731141934).epsilon(1e-13));
  CHECK(q_function(2.5139) == doctest::Approx(0.00597021428371334128).epsilon(1e-12));
}

TEST_CASE("q_function reflection") {
  for (double x = -8.0; x <= 8.0; x += 0.173) CHECK(std::abs(q_function(x) + q_function(-x) - 1.0) <= 1e-12);
}

TEST_CASE("q_function is decreasing") {
  double prev = 1.0;
  for (double x = -6.0; x <= 8.0; x += 0.25) {
    const double q = q_function(x);
    CHECK(q < prev);
    prev = q;
  }
}

TEST_CASE("q_function rejects non-finite input") {
  CHECK_THROWS_AS(q_function(std::numeric_limits<double>::quiet_NaN()), DomainError);
  CHECK_THROWS_AS(q_function(std::numeric_limits<double>::infinity()), DomainError);
}

TEST_CASE("rng streams reproduce and separate") {
  RngStream a(7, 3), b(7, 3), c(7, 4), d(8, 3);
  bool differs_c = false, differs_d = false;
  for (int i = 0; i < 100; ++i) {
    const double x = a.uniform();
    CHECK(x == b.uniform());
    differs_c |= x != c.uniform();
    differs_d |= x != d.uniform();
  }
  CHECK(differs_c);
  CHECK(differs_d);
}

TEST_CASE("derive does not consume draws") {
  RngStream a(1, 0), b(1, 0);
  auto child = a.derive(5);
  CHECK(a.uniform() == b.uniform());
  auto again = RngStream(1, 0).derive(5);
  CHECK(child.normal() == again.normal());
  CHECK(RngStream(1, 0).derive(5, 6).uniform() == RngStream(1, 0).derive(5).derive(6).uniform());
}

TEST_CASE("distinct streams are uncorrelated") {
  RngStream a(11, 1), b(11, 2);
  const int n = 200000;
  double sab = 0.0;
  for (int i = 0; i < n; ++i) sab += a.normal() * b.normal();
  CHECK(std::abs(sab / n) < 4.0 / std::sqrt(n));
}

TEST_CASE("uniform and index ranges") {
  RngStream r(3, 3);
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform();
    CHECK((u >= 0.0 && u < 1.0));
    const double v = r.uniform(0.05, 0.15);
    CHECK((v >= 0.05 && v < 0.15));
    CHECK(r.index(4) < 4);
  }
}

TEST_CASE("sample_cgaussian") {
  RngStream r(2, 9);
  CHECK(sample_cgaussian(r, 0.0) == Complex(0.0, 0.0));
  CHECK_THROWS_AS(sample_cgaussian(r, -1.0), DomainError);

  const int n = 1000000;
  double power = 0.0, re2 = 0.0, mean_re = 0.0, mean_im = 0.0;
  for (int i = 0; i < n; ++i) {
    const Complex z = sample_cgaussian(r, 1.0);
    power += std::norm(z);
    re2 += z.real() * z.real();
    mean_re += z.real();
    mean_im += z.imag();
  }
  CHECK(std::abs(power / n - 1.0) <= 0.01);
  CHECK(std::abs(re2 / n - 0.5) <= 0.01);
  CHECK(std::abs(mean_re / n) < 0.005);
  CHECK(std::abs(mean_im / n) < 0.005);

  RngStream x(5, 5), y(5, 5);
  CHECK(sample_cgaussian(x, 2.0) == sample_cgaussian(y, 2.0));
}

TEST_CASE("complex magnitude and phase conventions") {
  const Complex z(-1.0, 0.0);
  CHECK(std::norm(z) == 1.0);
  CHECK(std::arg(z) == doctest::Approx(M_PI));
  CHECK(std::norm(Complex(3.0, -4.0)) == 25.0);
}

}
