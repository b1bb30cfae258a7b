#include "metademod/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace metademod {

SerEstimate SerEstimate::from_counts(std::size_t errors, std::size_t trials) {
  if (trials == 0) throw std::invalid_argument("SerEstimate: zero trials");
  if (errors > trials) throw std::invalid_argument("SerEstimate: errors exceed trials");
  SerEstimate e;
  e.errors = errors;
  e.trials = trials;
  e.rate = static_cast<double>(errors) / static_cast<double>(trials);
  e.std_error = std::sqrt(e.rate * (1.0 - e.rate) / static_cast<double>(trials));
  return e;
}

namespace {

struct TestBlock {
  std::vector<std::size_t> labels;
  std::vector<Complex> received;
};

TestBlock draw_test_block(const DeviceChannel& device, const Constellation& constellation,
                          std::size_t n_symbols, RngStream& rng) {
  if (n_symbols == 0) throw std::invalid_argument("SER estimation needs at least one symbol");
  TestBlock b;
  b.labels.reserve(n_symbols);
  b.received.reserve(n_symbols);
  for (std::size_t i = 0; i < n_symbols; ++i) {
    const std::size_t label = rng.index(constellation.order());
    b.labels.push_back(label);
    b.received.push_back(transmit(label, device, constellation, rng));
  }
  return b;
}

}  // namespace

SerEstimate estimate_ser(const NetParams& params, const DeviceChannel& device,
                         const Constellation& constellation, std::size_t n_symbols, RngStream& rng) {
  const auto block = draw_test_block(device, constellation, n_symbols, rng);
  const auto decided = demodulate(params, block.received);
  std::size_t errors = 0;
  for (std::size_t i = 0; i < n_symbols; ++i) errors += decided[i] != block.labels[i];
  return SerEstimate::from_counts(errors, n_symbols);
}

std::size_t ml_decide(Complex y, const DeviceChannel& device, const Constellation& constellation) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < constellation.order(); ++s) {
    const double d = std::norm(y - device.response(constellation.symbols[s]));
    if (d < best_d) {
      best_d = d;
      best = s;
    }
  }
  return best;
}

SerEstimate ml_oracle_ser(const DeviceChannel& device, const Constellation& constellation,
                          std::size_t n_symbols, RngStream& rng) {
  const auto block = draw_test_block(device, constellation, n_symbols, rng);
  std::size_t errors = 0;
  for (std::size_t i = 0; i < n_symbols; ++i)
    errors += ml_decide(block.received[i], device, constellation) != block.labels[i];
  return SerEstimate::from_counts(errors, n_symbols);
}

double ideal_ser_toy(double snr_linear) {
  if (!(snr_linear > 0.0)) throw DomainError("ideal_ser_toy: SNR must be positive");
  if (std::isinf(snr_linear)) return 0.0;
  return 1.5 * q_function(std::sqrt(snr_linear / 5.0));
}

double realistic_dmin(double alpha, double beta, double amplitude, DminVariant variant) {
  const double a = amplitude;
  const double a2 = a * a;
  const double root2 = std::sqrt(2.0);
  const double first = (12.0 * root2 * alpha * beta * a2 * a - 2.0 * root2 * alpha * a) /
                       ((1.0 + 2.0 * beta * a2) * (1.0 + 18.0 * beta * a2));
  const double second = 2.0 * alpha * a * std::sqrt(1.0 + 12.0 * beta * a2 + 180.0 * beta * beta * a2 * a2) /
                        ((1.0 + 10.0 * beta * a2) * (1.0 + 18.0 * beta * a2));
  if (variant == DminVariant::AbsoluteBranches) return std::min(std::abs(first), std::abs(second));
  return std::min(first, second);
}

double ideal_ser_realistic(double snr_linear, double alpha, double beta, double amplitude,
                           DminVariant variant) {
  if (!(snr_linear > 0.0) || !(alpha > 0.0) || !(beta >= 0.0) || !(amplitude > 0.0))
    throw DomainError("ideal_ser_realistic: parameters out of range");
  const double dmin = realistic_dmin(alpha, beta, amplitude, variant);
  if (std::isinf(snr_linear)) return dmin > 0.0 ? 0.0 : (dmin == 0.0 ? 7.5 : 15.0);
  const double noise = 10.0 * amplitude * amplitude / snr_linear;
  return 15.0 * q_function(dmin / std::sqrt(2.0 * noise));
}

void GridSpec::validate() const {
  if (re_points < 2 || im_points < 2) throw std::invalid_argument("grid: resolution must be >= 2");
  if (!(re_max > re_min) || !(im_max > im_min)) throw std::invalid_argument("grid: empty range");
}

namespace {

double grid_coord(double lo, double hi, std::size_t i, std::size_t n) {
  return lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
}

}  // namespace

std::vector<GridRow> decision_grid(const NetParams& params, const GridSpec& grid) {
  grid.validate();
  std::vector<GridRow> rows;
  rows.reserve(grid.re_points * grid.im_points);
  for (std::size_t i = 0; i < grid.im_points; ++i) {
    const double im = grid_coord(grid.im_min, grid.im_max, i, grid.im_points);
    for (std::size_t r = 0; r < grid.re_points; ++r) {
      const double re = grid_coord(grid.re_min, grid.re_max, r, grid.re_points);
      rows.push_back({re, im, forward(params, {re, im})});
    }
  }
  return rows;
}

void write_grid_csv(std::ostream& os, const std::vector<GridRow>& rows) {
  const std::size_t m = rows.empty() ? 0 : rows.front().probs.size();
  os << "re,im";
  for (std::size_t s = 0; s < m; ++s) os << ",p" << s;
  os << '\n';
  const auto old = os.precision(17);
  for (const auto& row : rows) {
    os << row.re << ',' << row.im;
    for (double p : row.probs) os << ',' << p;
    os << '\n';
  }
  os.precision(old);
}

SymmetryDiagnostic origin_symmetry(const NetParams& params, const GridSpec& grid) {
  const auto rows = decision_grid(params, grid);
  double asym = 0.0;
  double spread = 0.0;
  for (const auto& row : rows) {
    const auto mirrored = forward(params, {-row.re, -row.im});
    for (std::size_t s = 0; s < row.probs.size(); ++s) asym += std::abs(row.probs[s] - mirrored[s]);
    const auto [lo, hi] = std::minmax_element(row.probs.begin(), row.probs.end());
    spread += *hi - *lo;
  }
  const double m = static_cast<double>(rows.size());
  return {asym / (m * static_cast<double>(params.arch().num_outputs())), spread / m};
}

}  // namespace metademod
