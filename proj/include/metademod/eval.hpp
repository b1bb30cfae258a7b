#pragma once

#include <cstddef>
#include <iosfwd>
#include <vector>

#include "metademod/channel.hpp"
#include "metademod/demodnet.hpp"

namespace metademod {

struct SerEstimate {
  std::size_t errors = 0;
  std::size_t trials = 0;
  double rate = 0.0;
  double std_error = 0.0;

  static SerEstimate from_counts(std::size_t errors, std::size_t trials);
};

// Monte-Carlo SER of the argmax demodulator on uniformly drawn symbols.
SerEstimate estimate_ser(const NetParams& params, const DeviceChannel& device,
                         const Constellation& constellation, std::size_t n_symbols, RngStream& rng);

// Same symbol/noise draws as estimate_ser, decided by minimum distance to h g(s).
SerEstimate ml_oracle_ser(const DeviceChannel& device, const Constellation& constellation,
                          std::size_t n_symbols, RngStream& rng);

std::size_t ml_decide(Complex y, const DeviceChannel& device, const Constellation& constellation);

// 4-PAM with perfect CSI: 1.5 Q(sqrt(SNR/5)).
double ideal_ser_toy(double snr_linear);

enum class DminVariant {
  Verbatim,         // min of the two branches exactly as printed
  AbsoluteBranches  // min of |branch| values
};

double realistic_dmin(double alpha, double beta, double amplitude,
                      DminVariant variant = DminVariant::Verbatim);

// 15 Q(d_min / sqrt(2 N_o)) with N_o = 10 A^2 / SNR. Not clamped to [0, 1].
double ideal_ser_realistic(double snr_linear, double alpha, double beta, double amplitude,
                           DminVariant variant = DminVariant::Verbatim);

struct GridSpec {
  double re_min = -5.0, re_max = 5.0;
  double im_min = -5.0, im_max = 5.0;
  std::size_t re_points = 101, im_points = 101;

  void validate() const;
};

struct GridRow {
  double re;
  double im;
  std::vector<double> probs;
};

// Rows ordered by im (outer) then re (inner).
std::vector<GridRow> decision_grid(const NetParams& params, const GridSpec& grid);

void write_grid_csv(std::ostream& os, const std::vector<GridRow>& rows);

struct SymmetryDiagnostic {
  double asymmetry;  // mean |p(s|y) - p(s|-y)|
  double spread;     // mean (max_s p - min_s p)
  double ratio() const { return spread > 0.0 ? asymmetry / spread : 0.0; }
};

SymmetryDiagnostic origin_symmetry(const NetParams& params, const GridSpec& grid);

}  // namespace metademod
