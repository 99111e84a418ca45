#pragma once

// Closed-form real-multiplication counts of the precoding methods. Counts
// are exact rationals because several terms carry thirds.

#include <boost/rational.hpp>

#include <array>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace papp {

using Count = boost::rational<long long>;

double to_double(const Count& c);
/// Parses a non-negative decimal such as "12.5" exactly.
Count parse_count(const std::string& text);
std::string count_str(const Count& c);

/// 4 I (2/3 N_T^3 N_U + N_T^2 N_U + 2 N_T (2 N_U^2 + N_U) + N_U^2 + 14/3 N_U)
Count wmmse_mult_count(long long n_tx, long long n_users, const Count& iterations);
/// 8 N_U^2 N_T + 8/3 N_U^3
Count zf_mult_count(long long n_tx, long long n_users);
/// Convolution plus the five fully connected layers (FC1, FC2, FC3, FC4r, FC4i).
Count papp_mult_count(long long n_tx, long long n_users, long long c_in, long long c_out, long long kernel,
                      const std::array<long long, 5>& fc);
/// Convolution, output layer and the 8 (4/3 N_T^3 + ...) inversion term.
Count maml_cnn_mult_count(long long n_tx, long long n_users, long long c_in, long long c_out, long long kernel);
/// The matrix-inversion term of maml_cnn_mult_count on its own.
Count maml_inversion_term(long long n_tx, long long n_users);

struct ComplexityParams {
  long long n_tx = 64;
  long long n_users = 4;
  Count iterations{25, 2};
  long long c_in = 2;
  long long c_out = 32;
  long long kernel = 3;
  long long fc1 = 64;
  long long fc2 = 64;
  long long fc3 = 512;
  /// Width of each output head; 0 means N_T * N_U.
  long long fc4 = 0;
  /// Set when c_in / kernel were not given explicitly.
  bool default_c_in = true;
  bool default_kernel = true;

  std::array<long long, 5> fc_sizes() const;
  void validate() const;
};

struct MethodCount {
  std::string method;
  std::string params;
  Count count;
  double ratio_vs_wmmse = 0.0;  // WMMSE count / this count
};

struct ComplexityReport {
  ComplexityParams params;
  std::vector<MethodCount> rows;  // WMMSE, ZF, PaPP, MAML-CNN

  const MethodCount& row(const std::string& method) const;
  void write_csv(std::ostream& out) const;
  void write_text(std::ostream& out) const;
};

ComplexityReport complexity_report(const ComplexityParams& params);

}  // namespace papp
