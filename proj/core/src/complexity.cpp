#include "papp/complexity.hpp"

#include "papp/config.hpp"
#include "papp/errors.hpp"

#include <ostream>

namespace papp {
namespace {

void require_positive(long long v, const char* name) {
  if (v <= 0) throw ConfigError(std::string(name) + " must be positive");
}

}  // namespace

double to_double(const Count& c) {
  return static_cast<double>(c.numerator()) / static_cast<double>(c.denominator());
}

Count parse_count(const std::string& text) {
  long long whole = 0, frac = 0, scale = 1;
  bool seen_dot = false, seen_digit = false;
  for (char ch : text) {
    if (ch == '.' && !seen_dot) {
      seen_dot = true;
    } else if (ch >= '0' && ch <= '9') {
      seen_digit = true;
      if (seen_dot) {
        if (scale > 1'000'000'000'000LL) throw ConfigError("too many decimals in '" + text + "'");
        frac = frac * 10 + (ch - '0');
        scale *= 10;
      } else {
        whole = whole * 10 + (ch - '0');
      }
    } else {
      throw ConfigError("not a non-negative decimal: '" + text + "'");
    }
  }
  if (!seen_digit) throw ConfigError("not a non-negative decimal: '" + text + "'");
  return Count(whole) + Count(frac, scale);
}

std::string count_str(const Count& c) {
  if (c.denominator() == 1) return std::to_string(c.numerator());
  return std::to_string(c.numerator()) + "/" + std::to_string(c.denominator());
}

Count wmmse_mult_count(long long n_tx, long long n_users, const Count& iterations) {
  require_positive(n_tx, "n_tx");
  require_positive(n_users, "n_users");
  if (iterations <= 0) throw ConfigError("iterations must be positive");
  const Count nt(n_tx), nu(n_users);
  const Count per_iter = Count(2, 3) * nt * nt * nt * nu + nt * nt * nu + 2 * nt * (2 * nu * nu + nu) + nu * nu +
                         Count(14, 3) * nu;
  return 4 * iterations * per_iter;
}

Count zf_mult_count(long long n_tx, long long n_users) {
  require_positive(n_tx, "n_tx");
  require_positive(n_users, "n_users");
  const Count nt(n_tx), nu(n_users);
  return 8 * nu * nu * nt + Count(8, 3) * nu * nu * nu;
}

Count papp_mult_count(long long n_tx, long long n_users, long long c_in, long long c_out, long long kernel,
                      const std::array<long long, 5>& fc) {
  require_positive(n_tx, "n_tx");
  require_positive(n_users, "n_users");
  require_positive(c_in, "c_in");
  require_positive(c_out, "c_out");
  require_positive(kernel, "kernel");
  for (long long d : fc) require_positive(d, "fully connected size");
  const Count cnn(c_out * n_tx * n_users);
  return cnn * c_in * kernel * kernel + cnn * fc[0] + Count(fc[0] * fc[1]) + Count(fc[1] * fc[2]) +
         Count(fc[2] * fc[3]) + Count(fc[2] * fc[4]);
}

Count maml_inversion_term(long long n_tx, long long n_users) {
  require_positive(n_tx, "n_tx");
  require_positive(n_users, "n_users");
  const Count nt(n_tx), nu(n_users);
  return 8 * (Count(4, 3) * nt * nt * nt + nt * nt * (3 * nu + 2) + nt * (2 * nu + 3));
}

Count maml_cnn_mult_count(long long n_tx, long long n_users, long long c_in, long long c_out, long long kernel) {
  require_positive(c_in, "c_in");
  require_positive(c_out, "c_out");
  require_positive(kernel, "kernel");
  const Count cnn(c_out * n_tx * n_users);
  return cnn * c_in * kernel * kernel + cnn * (3 * n_users + 1) + maml_inversion_term(n_tx, n_users);
}

std::array<long long, 5> ComplexityParams::fc_sizes() const {
  const long long head = fc4 > 0 ? fc4 : n_tx * n_users;
  return {fc1, fc2, fc3, head, head};
}

void ComplexityParams::validate() const {
  require_positive(n_tx, "n_tx");
  require_positive(n_users, "n_users");
  if (iterations <= 0) throw ConfigError("iterations must be positive");
  require_positive(c_in, "c_in");
  require_positive(c_out, "c_out");
  require_positive(kernel, "kernel");
  require_positive(fc1, "fc1");
  require_positive(fc2, "fc2");
  require_positive(fc3, "fc3");
  if (fc4 < 0) throw ConfigError("fc4 must be non-negative");
}

const MethodCount& ComplexityReport::row(const std::string& method) const {
  for (const auto& r : rows)
    if (r.method == method) return r;
  throw ConfigError("no complexity row for '" + method + "'");
}

void ComplexityReport::write_csv(std::ostream& out) const {
  out << "method,n_tx,n_users,params,mult_count,ratio_vs_wmmse\n";
  for (const auto& r : rows) {
    out << r.method << ',' << params.n_tx << ',' << params.n_users << ',' << r.params << ','
        << format_double(to_double(r.count)) << ',' << format_double(r.ratio_vs_wmmse) << '\n';
  }
}

void ComplexityReport::write_text(std::ostream& out) const {
  const auto fc = params.fc_sizes();
  out << "N_T = " << params.n_tx << ", N_U = " << params.n_users << ", I = " << count_str(params.iterations)
      << "\nC_in = " << params.c_in << ", C_out = " << params.c_out << ", k = " << params.kernel << ", FC = "
      << fc[0] << '/' << fc[1] << '/' << fc[2] << '/' << fc[3] << '/' << fc[4] << "\n\n";
  for (const auto& r : rows) {
    out << r.method << ": " << format_double(to_double(r.count)) << " real multiplications (exact "
        << count_str(r.count) << "), WMMSE/" << r.method << " = " << format_double(r.ratio_vs_wmmse) << '\n';
  }
  if (params.default_c_in || params.default_kernel) {
    out << "\nnote: ";
    if (params.default_c_in) out << "C_in = " << params.c_in << " ";
    if (params.default_kernel) out << "k = " << params.kernel << " ";
    out << "are assumed defaults, not measured network sizes\n";
  }
}

ComplexityReport complexity_report(const ComplexityParams& p) {
  p.validate();
  const auto fc = p.fc_sizes();
  ComplexityReport r;
  r.params = p;
  const std::string net = "C_in=" + std::to_string(p.c_in) + ";C_out=" + std::to_string(p.c_out) +
                          ";k=" + std::to_string(p.kernel);
  r.rows.push_back({"WMMSE", "I=" + format_double(to_double(p.iterations)),
                    wmmse_mult_count(p.n_tx, p.n_users, p.iterations)});
  r.rows.push_back({"ZF", "-", zf_mult_count(p.n_tx, p.n_users)});
  r.rows.push_back({"PaPP",
                    net + ";FC=" + std::to_string(fc[0]) + "/" + std::to_string(fc[1]) + "/" + std::to_string(fc[2]) +
                        "/" + std::to_string(fc[3]) + "/" + std::to_string(fc[4]),
                    papp_mult_count(p.n_tx, p.n_users, p.c_in, p.c_out, p.kernel, fc)});
  r.rows.push_back({"MAML-CNN", net, maml_cnn_mult_count(p.n_tx, p.n_users, p.c_in, p.c_out, p.kernel)});
  const double wmmse = to_double(r.rows[0].count);
  for (auto& row : r.rows) row.ratio_vs_wmmse = wmmse / to_double(row.count);
  return r;
}

}  // namespace papp
