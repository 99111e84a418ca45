#include "papp/channel.hpp"

#include "papp/errors.hpp"
#include "papp/io.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace papp {
namespace {

constexpr char kDatasetMagic[9] = "PAPPDSET";
constexpr std::uint32_t kDatasetVersion = 1;

double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }

cdouble complex_normal(Rng& rng) {
  const double re = rng.normal();
  const double im = rng.normal();
  return {re * std::numbers::sqrt2 / 2.0, im * std::numbers::sqrt2 / 2.0};
}

int cell_count(double span, double step) {
  return std::max(1, static_cast<int>(std::lround(span / step)));
}

}  // namespace

void ArrayGeometry::validate() const {
  if (rows <= 0 || cols <= 0) throw ConfigError("array grid must have positive dimensions");
  if (!(spacing > 0.0)) throw ConfigError("element spacing must be positive");
}

ArrayGeometry ArrayGeometry::for_antennas(int n_tx, double spacing) {
  if (n_tx <= 0) throw ConfigError("antenna count must be positive");
  int rows = static_cast<int>(std::sqrt(static_cast<double>(n_tx)));
  while (rows > 1 && n_tx % rows != 0) --rows;
  return {rows, n_tx / rows, spacing};
}

void SiteProfile::validate() const {
  if (site_id.empty()) throw ConfigError("site profile needs a site_id");
  const std::string at = "site '" + site_id + "': ";
  if (!(los_probability >= 0.0 && los_probability <= 1.0)) {
    throw ConfigError(at + "los_probability must lie in [0, 1]");
  }
  if (min_paths < 1 || max_paths < min_paths) throw ConfigError(at + "invalid NLOS path count range");
  if (!(angle_spread_deg >= 0.0)) throw ConfigError(at + "angle spread must be non-negative");
  if (std::isnan(rician_k_db)) throw ConfigError(at + "rician_k_db is NaN");
  if (!(pathloss_exponent >= 0.0)) throw ConfigError(at + "pathloss exponent must be non-negative");
  if (!(ring.min_distance_m > 0.0) || !(ring.min_distance_m < ring.max_distance_m)) {
    throw ConfigError(at + "need 0 < min_distance < max_distance");
  }
  if (!(ring.angular_step_deg > 0.0) || !(ring.radial_step_m > 0.0)) {
    throw ConfigError(at + "ring steps must be positive");
  }
}

double SiteProfile::expected_entry_power() const {
  // Distances are uniform on [a, b]; pathloss is (d / a)^-n.
  const double a = ring.min_distance_m;
  const double b = ring.max_distance_m;
  const double n = pathloss_exponent;
  double mean_pl = 0.0;
  if (std::abs(n - 1.0) < 1e-12) {
    mean_pl = a * std::log(b / a) / (b - a);
  } else {
    mean_pl = std::pow(a, n) * (std::pow(a, 1.0 - n) - std::pow(b, 1.0 - n)) / ((n - 1.0) * (b - a));
  }
  const double nlos_gain = std::pow(10.0, -nlos_excess_loss_db / 10.0);
  return mean_pl * (los_probability + (1.0 - los_probability) * nlos_gain);
}

double Dataset::mean_entry_power() const {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& s : samples) {
    total += s.h.squaredNorm();
    count += static_cast<std::size_t>(s.h.size());
  }
  return count ? total / static_cast<double>(count) : 0.0;
}

Eigen::VectorXcd steering_vector(const ArrayGeometry& geom, double azimuth_rad, double elevation_rad) {
  geom.validate();
  const int n = geom.size();
  const double amp = 1.0 / std::sqrt(static_cast<double>(n));
  const double k = 2.0 * std::numbers::pi * geom.spacing;
  const double row_phase = k * std::sin(elevation_rad);
  const double col_phase = k * std::cos(elevation_rad) * std::sin(azimuth_rad);
  Eigen::VectorXcd a(n);
  for (int r = 0; r < geom.rows; ++r) {
    for (int c = 0; c < geom.cols; ++c) {
      a(r * geom.cols + c) = std::polar(amp, r * row_phase + c * col_phase);
    }
  }
  return a;
}

ChannelDraw draw_channel(const SiteProfile& profile, const SystemConfig& config, Rng& rng) {
  profile.validate();
  config.validate();
  const ArrayGeometry geom = ArrayGeometry::for_antennas(config.n_tx);
  const auto& ring = profile.ring;
  const int n_rad = cell_count(ring.max_distance_m - ring.min_distance_m, ring.radial_step_m);
  const int n_ang = cell_count(360.0, ring.angular_step_deg);
  const int n_cells = n_rad * n_ang;

  // Distinct grid cells per sample (partial Fisher-Yates) when the grid allows it.
  std::vector<int> cells(static_cast<std::size_t>(n_cells));
  for (int i = 0; i < n_cells; ++i) cells[static_cast<std::size_t>(i)] = i;
  std::vector<int> chosen(static_cast<std::size_t>(config.n_users));
  for (int k = 0; k < config.n_users; ++k) {
    if (k < n_cells) {
      const auto j = static_cast<std::size_t>(k) + rng.below(static_cast<std::uint64_t>(n_cells - k));
      std::swap(cells[static_cast<std::size_t>(k)], cells[j]);
      chosen[static_cast<std::size_t>(k)] = cells[static_cast<std::size_t>(k)];
    } else {
      chosen[static_cast<std::size_t>(k)] = static_cast<int>(rng.below(static_cast<std::uint64_t>(n_cells)));
    }
  }

  const double sqrt_n = std::sqrt(static_cast<double>(config.n_tx));
  const double k_lin = std::pow(10.0, profile.rician_k_db / 10.0);
  const double los_weight = std::isinf(k_lin) ? 1.0 : std::sqrt(k_lin / (k_lin + 1.0));
  const double scatter_weight = std::isinf(k_lin) ? 0.0 : std::sqrt(1.0 / (k_lin + 1.0));
  const double nlos_gain = std::pow(10.0, -profile.nlos_excess_loss_db / 10.0);
  const double spread = deg2rad(profile.angle_spread_deg);

  ChannelDraw out{ChannelMatrix::Zero(config.n_tx, config.n_users),
                  std::vector<std::uint8_t>(static_cast<std::size_t>(config.n_users), 0)};
  for (int k = 0; k < config.n_users; ++k) {
    const int cell = chosen[static_cast<std::size_t>(k)];
    const int ri = cell / n_ang;
    const int ai = cell % n_ang;
    const double d = ring.min_distance_m +
                     (ri + rng.uniform()) * (ring.max_distance_m - ring.min_distance_m) / n_rad;
    const double az = deg2rad((ai + rng.uniform()) * 360.0 / n_ang);
    const double el = std::atan2(profile.bs_height_m, d);
    const double pathloss = std::pow(d / ring.min_distance_m, -profile.pathloss_exponent);
    const bool los = rng.bernoulli(profile.los_probability);

    const int paths = profile.min_paths +
                      static_cast<int>(rng.below(static_cast<std::uint64_t>(profile.max_paths - profile.min_paths + 1)));
    Eigen::VectorXcd scatter = Eigen::VectorXcd::Zero(config.n_tx);
    for (int l = 0; l < paths; ++l) {
      const cdouble g = complex_normal(rng);
      const double paz = az + spread * rng.normal();
      const double pel = el + 0.5 * spread * rng.normal();
      scatter += g * steering_vector(geom, paz, pel);
    }
    scatter /= std::sqrt(static_cast<double>(paths));
    const double los_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);

    Eigen::VectorXcd col;
    if (los) {
      col = los_weight * std::polar(1.0, los_phase) * steering_vector(geom, az, el);
      if (scatter_weight > 0.0) col += scatter_weight * scatter;
      col *= std::sqrt(pathloss);
    } else {
      col = std::sqrt(pathloss * nlos_gain) * scatter;
    }
    out.h.col(k) = sqrt_n * col;
    out.los[static_cast<std::size_t>(k)] = los ? 1 : 0;
  }
  return out;
}

Dataset generate_site_dataset(const SiteProfile& profile, std::size_t n, const SystemConfig& config) {
  if (n == 0) throw ConfigError("dataset needs at least one sample");
  profile.validate();
  config.validate();
  Dataset ds;
  ds.site_id = profile.site_id;
  ds.seed = profile.seed;
  ds.config = config;
  ds.samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(profile.seed, {static_cast<std::uint64_t>(i)}));
    ChannelDraw draw = draw_channel(profile, config, rng);
    ds.samples.push_back({std::move(draw.h), profile.site_id, std::move(draw.los)});
  }
  const double mean = ds.mean_entry_power();
  if (mean > 0.0) {
    ds.normalization = 1.0 / std::sqrt(mean);
    for (auto& s : ds.samples) s.h *= ds.normalization;
  }
  return ds;
}

double noise_for_snr(double snr_db, double p_max) {
  if (!(p_max > 0.0)) throw ConfigError("p_max must be positive");
  return p_max / std::pow(10.0, snr_db / 10.0);
}

ChannelMatrix permute_users(const ChannelMatrix& h, std::span<const int> perm) {
  const auto n = static_cast<std::size_t>(h.cols());
  if (perm.size() != n) throw ConfigError("permutation length does not match the user count");
  std::vector<bool> seen(n, false);
  for (int p : perm) {
    if (p < 0 || static_cast<std::size_t>(p) >= n || seen[static_cast<std::size_t>(p)]) {
      throw ConfigError("user permutation is not a bijection");
    }
    seen[static_cast<std::size_t>(p)] = true;
  }
  ChannelMatrix out(h.rows(), h.cols());
  for (std::size_t k = 0; k < n; ++k) out.col(static_cast<Eigen::Index>(k)) = h.col(perm[k]);
  return out;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  ByteWriter w;
  w.put_magic(kDatasetMagic);
  w.put<std::uint32_t>(kDatasetVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ds.config.n_tx));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ds.config.n_users));
  w.put<std::uint64_t>(ds.samples.size());
  w.put_string(ds.site_id);
  w.put<std::uint64_t>(ds.seed);
  w.put<double>(ds.config.p_max);
  w.put<double>(ds.normalization);
  for (const auto& s : ds.samples) {
    if (s.h.rows() != ds.config.n_tx || s.h.cols() != ds.config.n_users) {
      throw ConfigError("sample dimensions do not match dataset config");
    }
    for (Eigen::Index r = 0; r < s.h.rows(); ++r) {
      for (Eigen::Index c = 0; c < s.h.cols(); ++c) {
        w.put<double>(s.h(r, c).real());
        w.put<double>(s.h(r, c).imag());
      }
    }
    for (Eigen::Index c = 0; c < s.h.cols(); ++c) {
      w.put<std::uint8_t>(static_cast<std::size_t>(c) < s.los.size() ? s.los[static_cast<std::size_t>(c)] : 0);
    }
  }
  w.seal();
  write_file_bytes(path, w.bytes());
}

Dataset load_dataset(const std::filesystem::path& path) {
  ByteReader r(read_file_bytes(path), path.string());
  r.expect_magic(kDatasetMagic);
  if (r.get<std::uint32_t>() != kDatasetVersion) throw IoError(path.string() + ": unsupported version");
  Dataset ds;
  ds.config.n_tx = static_cast<int>(r.get<std::uint32_t>());
  ds.config.n_users = static_cast<int>(r.get<std::uint32_t>());
  const auto count = r.get<std::uint64_t>();
  ds.site_id = r.get_string();
  ds.seed = r.get<std::uint64_t>();
  ds.config.p_max = r.get<double>();
  ds.normalization = r.get<double>();
  ds.config.validate();
  ds.samples.reserve(static_cast<std::size_t>(count));
  for (std::uint64_t i = 0; i < count; ++i) {
    Sample s{ChannelMatrix(ds.config.n_tx, ds.config.n_users), ds.site_id,
             std::vector<std::uint8_t>(static_cast<std::size_t>(ds.config.n_users))};
    for (Eigen::Index row = 0; row < s.h.rows(); ++row) {
      for (Eigen::Index c = 0; c < s.h.cols(); ++c) {
        const double re = r.get<double>();
        const double im = r.get<double>();
        s.h(row, c) = {re, im};
      }
    }
    for (auto& f : s.los) f = r.get<std::uint8_t>();
    ds.samples.push_back(std::move(s));
  }
  r.expect_end();
  return ds;
}

std::vector<SiteProfile> default_site_profiles() {
  auto make = [](std::string id, double los, int pmin, int pmax, double spread, double k_db,
                 double ple, double excess, std::uint64_t seed) {
    SiteProfile p;
    p.site_id = std::move(id);
    p.los_probability = los;
    p.min_paths = pmin;
    p.max_paths = pmax;
    p.angle_spread_deg = spread;
    p.rician_k_db = k_db;
    p.pathloss_exponent = ple;
    p.nlos_excess_loss_db = excess;
    p.seed = seed;
    return p;
  };
  return {
      make("universite-de-montreal", 0.60, 3, 8, 10.0, 6.0, 2.6, 6.0, 101),
      make("parc", 0.80, 2, 5, 6.0, 9.0, 2.2, 5.0, 102),
      make("rachel", 0.40, 4, 10, 15.0, 3.0, 3.0, 7.0, 103),
      make("cathcart", 0.30, 5, 12, 20.0, 2.0, 3.3, 8.0, 104),
      make("old-port", 0.70, 3, 6, 8.0, 8.0, 2.4, 5.0, 105),
      make("sherbrooke", 0.50, 4, 9, 12.0, 5.0, 2.8, 6.0, 106),
      make("okapark", 0.90, 1, 4, 5.0, 12.0, 2.0, 4.0, 107),
      // Held-out deployment sites: industrial, residential, downtown.
      make("ericsson", 0.75, 2, 6, 8.0, 8.0, 2.3, 5.0, 201),
      make("decarie", 0.50, 3, 8, 12.0, 5.0, 2.7, 6.0, 202),
      make("sainte-catherine", 0.25, 5, 12, 18.0, 3.0, 3.2, 8.0, 203),
  };
}

std::vector<std::string> default_training_sites() {
  return {"universite-de-montreal", "parc", "rachel", "cathcart", "old-port", "sherbrooke", "okapark"};
}

std::vector<std::string> default_heldout_sites() { return {"ericsson", "decarie", "sainte-catherine"}; }

std::vector<SiteProfile> parse_site_profiles(const ConfigFile& file) {
  std::vector<SiteProfile> out;
  for (const auto& sec : file.sections()) {
    SiteProfile p;
    p.site_id = sec.name();
    p.los_probability = sec.get_double("los_probability", p.los_probability);
    p.min_paths = static_cast<int>(sec.get_int("min_paths", p.min_paths));
    p.max_paths = static_cast<int>(sec.get_int("max_paths", p.max_paths));
    p.angle_spread_deg = sec.get_double("angle_spread_deg", p.angle_spread_deg);
    p.rician_k_db = sec.get_double("rician_k_db", p.rician_k_db);
    p.pathloss_exponent = sec.get_double("pathloss_exponent", p.pathloss_exponent);
    p.nlos_excess_loss_db = sec.get_double("nlos_excess_loss_db", p.nlos_excess_loss_db);
    p.bs_height_m = sec.get_double("bs_height_m", p.bs_height_m);
    p.ring.min_distance_m = sec.get_double("min_distance_m", p.ring.min_distance_m);
    p.ring.max_distance_m = sec.get_double("max_distance_m", p.ring.max_distance_m);
    p.ring.angular_step_deg = sec.get_double("angular_step_deg", p.ring.angular_step_deg);
    p.ring.radial_step_m = sec.get_double("radial_step_m", p.ring.radial_step_m);
    const long long seed = sec.get_int("seed", static_cast<long long>(p.seed));
    if (seed < 0) throw ConfigError("site '" + p.site_id + "': seed must be non-negative");
    p.seed = static_cast<std::uint64_t>(seed);
    sec.reject_unknown();
    p.validate();
    out.push_back(std::move(p));
  }
  return out;
}

ConfigFile site_profiles_to_config(std::span<const SiteProfile> profiles) {
  ConfigFile file;
  for (const auto& p : profiles) {
    auto& s = file.section(p.site_id);
    s.set("los_probability", format_double(p.los_probability));
    s.set("min_paths", std::to_string(p.min_paths));
    s.set("max_paths", std::to_string(p.max_paths));
    s.set("angle_spread_deg", format_double(p.angle_spread_deg));
    s.set("rician_k_db", format_double(p.rician_k_db));
    s.set("pathloss_exponent", format_double(p.pathloss_exponent));
    s.set("nlos_excess_loss_db", format_double(p.nlos_excess_loss_db));
    s.set("bs_height_m", format_double(p.bs_height_m));
    s.set("min_distance_m", format_double(p.ring.min_distance_m));
    s.set("max_distance_m", format_double(p.ring.max_distance_m));
    s.set("angular_step_deg", format_double(p.ring.angular_step_deg));
    s.set("radial_step_m", format_double(p.ring.radial_step_m));
    s.set("seed", std::to_string(p.seed));
  }
  return file;
}

}  // namespace papp
