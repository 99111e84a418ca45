#pragma once

#include "papp/config.hpp"
#include "papp/precoding.hpp"
#include "papp/random.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace papp {

/// Uniform planar array; element (r, c) sits at (r, c) * spacing wavelengths.
struct ArrayGeometry {
  int rows = 8;
  int cols = 8;
  double spacing = 0.5;

  int size() const { return rows * cols; }
  void validate() const;

  /// Most square rows x cols factorization of n_tx.
  static ArrayGeometry for_antennas(int n_tx, double spacing = 0.5);
};

struct UserRing {
  double min_distance_m = 50.0;
  double max_distance_m = 350.0;
  double angular_step_deg = 10.0;
  double radial_step_m = 50.0;
};

/// Distribution parameters of one deployment site.
struct SiteProfile {
  std::string site_id;
  double los_probability = 0.5;
  int min_paths = 3;
  int max_paths = 8;
  double angle_spread_deg = 10.0;
  double rician_k_db = 6.0;  // +inf forces a pure LOS path
  double pathloss_exponent = 2.5;
  double nlos_excess_loss_db = 6.0;
  double bs_height_m = 20.0;
  UserRing ring;
  std::uint64_t seed = 1;

  void validate() const;

  /// Closed-form mean per-entry power of draw_channel for this profile.
  double expected_entry_power() const;
};

struct ChannelDraw {
  ChannelMatrix h;
  std::vector<std::uint8_t> los;  // one flag per user
};

struct Sample {
  ChannelMatrix h;
  std::string site_id;
  std::vector<std::uint8_t> los;
};

struct Dataset {
  std::string site_id;
  std::uint64_t seed = 0;
  SystemConfig config;
  /// Amplitude factor applied to every raw draw.
  double normalization = 1.0;
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
  double mean_entry_power() const;
};

Eigen::VectorXcd steering_vector(const ArrayGeometry& geom, double azimuth_rad, double elevation_rad);

ChannelDraw draw_channel(const SiteProfile& profile, const SystemConfig& config, Rng& rng);

/// n samples drawn from per-sample seed streams of profile.seed, then scaled
/// so that the mean per-entry power over the dataset is one.
Dataset generate_site_dataset(const SiteProfile& profile, std::size_t n, const SystemConfig& config);

double noise_for_snr(double snr_db, double p_max);

/// Column k of the result is column perm[k] of h.
ChannelMatrix permute_users(const ChannelMatrix& h, std::span<const int> perm);

void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

/// Seven training sites followed by the three held-out sites.
std::vector<SiteProfile> default_site_profiles();
std::vector<std::string> default_training_sites();
std::vector<std::string> default_heldout_sites();

/// `[site_id]` sections with profile keys; unknown keys are rejected.
std::vector<SiteProfile> parse_site_profiles(const ConfigFile& file);
ConfigFile site_profiles_to_config(std::span<const SiteProfile> profiles);

}  // namespace papp
