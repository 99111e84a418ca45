#include "papp/channel.hpp"
#include "papp/config.hpp"
#include "papp/errors.hpp"
#include "papp/io.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace papp {
namespace {

using test::random_complex;
using test::rel_err;

SiteProfile profile_named(const std::string& id) {
  for (const auto& p : default_site_profiles())
    if (p.site_id == id) return p;
  throw std::runtime_error("no profile " + id);
}

TEST(ArrayGeometry, FactorsAntennaCount) {
  const auto g64 = ArrayGeometry::for_antennas(64);
  EXPECT_EQ(g64.rows * g64.cols, 64);
  EXPECT_EQ(g64.rows, 8);
  const auto g12 = ArrayGeometry::for_antennas(12);
  EXPECT_EQ(g12.rows * g12.cols, 12);
  EXPECT_EQ(std::min(g12.rows, g12.cols), 3);
  EXPECT_THROW((ArrayGeometry{2, 2, 0.0}.validate()), ConfigError);
}

TEST(SteeringVector, ConstantModulus) {
  const auto a = steering_vector(ArrayGeometry::for_antennas(16), 0.3, -0.2);
  for (Eigen::Index i = 0; i < a.size(); ++i) EXPECT_NEAR(std::abs(a(i)), 0.25, 1e-15);
}

TEST(SteeringVector, InnerProductMatchesPhaseSum) {
  const ArrayGeometry g{4, 4, 0.5};
  const double az1 = 0.4, el1 = 0.1, az2 = -0.7, el2 = 0.25;
  const cdouble got = steering_vector(g, az1, el1).dot(steering_vector(g, az2, el2));
  // a1^H a2 = (1/N) sum_{r,c} exp(j 2 pi d (r dv + c dh))
  const double k = 2.0 * std::numbers::pi * 0.5;
  const double dv = std::sin(el2) - std::sin(el1);
  const double dh = std::cos(el2) * std::sin(az2) - std::cos(el1) * std::sin(az1);
  double re = 0.0, im = 0.0;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) {
      re += std::cos(k * (r * dv + c * dh));
      im += std::sin(k * (r * dv + c * dh));
    }
  EXPECT_LT(std::abs(got - cdouble(re, im) / 16.0) / std::abs(got), 1e-12);
  EXPECT_NEAR(std::abs(steering_vector(g, az1, el1).squaredNorm()), 1.0, 1e-14);
}

TEST(DrawChannel, EmpiricalPowerMatchesClosedForm) {
  const SystemConfig sc{16, 2, 1.0};
  for (const char* id : {"parc", "cathcart", "ericsson"}) {
    const SiteProfile p = profile_named(id);
    Rng rng(5);
    double acc = 0.0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) acc += draw_channel(p, sc, rng).h.squaredNorm();
    const double empirical = acc / (n * 16.0 * 2.0);
    EXPECT_LT(rel_err(empirical, p.expected_entry_power()), 0.02) << id;
  }
}

TEST(DrawChannel, LosFractionTracksProfile) {
  const SystemConfig sc{4, 1, 1.0};
  const Dataset ds = generate_site_dataset(profile_named("ericsson"), 10000, sc);
  double los = 0.0;
  for (const auto& s : ds.samples) los += s.los[0];
  const double frac = los / 10000.0;
  EXPECT_GT(frac, 0.73);
  EXPECT_LT(frac, 0.77);
}

TEST(DrawChannel, EntriesFinite) {
  const SystemConfig sc{64, 4, 1.0};
  Rng rng(8);
  for (const auto& p : default_site_profiles()) {
    const auto d = draw_channel(p, sc, rng);
    EXPECT_TRUE(d.h.allFinite());
    EXPECT_EQ(d.h.rows(), 64);
    EXPECT_EQ(d.los.size(), 4u);
  }
}

TEST(Dataset, NormalizedToUnitEntryPower) {
  const Dataset ds = generate_site_dataset(profile_named("rachel"), 300, {16, 2, 1.0});
  EXPECT_NEAR(ds.mean_entry_power(), 1.0, 1e-6);
  EXPECT_GT(ds.normalization, 0.0);
}

TEST(Dataset, RoundTripIsExactAndFilesAreDeterministic) {
  const auto dir = test::scratch_dir("dataset");
  const SiteProfile p = profile_named("okapark");
  const Dataset a = generate_site_dataset(p, 50, {8, 2, 1.0});
  save_dataset(a, dir / "a.bin");
  save_dataset(generate_site_dataset(p, 50, {8, 2, 1.0}), dir / "b.bin");
  EXPECT_EQ(read_file_bytes(dir / "a.bin"), read_file_bytes(dir / "b.bin"));

  const Dataset b = load_dataset(dir / "a.bin");
  EXPECT_EQ(b.site_id, a.site_id);
  EXPECT_EQ(b.seed, a.seed);
  EXPECT_EQ(b.config.n_tx, 8);
  EXPECT_EQ(b.normalization, a.normalization);
  ASSERT_EQ(b.size(), a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(b.samples[i].h, a.samples[i].h);
    EXPECT_EQ(b.samples[i].los, a.samples[i].los);
  }
}

TEST(Dataset, PerSampleStreamsDoNotDependOnCount) {
  // Sample i comes from its own seed stream: a longer dataset starts with
  // the same raw draws (up to the dataset-wide normalization factor).
  const SiteProfile p = profile_named("parc");
  const Dataset small = generate_site_dataset(p, 10, {8, 2, 1.0});
  const Dataset large = generate_site_dataset(p, 40, {8, 2, 1.0});
  for (std::size_t i = 0; i < 10; ++i) {
    const ChannelMatrix a = small.samples[i].h / small.normalization;
    const ChannelMatrix b = large.samples[i].h / large.normalization;
    EXPECT_LT((a - b).norm() / a.norm(), 1e-12);
  }
}

TEST(Dataset, CorruptionAndMissingFilesAreIoErrors) {
  const auto dir = test::scratch_dir("dataset_corrupt");
  save_dataset(generate_site_dataset(profile_named("parc"), 5, {4, 2, 1.0}), dir / "d.bin");
  auto bytes = read_file_bytes(dir / "d.bin");
  bytes[bytes.size() / 2] ^= 0x40;
  write_file_bytes(dir / "d.bin", bytes);
  EXPECT_THROW(load_dataset(dir / "d.bin"), IoError);
  EXPECT_THROW(load_dataset(dir / "missing.bin"), IoError);
}

TEST(NoiseForSnr, DirectFormula) {
  EXPECT_DOUBLE_EQ(noise_for_snr(10.0, 20.0), 2.0);
  EXPECT_DOUBLE_EQ(noise_for_snr(0.0, 1.0), 1.0);
  EXPECT_THROW(noise_for_snr(10.0, 0.0), ConfigError);
}

TEST(PermuteUsers, IdentityInvolutionAndValidation) {
  Rng rng(3);
  const auto h = random_complex(rng, 8, 3);
  const std::vector<int> id{0, 1, 2}, swap{1, 0, 2};
  EXPECT_EQ(permute_users(h, id), h);
  EXPECT_EQ(permute_users(permute_users(h, swap), swap), h);
  EXPECT_EQ(permute_users(h, swap).col(0), h.col(1));
  EXPECT_THROW(permute_users(h, std::vector<int>{0, 0, 1}), ConfigError);
  EXPECT_THROW(permute_users(h, std::vector<int>{0, 1}), ConfigError);
  EXPECT_THROW(permute_users(h, std::vector<int>{0, 1, 3}), ConfigError);
}

TEST(PermuteUsers, SumRateIsSymmetric) {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const auto h = random_complex(rng, 8, 4);
    const auto w = random_complex(rng, 8, 4);
    std::vector<int> perm(4);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    const double a = sum_rate(h, w, 0.3);
    const double b = sum_rate(permute_users(h, perm), permute_users(w, perm), 0.3);
    EXPECT_LE(rel_err(a, b), 1e-12);
  }
}

TEST(SiteProfiles, DefaultsCoverTrainingAndHeldOutSites) {
  const auto all = default_site_profiles();
  ASSERT_EQ(all.size(), 10u);
  EXPECT_EQ(default_training_sites().size(), 7u);
  EXPECT_EQ(profile_named("ericsson").los_probability, 0.75);
  EXPECT_EQ(profile_named("decarie").los_probability, 0.50);
  EXPECT_EQ(profile_named("sainte-catherine").los_probability, 0.25);
  for (const auto& p : all) EXPECT_NO_THROW(p.validate());
}

TEST(SiteProfiles, ConfigRoundTripAndValidation) {
  const auto all = default_site_profiles();
  const auto back = parse_site_profiles(site_profiles_to_config(all));
  ASSERT_EQ(back.size(), all.size());
  for (std::size_t i = 0; i < all.size(); ++i) {
    EXPECT_EQ(back[i].site_id, all[i].site_id);
    EXPECT_EQ(back[i].los_probability, all[i].los_probability);
    EXPECT_EQ(back[i].max_paths, all[i].max_paths);
    EXPECT_EQ(back[i].seed, all[i].seed);
    EXPECT_EQ(back[i].ring.max_distance_m, all[i].ring.max_distance_m);
  }
  EXPECT_THROW(parse_site_profiles(ConfigFile::parse_string("[x]\nlos_probablity = 0.5\n")), ConfigError);
  EXPECT_THROW(parse_site_profiles(ConfigFile::parse_string("[x]\nlos_probability = 1.5\n")), ConfigError);
  EXPECT_THROW(parse_site_profiles(ConfigFile::parse_string("[x]\nmin_distance_m = 400\n")), ConfigError);
}

}  // namespace
}  // namespace papp
