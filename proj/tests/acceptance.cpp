// End-to-end acceptance run: one PASS/FAIL line per criterion.
//
//   papp_acceptance [--strict] [--work DIR] [--epochs N]
//
// Exit status is 0 once every criterion has been evaluated; with --strict it
// is the number of failing criteria.

#include "cli.hpp"
#include "fd_cases.hpp"
#include "papp/complexity.hpp"
#include "papp/errors.hpp"
#include "papp/io.hpp"
#include "papp/mldg.hpp"
#include "reference.hpp"
#include "support.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

namespace papp {
namespace {

namespace fs = std::filesystem;
using test::random_complex;
using test::rel_err;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

void progress(const std::string& msg) {
  std::printf("  .. %s\n", msg.c_str());
  std::fflush(stdout);
}

// ---- 1: complexity ----------------------------------------------------------

Outcome complexity_vs_table() {
  const ComplexityReport r = complexity_report({});
  const double wmmse = to_double(r.row("WMMSE").count), zf = to_double(r.row("ZF").count);
  const double papp = to_double(r.row("PaPP").count), maml = to_double(r.row("MAML-CNN").count);
  const double e_w = rel_err(wmmse, 36.1e6), e_z = rel_err(zf, 8.4e3);
  const double e_p = rel_err(papp, 1.05e6), e_m = rel_err(maml, 3.77e6);
  return {e_w < 0.01 && e_z < 0.01 && e_p < 0.15 && e_m < 0.15,
          fmt("WMMSE %.0f (%.2f%%), ZF %.1f (%.2f%%), PaPP %.0f (%.1f%%), MAML-CNN %.0f (%.1f%%)", wmmse, 100 * e_w,
              zf, 100 * e_z, papp, 100 * e_p, maml, 100 * e_m)};
}

// ---- 2: WMMSE ---------------------------------------------------------------

Outcome wmmse_suite() {
  Rng rng(2);
  const WmmseOptions opt;
  const double snrs[] = {0.0, 10.0, 20.0};
  std::size_t non_monotone = 0, channels = 0, fixed_checked = 0, fixed_bad = 0;
  double worst_drop = 0.0, worst_fixed = 0.0;
  const int nts[] = {4, 16, 64}, nus[] = {2, 4};
  for (int i = 0; i < 1000; ++i) {
    const int nt = nts[i % 3], nu = nus[(i / 3) % 2];
    const double sigma2 = noise_for_snr(snrs[i % 3 == 0 ? (i / 6) % 3 : i % 3], 1.0);
    const auto h = random_complex(rng, nt, nu);
    const WmmseResult res = wmmse_solve(h, sigma2, 1.0, opt);
    const auto& t = res.state.rate_trace;
    ++channels;
    bool ok = total_power(res.w) <= 1.0 + 1e-9;
    for (std::size_t k = 1; k < t.size(); ++k) {
      const double drop = (t[k - 1] - t[k]) / std::max(1.0, t[k - 1]);
      worst_drop = std::max(worst_drop, drop);
      if (drop > 1e-9) ok = false;
    }
    if (!ok) ++non_monotone;
    if (i % 10 == 0 && res.state.iterations < opt.max_iter) {
      const auto r = wmmse_update_uv(h, res.w, sigma2);
      const auto next = wmmse_w_step(h, r.u, r.v, sigma2, 1.0);
      const double step = (next.w - res.w).norm() / res.w.norm();
      worst_fixed = std::max(worst_fixed, step);
      ++fixed_checked;
      if (step >= 10 * opt.tol) ++fixed_bad;
    }
  }

  double worst_single = 0.0;
  for (int i = 0; i < 200; ++i) {
    const int nt = nts[i % 3];
    const auto h = random_complex(rng, nt, 1);
    const double sigma2 = noise_for_snr(snrs[i % 3], 1.0), p_max = 0.5 + rng.uniform();
    const double got = sum_rate(h, wmmse_solve(h, sigma2, p_max, opt).w, sigma2);
    worst_single = std::max(worst_single, rel_err(got, std::log2(1.0 + p_max * h.squaredNorm() / sigma2)));
  }

  // 2x2: WMMSE against 10,000 random feasible precoders per channel, at the
  // default tolerance and, as a diagnostic, run to a tight tolerance.
  const WmmseOptions tight{.tol = 1e-12, .max_iter = 100000};
  std::size_t beaten = 0, beaten_tight = 0;
  const int n_channels = 20;
  for (int c = 0; c < n_channels; ++c) {
    const auto h = random_complex(rng, 2, 2);
    const double sigma2 = noise_for_snr(snrs[c % 3], 1.0);
    const double mine = sum_rate(h, wmmse_solve(h, sigma2, 1.0, opt).w, sigma2);
    const double mine_tight = sum_rate(h, wmmse_solve(h, sigma2, 1.0, tight).w, sigma2);
    double best = 0.0;
    for (int i = 0; i < 10000; ++i) {
      PrecodingMatrix w = random_complex(rng, 2, 2);
      w *= std::sqrt((i % 2 ? 1.0 : rng.uniform()) / total_power(w));
      best = std::max(best, sum_rate(h, w, sigma2));
    }
    if (best > mine * (1 + 1e-12)) ++beaten;
    if (best > mine_tight * (1 + 1e-12)) ++beaten_tight;
  }
  const bool pass = non_monotone == 0 && worst_single < 1e-6 && fixed_bad == 0 && fixed_checked > 0 && beaten == 0;
  return {pass, fmt("monotone %zu/%zu (worst relative drop %.1e), single-user err %.1e, fixed point %zu/%zu within "
                    "10 tol (worst %.1e), 2x2 dominant on %d/%d channels x 10000 precoders (%d/%d at tol 1e-12)",
                    channels - non_monotone, channels, std::max(worst_drop, 0.0), worst_single, fixed_checked - fixed_bad,
                    fixed_checked, worst_fixed, n_channels - static_cast<int>(beaten), n_channels,
                    n_channels - static_cast<int>(beaten_tight), n_channels)};
}

// ---- 3: ZF ------------------------------------------------------------------

Outcome zf_suite() {
  Rng rng(3);
  double worst = 0.0;
  const int nts[] = {4, 16, 64}, nus[] = {2, 4};
  for (int i = 0; i < 1000; ++i) {
    const int nt = nts[i % 3], nu = nus[(i / 3) % 2];
    const auto h = random_complex(rng, nt, nu);
    const auto w = zf_precoder(h, 1.0);
    for (int k = 0; k < nu; ++k)
      for (int j = 0; j < nu; ++j)
        if (j != k) worst = std::max(worst, std::abs(h.col(k).dot(w.col(j))) / (h.col(k).norm() * w.col(j).norm()));
  }
  std::vector<Dataset> sets;
  std::vector<ChannelMatrix> rayleigh;
  for (int i = 0; i < 500; ++i) rayleigh.push_back(random_complex(rng, 16, 4));
  for (const auto& p : default_site_profiles())
    if (p.site_id == "ericsson") sets.push_back(generate_site_dataset(p, 500, {16, 2, 1.0}));
  bool dominates = true;
  std::string rates;
  for (double snr : {0.0, 10.0, 20.0}) {
    const double sigma2 = noise_for_snr(snr, 1.0);
    double wm = 0.0, zf = 0.0;
    for (const auto& h : rayleigh) {
      wm += sum_rate(h, wmmse_solve(h, sigma2, 1.0).w, sigma2) / 500.0;
      zf += sum_rate(h, zf_precoder(h, 1.0), sigma2) / 500.0;
    }
    const double site_wm = evaluate_wmmse(sets[0], snr).mean, site_zf = evaluate_zf(sets[0], snr).mean;
    dominates = dominates && wm >= zf && site_wm >= site_zf;
    rates += fmt(" %g dB %.2f/%.2f, %.2f/%.2f;", snr, wm, zf, site_wm, site_zf);
  }
  return {worst < 1e-10 && dominates,
          fmt("worst normalized interference %.1e; WMMSE/ZF mean rate (Rayleigh 16x4, ericsson 16x2):", worst) + rates};
}

// ---- 4: gradients -----------------------------------------------------------

Outcome gradient_suite() {
  double worst = 0.0;
  std::string worst_name;
  std::size_t failed = 0, n = 0;
  for (const auto& c : test::primitive_fd_cases()) {
    const double e = test::fd_check(c.inputs, c.f);
    ++n;
    if (e >= c.tol) ++failed;
    if (e > worst) {
      worst = e;
      worst_name = c.name;
    }
  }
  // The detached branch must carry no gradient at all.
  ad::Tape t;
  const ad::Var x = t.variable(ad::Tensor({3}, 1.5));
  t.backward(ad::sum(ad::mul(ad::detach(x), ad::detach(x))));
  bool detach_ok = true;
  const ad::Tensor gx = t.grad(x);
  for (double g : gx.values()) detach_ok = detach_ok && g == 0.0;

  ModelConfig mc;
  mc.n_tx = 8;
  mc.n_users = 2;
  mc.conv_channels = 4;
  mc.teacher_hidden = {16, 16};
  mc.student_hidden = {8, 8, 16};
  const PappModel m = PappModel::init(mc, 41);
  Rng rng(41);
  std::vector<ChannelMatrix> hs;
  for (int i = 0; i < 4; ++i) hs.push_back(random_complex(rng, 8, 2));
  const double sigma2 = noise_for_snr(10.0, 1.0);
  const test::ModelLoss teacher = [&](ad::Tape& tp, ModelGraph& g) {
    const ad::CVar h = channel_batch(tp, hs);
    return teacher_loss(h, reconstruct_precoder(h, g.teacher(g.features(hs)), 1.0).w, sigma2);
  };
  const std::vector<double> r_ref{1.0, 1.0, 1.0, 1.0};
  const test::ModelLoss student = [&](ad::Tape& tp, ModelGraph& g) {
    const ad::CVar h = channel_batch(tp, hs);
    const ad::Var f = g.features(hs);
    return student_loss(h, g.student(ad::detach(f)), reconstruct_precoder(h, g.teacher(f), 1.0).w, sigma2, r_ref,
                        0.1);
  };
  const ModelGraph::Options opt{.training = true, .dropout_seed = 5};
  const double e_t = std::max(test::model_group_fd(m, test::ModelGroup::kTeacher, opt, teacher),
                              test::model_group_fd(m, test::ModelGroup::kFeature, opt, teacher));
  const double e_s = test::model_group_fd(m, test::ModelGroup::kStudent, opt, student);
  return {failed == 0 && detach_ok && e_t < 1e-4 && e_s < 1e-4,
          fmt("%zu/%zu primitive checks below 1e-4 (worst %.1e, %s), detach blocks flow: %s; 8x2 teacher loss %.1e, "
              "student loss %.1e",
              n - failed, n, worst, worst_name.c_str(), detach_ok ? "yes" : "no", e_t, e_s)};
}

// ---- 5 and 6: training --------------------------------------------------------

SiteProfile profile(const std::string& id) {
  for (const auto& p : default_site_profiles())
    if (p.site_id == id) return p;
  throw ConfigError("unknown site " + id);
}

Outcome plain_sgd_reference(std::size_t desk_isolation_checks, std::size_t desk_violations, bool desk_ran) {
  const auto sites = default_training_sites();
  const std::vector<std::string> five(sites.begin(), sites.begin() + 5);
  const auto domains = test::make_domains(five, 256, {16, 2, 1.0}, 20.0);
  TrainConfig cfg;
  cfg.model.n_tx = 16;
  cfg.model.n_users = 2;
  cfg.model.teacher_hidden = {128, 128};
  cfg.batch_size = 64;
  cfg.epochs = 3;
  cfg.meta_train_domains = 5;
  cfg.meta_test_domains = 0;
  cfg.seed = 55;
  cfg.rates.teacher.beta = cfg.rates.feature.beta = cfg.rates.student.beta = 0.0;
  const PappModel init = PappModel::init(cfg.model, 55);
  std::vector<std::uint32_t> trained_sums, reference_sums;
  PappModel trained = init, reference = init;
  const TrainReport rep = train_backbone(trained, domains, cfg, 0, [&](const PappModel& m, const EpochMetrics&) {
    trained_sums.push_back(m.checksum());
  });
  test::reference_sgd(reference, domains, cfg, 256 / 64, [&](const PappModel& m) { reference_sums.push_back(m.checksum()); });
  const bool equal = trained_sums == reference_sums && trained_sums.size() == 3;
  const bool isolated = rep.isolation_violations == 0 && desk_ran && desk_violations == 0;
  return {equal && isolated,
          fmt("checksums after each of 3 epochs %s (final %08x vs %08x); isolation violations %zu of %zu passes in the "
              "desk run%s",
              equal ? "equal" : "differ", trained_sums.empty() ? 0u : trained_sums.back(),
              reference_sums.empty() ? 0u : reference_sums.back(), desk_violations, desk_isolation_checks,
              desk_ran ? "" : " (desk run failed)")};
}

struct DeskResult {
  Outcome zero_shot, finetuned;
  std::size_t isolation_checks = 0, isolation_violations = 0;
  bool ran = false;
};

double median3(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

DeskResult desk_run(int epochs) {
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };
  const SystemConfig sc{16, 2, 1.0};
  const double snr = 20.0;
  const auto all_train = default_training_sites();
  const std::vector<std::string> train_sites(all_train.begin(), all_train.begin() + 5);
  const auto domains = test::make_domains(train_sites, 2000, sc, snr);
  const std::vector<std::string> held_out{"ericsson", "decarie"};
  std::vector<Dataset> held, held_test;
  for (const auto& id : held_out) {
    held.push_back(generate_site_dataset(profile(id), 500, sc));
    SiteProfile p = profile(id);
    p.seed += 1000;
    held_test.push_back(generate_site_dataset(p, 500, sc));
  }
  progress(fmt("desk data ready (%.0f s)", elapsed()));

  TrainConfig cfg;
  cfg.model.n_tx = 16;
  cfg.model.n_users = 2;
  cfg.model.teacher_hidden = {128, 128};
  cfg.batch_size = 64;
  cfg.epochs = epochs;
  cfg.meta_train_domains = 4;
  cfg.meta_test_domains = 1;
  cfg.rates.student.epsilon = 1.0;
  cfg.snr_db = snr;
  cfg.seed = 7;
  PappModel model = PappModel::init(cfg.model, cfg.seed);
  const TrainReport rep = train_backbone(model, domains, cfg, 0, [&](const PappModel& m, const EpochMetrics& e) {
    if ((e.epoch + 1) % 25 == 0) {
      progress(fmt("epoch %d: teacher %.2f student %.2f, held-out %.2f / %.2f (%.0f s)", e.epoch + 1, e.teacher_rate,
                   e.student_rate, evaluate(m, held[0], snr).mean, evaluate(m, held[1], snr).mean, elapsed()));
    }
  });

  DeskResult out;
  out.ran = true;
  out.isolation_checks = rep.isolation_checks;
  out.isolation_violations = rep.isolation_violations;

  bool zs_pass = true;
  std::string zs_detail;
  for (std::size_t s = 0; s < held.size(); ++s) {
    const double ratio = evaluate(model, held[s], snr).mean / evaluate_wmmse(held[s], snr).mean;
    zs_pass = zs_pass && ratio >= 0.70;
    zs_detail += fmt("%s %.1f%% ", held_out[s].c_str(), 100 * ratio);
  }
  out.zero_shot = {zs_pass, "zero-shot vs WMMSE at 20 dB: " + zs_detail + fmt("(%d epochs, %.0f s)", epochs, elapsed())};

  bool ft_pass = true;
  std::string ft_detail;
  for (std::size_t s = 0; s < held.size(); ++s) {
    const double wm = evaluate_wmmse(held_test[s], snr).mean;
    const double zero_shot = evaluate(model, held_test[s], snr).mean / wm;
    std::vector<double> ratios, in_sample;
    for (std::uint64_t seed : {1, 2, 3}) {
      PappModel tuned = model;
      FineTuneConfig fc;
      fc.epochs = 20;
      fc.lr = 0.01;
      fc.batch_size = 64;
      fc.augment_factor = 4;
      fc.snr_db = snr;
      fc.seed = seed;
      fine_tune(tuned, held[s], fc);
      ratios.push_back(evaluate(tuned, held_test[s], snr).mean / wm);
      in_sample.push_back(evaluate(tuned, held[s], snr).mean / evaluate_wmmse(held[s], snr).mean);
    }
    const double med = median3(ratios);
    ft_pass = ft_pass && med >= 0.90;
    ft_detail += fmt("%s %.1f%% (zero-shot %.1f%%, on the tuning samples %.1f%%) ", held_out[s].c_str(), 100 * med,
                     100 * zero_shot, 100 * median3(in_sample));
  }
  out.finetuned = {ft_pass, "median of 3 fine-tuning seeds on fresh samples: " + ft_detail +
                                fmt("(total %.0f s)", elapsed())};
  return out;
}

// ---- 7: permutation invariance ------------------------------------------------

Outcome permutation_invariance() {
  Rng rng(7);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const int nt = 2 + static_cast<int>(rng.uniform() * 63), nu = 2 + static_cast<int>(rng.uniform() * 5);
    const auto h = random_complex(rng, nt, nu);
    PrecodingMatrix w = i % 2 ? random_complex(rng, nt, nu) : mrt_precoder(h, 1.0);
    std::vector<int> perm(static_cast<std::size_t>(nu));
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    const double sigma2 = noise_for_snr(rng.uniform() * 40.0, 1.0);
    worst = std::max(worst, rel_err(sum_rate(h, w, sigma2), sum_rate(permute_users(h, perm), permute_users(w, perm), sigma2)));
  }
  return {worst <= 1e-12, fmt("worst relative change %.1e over 1000 instances", worst)};
}

// ---- 8: CLI reproducibility ---------------------------------------------------

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

std::vector<fs::path> files_under(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out.push_back(fs::relative(e.path(), dir));
  std::sort(out.begin(), out.end());
  return out;
}

Outcome cli_reproducibility(const fs::path& work) {
  fs::remove_all(work);
  fs::create_directories(work);
  const std::string sys = "[system]\nn_tx = 8\nn_users = 2\n";
  const std::string model = "[model]\nconv_channels = 4\nteacher_hidden = 16,16\nstudent_hidden = 8,8,16\n";
  write(work / "gen.ini", sys + "[data]\nsites = parc,cathcart,ericsson\nsamples = 64\nsnr_db = 10,20\n");
  std::size_t compared = 0, differing = 0;
  std::string first_diff;
  for (const char* run : {"a", "b"}) {
    const fs::path r = work / run;
    auto cli = [&](std::vector<std::string> args) {
      args.insert(args.begin(), "papp");
      args.push_back("--deterministic");
      const int code = cli::run(args);
      if (code != cli::kOk) throw NumericError("CLI run failed: " + args[1]);
    };
    cli({"gen-data", "-c", (work / "gen.ini").string(), "-o", (r / "data").string()});
    write(r / "train.ini", sys + model + "[train]\ndata_dir = " + (r / "data").string() +
                               "\nsites = parc,cathcart,ericsson\nmeta_train_domains = 2\nmeta_test_domains = 1\n"
                               "epochs = 3\nbatch_size = 16\ncheckpoint_every = 1\n");
    cli({"train", "-c", (r / "train.ini").string(), "-o", (r / "train").string()});
    write(r / "ft.ini", "[finetune]\ncheckpoint = " + (r / "train" / "checkpoint.bin").string() +
                            "\ndata = " + (r / "data" / "ericsson.bin").string() + "\nepochs = 2\nbatch_size = 16\n");
    cli({"finetune", "-c", (r / "ft.ini").string(), "-o", (r / "ft").string()});
    write(r / "eval.ini", "[eval]\ndata = " + (r / "data" / "ericsson.bin").string() + "\nsnr_db = 10,20\ncheckpoint = " +
                              (r / "train" / "checkpoint.bin").string() + "\n[finetuned]\nericsson = " +
                              (r / "ft" / "checkpoint.bin").string() + "\n");
    cli({"eval", "-c", (r / "eval.ini").string(), "-o", (r / "eval").string()});
    cli({"bench-complexity", "-o", (r / "complexity").string()});
    cli({"compare", (r / "eval" / "results.csv").string(), "-o", (r / "compare").string()});
  }
  const auto files = files_under(work / "a");
  for (const auto& f : files) {
    // Paths inside configs differ between the runs by construction; the
    // training report carries wall-clock time.
    const std::string ext = f.extension().string();
    if (ext == ".ini" || f.filename() == "train_report.json") continue;
    ++compared;
    if (!fs::exists(work / "b" / f) || read_file_bytes(work / "a" / f) != read_file_bytes(work / "b" / f)) {
      ++differing;
      if (first_diff.empty()) first_diff = f.string();
    }
  }
  return {differing == 0 && compared > 0,
          fmt("%zu/%zu artifacts byte-identical across two deterministic runs of every command", compared - differing,
              compared) +
              (first_diff.empty() ? "" : " (first difference: " + first_diff + ")")};
}

}  // namespace
}  // namespace papp

int main(int argc, char** argv) {
  using namespace papp;
  bool strict = false;
  int epochs = 150;
  fs::path work = fs::temp_directory_path() / "papp_acceptance";
  for (int i = 1; i < argc; ++i) {
    if (!std::strcmp(argv[i], "--strict")) strict = true;
    else if (!std::strcmp(argv[i], "--work") && i + 1 < argc) work = argv[++i];
    else if (!std::strcmp(argv[i], "--epochs") && i + 1 < argc) epochs = std::atoi(argv[++i]);
  }

  int failures = 0;
  auto report = [&](int n, const char* title, const Outcome& o) {
    std::printf("criterion %d (%s): %s  %s\n", n, title, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failures;
  };
  auto guarded = [](auto&& fn) -> Outcome {
    try {
      return fn();
    } catch (const std::exception& e) {
      return {false, std::string("threw: ") + e.what()};
    }
  };

  report(1, "complexity counts", guarded(complexity_vs_table));
  report(2, "WMMSE suite", guarded(wmmse_suite));
  report(3, "ZF suite", guarded(zf_suite));
  report(4, "gradient checks", guarded(gradient_suite));

  DeskResult desk;
  try {
    desk = desk_run(epochs);
  } catch (const std::exception& e) {
    desk.zero_shot = desk.finetuned = {false, std::string("desk run threw: ") + e.what()};
  }
  report(5, "plain SGD reference and isolation", guarded([&] {
           return plain_sgd_reference(desk.isolation_checks, desk.isolation_violations, desk.ran);
         }));
  report(6, "desk-scale zero-shot", desk.zero_shot);
  report(6, "desk-scale fine-tuned", desk.finetuned);
  report(7, "permutation invariance", guarded(permutation_invariance));
  report(8, "CLI reproducibility", guarded([&] { return cli_reproducibility(work); }));
  std::printf("%d criterion line(s) failed\n", failures);
  return strict ? failures : 0;
}
