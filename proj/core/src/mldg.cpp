#include "papp/mldg.hpp"

#include "papp/config.hpp"
#include "papp/errors.hpp"
#include "papp/io.hpp"
#include "papp/random.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <numeric>
#include <thread>

namespace papp {
namespace {

// Stream tags for derive_seed.
constexpr std::uint64_t kSplitStream = 0x5350;
constexpr std::uint64_t kBatchStream = 0x4241;
constexpr std::uint64_t kDropoutStream = 0x4452;
constexpr std::uint64_t kTuneStream = 0x4654;

void check_triple(const RateTriple& r, const char* group) {
  // beta = 0 is allowed: it switches the meta-test term off.
  if (!(r.alpha > 0.0 && r.beta >= 0.0 && r.epsilon > 0.0)) {
    throw ConfigError(std::string(group) + " learning rates: alpha and epsilon must be positive, beta non-negative");
  }
}

void require_finite(double v, const std::string& what) {
  if (!std::isfinite(v)) throw NumericError(what + " is not finite");
}

bool all_zero(const ad::GradSet& g) {
  for (const auto& t : g)
    for (double v : t.values())
      if (v != 0.0) return false;
  return true;
}

struct DomainPass {
  GroupGrads grads;
  double teacher_loss = 0.0, student_loss = 0.0, teacher_rate = 0.0, student_rate = 0.0;
  std::size_t degenerate = 0;
  bool isolated = true;
  std::vector<ModelGraph::StatsRecord> stats;
};

DomainPass domain_pass(const PappModel& model, const Batch& batch, std::uint64_t seed, const TrainConfig& config) {
  if (batch.h.empty()) throw ConfigError("empty domain batch");
  const double sigma2 = noise_for_snr(config.snr_db, config.model.p_max);
  ad::Tape tape;
  ModelGraph g(tape, model, {.training = true, .differentiable = true, .dropout_seed = seed});
  const ad::CVar h = channel_batch(tape, batch.h);
  const ad::Var f = g.features(batch.h);
  const Reconstruction rec = reconstruct_precoder(h, g.teacher(f), config.model.p_max);
  const ad::Var lt = teacher_loss(h, rec.w, sigma2);
  // The student reads a detached copy of the features: its loss must not
  // reach the feature extractor.
  const ad::CVar w = g.student(ad::detach(f));
  const ad::Var ls = student_loss(h, w, rec.w, sigma2, batch.r_wmmse, config.lambda, config.rate_threshold);

  DomainPass out;
  out.teacher_loss = lt.value().item();
  out.student_loss = ls.value().item();
  require_finite(out.teacher_loss, "teacher loss");
  require_finite(out.student_loss, "student loss");
  out.teacher_rate = -out.teacher_loss;
  out.student_rate = ad::mean(sum_rate_batch(h, {ad::detach(w.re), ad::detach(w.im)}, sigma2)).value().item();
  out.degenerate = static_cast<std::size_t>(std::count(rec.degenerate.begin(), rec.degenerate.end(), 1));

  tape.backward(ls);
  out.grads.student = ad::collect(tape, model.student, g.student_vars());
  out.isolated = all_zero(ad::collect(tape, model.feature, g.feature_vars()));
  tape.backward(lt);
  out.grads.feature = ad::collect(tape, model.feature, g.feature_vars());
  out.grads.teacher = ad::collect(tape, model.teacher, g.teacher_vars());
  out.stats = g.batch_stats();
  return out;
}

template <typename F>
void run_indexed(std::size_t n, int threads, F&& fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(threads, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

void update_group(ad::ParameterSet& params, const ad::GradSet& d, const ad::GradSet& d_test, double beta,
                  double epsilon) {
  ad::check_aligned(params, d);
  const bool has_test = !d_test.empty();
  if (has_test) ad::check_aligned(params, d_test);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& e = params[i];
    if (!e.trainable) continue;
    for (std::size_t j = 0; j < e.value.size(); ++j) {
      const double g = has_test ? d[i][j] + beta * d_test[i][j] : d[i][j];
      e.value[j] -= epsilon * g;
    }
  }
}

std::vector<Batch> batches_for(std::span<const Domain> domains, const std::vector<std::size_t>& idx, int epoch,
                               std::size_t step, std::size_t batch_size, std::uint64_t seed) {
  std::vector<Batch> out;
  for (std::size_t d : idx) out.push_back(draw_batch(domains[d], d, epoch, step, batch_size, seed));
  return out;
}

std::vector<std::uint64_t> seeds_for(const std::vector<std::size_t>& idx, std::uint64_t seed, int epoch,
                                     std::size_t step, int phase) {
  std::vector<std::uint64_t> out;
  for (std::size_t d : idx) out.push_back(dropout_seed(seed, epoch, step, d, phase));
  return out;
}

}  // namespace

void LearningRates::validate() const {
  check_triple(teacher, "teacher");
  check_triple(feature, "feature");
  check_triple(student, "student");
}

void TrainConfig::validate() const {
  model.validate();
  rates.validate();
  if (batch_size < 2) throw ConfigError("batch_size must be at least 2 (batch normalization)");
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (meta_train_domains == 0) throw ConfigError("meta-train set must contain at least one domain");
  if (lambda < 0.0) throw ConfigError("lambda must be non-negative");
  if (!(rate_threshold >= 0.0)) throw ConfigError("rate_threshold must be non-negative");
  if (threads < 1) throw ConfigError("threads must be at least 1");
}

GroupGrads GroupGrads::zeros(const PappModel& model) {
  return {ad::zeros_like(model.feature), ad::zeros_like(model.teacher), ad::zeros_like(model.student)};
}

DomainSplit split_domains(std::size_t n_domains, std::size_t n_train, std::size_t n_gen, Rng& rng) {
  if (n_domains < 2 && n_gen > 0) throw ConfigError("domain split needs at least two domains");
  if (n_train == 0) throw ConfigError("meta-train set must contain at least one domain");
  if (n_train + n_gen != n_domains) {
    throw ConfigError("split sizes " + std::to_string(n_train) + " + " + std::to_string(n_gen) +
                      " do not cover " + std::to_string(n_domains) + " domains");
  }
  std::vector<std::size_t> order(n_domains);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  DomainSplit s;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.gen.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.gen.begin(), s.gen.end());
  return s;
}

Batch draw_batch(const Domain& domain, std::size_t domain_index, int epoch, std::size_t step,
                 std::size_t batch_size, std::uint64_t seed) {
  const std::size_t n = domain.data.size();
  if (n == 0) throw ConfigError("domain '" + domain.data.site_id + "' is empty");
  if (domain.r_wmmse.size() != n) throw ConfigError("domain '" + domain.data.site_id + "' lacks reference rates");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, {kBatchStream, static_cast<std::uint64_t>(epoch), domain_index}));
  rng.shuffle(order);
  const std::size_t b = std::min(batch_size, n);
  Batch out;
  for (std::size_t i = 0; i < b; ++i) {
    const std::size_t idx = order[(step * b + i) % n];
    out.h.push_back(domain.data.samples[idx].h);
    out.r_wmmse.push_back(domain.r_wmmse[idx]);
  }
  return out;
}

std::uint64_t dropout_seed(std::uint64_t seed, int epoch, std::size_t step, std::size_t domain, int phase) {
  return derive_seed(seed, {kDropoutStream, static_cast<std::uint64_t>(epoch), step, domain,
                            static_cast<std::uint64_t>(phase)});
}

PhaseResult phase_gradients(const PappModel& model, std::span<const Batch> batches,
                            std::span<const std::uint64_t> seeds, const TrainConfig& config) {
  if (batches.empty()) throw ConfigError("phase needs at least one domain");
  if (seeds.size() != batches.size()) throw ConfigError("one dropout seed per domain is required");
  std::vector<DomainPass> passes(batches.size());
  run_indexed(batches.size(), config.threads,
              [&](std::size_t i) { passes[i] = domain_pass(model, batches[i], seeds[i], config); });

  // Accumulated in domain order whatever the thread count.
  PhaseResult r;
  r.grads = GroupGrads::zeros(model);
  const double w = 1.0 / static_cast<double>(batches.size());
  for (auto& p : passes) {
    ad::accumulate(r.grads.feature, p.grads.feature, w);
    ad::accumulate(r.grads.teacher, p.grads.teacher, w);
    ad::accumulate(r.grads.student, p.grads.student, w);
    r.teacher_loss += w * p.teacher_loss;
    r.student_loss += w * p.student_loss;
    r.teacher_rate += w * p.teacher_rate;
    r.student_rate += w * p.student_rate;
    r.degenerate += p.degenerate;
    ++r.isolation_checks;
    if (!p.isolated) ++r.isolation_violations;
    for (auto& s : p.stats) r.stats.push_back(std::move(s));
  }
  return r;
}

MetaTrainResult meta_train_phase(const PappModel& model, std::span<const Batch> batches,
                                 std::span<const std::uint64_t> seeds, const TrainConfig& config) {
  MetaTrainResult out{model, phase_gradients(model, batches, seeds, config)};
  const LearningRates& r = config.rates;
  ad::sgd_step(out.primed.teacher, out.phase.grads.teacher, r.teacher.alpha);
  ad::sgd_step(out.primed.feature, out.phase.grads.feature, r.feature.alpha);
  ad::sgd_step(out.primed.student, out.phase.grads.student, r.student.alpha);
  return out;
}

PhaseResult meta_test_phase(const PappModel& primed, std::span<const Batch> batches,
                            std::span<const std::uint64_t> seeds, const TrainConfig& config) {
  return phase_gradients(primed, batches, seeds, config);
}

void meta_update(PappModel& model, const GroupGrads& meta_train, const GroupGrads& meta_test,
                 const LearningRates& rates) {
  // The feature extractor moves along the teacher gradients only.
  update_group(model.teacher, meta_train.teacher, meta_test.teacher, rates.teacher.beta, rates.teacher.epsilon);
  update_group(model.feature, meta_train.feature, meta_test.feature, rates.feature.beta, rates.feature.epsilon);
  update_group(model.student, meta_train.student, meta_test.student, rates.student.beta, rates.student.epsilon);
}

void TrainReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "epoch,teacher_loss,student_loss,meta_test_teacher_loss,meta_test_student_loss,teacher_rate,"
         "student_rate,degenerate\n";
  for (const auto& e : epochs) {
    out << e.epoch << ',' << format_double(e.teacher_loss) << ',' << format_double(e.student_loss) << ','
        << format_double(e.meta_test_teacher_loss) << ',' << format_double(e.meta_test_student_loss) << ','
        << format_double(e.teacher_rate) << ',' << format_double(e.student_rate) << ',' << e.degenerate << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

void TrainReport::write_json(const std::filesystem::path& path) const {
  nlohmann::ordered_json j;
  j["seed"] = seed;
  j["start_epoch"] = start_epoch;
  j["isolation_checks"] = isolation_checks;
  j["isolation_violations"] = isolation_violations;
  j["final_checksum"] = final_checksum;
  j["wall_clock_s"] = wall_clock_s;
  auto& arr = j["epochs"] = nlohmann::ordered_json::array();
  for (const auto& e : epochs) {
    arr.push_back({{"epoch", e.epoch},
                   {"teacher_loss", e.teacher_loss},
                   {"student_loss", e.student_loss},
                   {"meta_test_teacher_loss", e.meta_test_teacher_loss},
                   {"meta_test_student_loss", e.meta_test_student_loss},
                   {"teacher_rate", e.teacher_rate},
                   {"student_rate", e.student_rate},
                   {"degenerate", e.degenerate}});
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

TrainReport train_backbone(PappModel& model, std::span<const Domain> domains, const TrainConfig& config,
                           int start_epoch, const EpochCallback& on_epoch) {
  config.validate();
  if (domains.size() < 2) throw ConfigError("backbone training needs at least two domains");
  if (config.meta_train_domains + config.meta_test_domains != domains.size()) {
    throw ConfigError("meta-train/meta-test sizes must add up to the " + std::to_string(domains.size()) +
                      " training domains");
  }
  std::size_t min_size = domains[0].data.size();
  for (const auto& d : domains) {
    if (d.data.size() == 0) throw ConfigError("domain '" + d.data.site_id + "' is empty");
    min_size = std::min(min_size, d.data.size());
  }
  const std::size_t steps =
      config.steps_per_epoch > 0 ? config.steps_per_epoch : std::max<std::size_t>(1, min_size / config.batch_size);

  const auto t0 = std::chrono::steady_clock::now();
  TrainReport report;
  report.seed = config.seed;
  report.start_epoch = start_epoch;
  for (int epoch = start_epoch; epoch < config.epochs; ++epoch) {
    Rng split_rng(derive_seed(config.seed, {kSplitStream, static_cast<std::uint64_t>(epoch)}));
    const DomainSplit split =
        split_domains(domains.size(), config.meta_train_domains, config.meta_test_domains, split_rng);
    EpochMetrics m;
    m.epoch = epoch;
    for (std::size_t step = 0; step < steps; ++step) {
      const auto train_batches = batches_for(domains, split.train, epoch, step, config.batch_size, config.seed);
      const auto train_seeds = seeds_for(split.train, config.seed, epoch, step, 0);
      MetaTrainResult mt = meta_train_phase(model, train_batches, train_seeds, config);
      PhaseResult test;
      if (!split.gen.empty()) {
        const auto gen_batches = batches_for(domains, split.gen, epoch, step, config.batch_size, config.seed);
        const auto gen_seeds = seeds_for(split.gen, config.seed, epoch, step, 1);
        test = meta_test_phase(mt.primed, gen_batches, gen_seeds, config);
      }
      meta_update(model, mt.phase.grads, test.grads, config.rates);
      apply_running_stats(model, mt.phase.stats);

      const double w = 1.0 / static_cast<double>(steps);
      m.teacher_loss += w * mt.phase.teacher_loss;
      m.student_loss += w * mt.phase.student_loss;
      m.meta_test_teacher_loss += w * test.teacher_loss;
      m.meta_test_student_loss += w * test.student_loss;
      m.teacher_rate += w * mt.phase.teacher_rate;
      m.student_rate += w * mt.phase.student_rate;
      m.degenerate += mt.phase.degenerate + test.degenerate;
      report.isolation_checks += mt.phase.isolation_checks + test.isolation_checks;
      report.isolation_violations += mt.phase.isolation_violations + test.isolation_violations;
    }
    report.epochs.push_back(m);
    if (on_epoch) on_epoch(model, m);
  }
  report.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  report.final_checksum = model.checksum();
  return report;
}

void FineTuneConfig::validate() const {
  if (epochs < 0) throw ConfigError("fine-tune epochs must be non-negative");
  if (!(lr >= 0.0)) throw ConfigError("fine-tune learning rate must be non-negative");
  if (batch_size < 2) throw ConfigError("fine-tune batch size must be at least 2");
  if (augment && augment_factor < 1) throw ConfigError("augment_factor must be at least 1");
}

FineTuneReport fine_tune(PappModel& model, const Dataset& local, const FineTuneConfig& config) {
  config.validate();
  if (local.size() == 0) throw ConfigError("fine-tuning dataset is empty");
  const ModelConfig& mc = model.config;
  const double sigma2 = noise_for_snr(config.snr_db, mc.p_max);
  const std::size_t n = local.size();
  const std::size_t b = std::min(config.batch_size, n);
  const std::size_t steps = std::max<std::size_t>(1, n / b);
  const std::size_t factor = config.augment ? config.augment_factor : 1;

  FineTuneReport report;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Rng rng(derive_seed(config.seed, {kTuneStream, static_cast<std::uint64_t>(epoch)}));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t step = 0; step < steps; ++step) {
      std::vector<ChannelMatrix> hs;
      hs.reserve(b * factor);
      for (std::size_t i = 0; i < b; ++i) {
        const ChannelMatrix& h = local.samples[order[(step * b + i) % n]].h;
        if (h.rows() != mc.n_tx || h.cols() != mc.n_users) throw ConfigError("fine-tuning data has the wrong shape");
        hs.push_back(h);
        for (std::size_t c = 1; c < factor; ++c) {
          std::vector<int> perm(static_cast<std::size_t>(mc.n_users));
          std::iota(perm.begin(), perm.end(), 0);
          rng.shuffle(perm);
          hs.push_back(permute_users(h, perm));
        }
      }
      ad::Tape tape;
      ModelGraph g(tape, model,
                   {.training = true,
                    .differentiable = true,
                    .dropout = config.dropout,
                    .with_teacher = false,
                    .dropout_seed = derive_seed(config.seed, {kTuneStream, static_cast<std::uint64_t>(epoch), step})});
      const ad::CVar h = channel_batch(tape, hs);
      const ad::CVar w = g.student(g.features(hs));
      const ad::Var loss = ad::neg(ad::mean(sum_rate_batch(h, w, sigma2)));
      const double lv = loss.value().item();
      require_finite(lv, "fine-tuning loss");
      tape.backward(loss);
      ad::sgd_step(model.feature, ad::collect(tape, model.feature, g.feature_vars()), config.lr);
      ad::sgd_step(model.student, ad::collect(tape, model.student, g.student_vars()), config.lr);
      apply_running_stats(model, g.batch_stats());
      epoch_loss += lv / static_cast<double>(steps);
      report.samples_seen += hs.size();
      ++report.steps;
    }
    report.epoch_loss.push_back(epoch_loss);
  }
  return report;
}

FineTuneReport train_single_site(PappModel& model, const Dataset& site, const FineTuneConfig& config) {
  if (site.size() == 0) throw ConfigError("single-site dataset is empty");
  return fine_tune(model, site, config);
}

EvalResult summarize_rates(std::vector<double> rates) {
  EvalResult r;
  r.per_sample = std::move(rates);
  if (r.per_sample.empty()) return r;
  const auto n = static_cast<double>(r.per_sample.size());
  for (double v : r.per_sample) r.mean += v;
  r.mean /= n;
  double ss = 0.0;
  for (double v : r.per_sample) ss += (v - r.mean) * (v - r.mean);
  r.std = std::sqrt(ss / n);
  return r;
}

EvalResult evaluate(const PappModel& model, const Dataset& data, double snr_db) {
  const double sigma2 = noise_for_snr(snr_db, model.config.p_max);
  constexpr std::size_t kChunk = 256;
  std::vector<double> rates;
  rates.reserve(data.size());
  for (std::size_t start = 0; start < data.size(); start += kChunk) {
    const std::size_t end = std::min(data.size(), start + kChunk);
    std::vector<ChannelMatrix> hs;
    for (std::size_t i = start; i < end; ++i) hs.push_back(data.samples[i].h);
    const auto ws = student_precoders(model, hs);
    for (std::size_t i = 0; i < hs.size(); ++i) rates.push_back(sum_rate(hs[i], ws[i], sigma2));
  }
  return summarize_rates(std::move(rates));
}

EvalResult evaluate_zf(const Dataset& data, double snr_db) {
  const double sigma2 = noise_for_snr(snr_db, data.config.p_max);
  std::vector<double> rates;
  rates.reserve(data.size());
  for (const auto& s : data.samples) rates.push_back(sum_rate(s.h, zf_precoder(s.h, data.config.p_max), sigma2));
  return summarize_rates(std::move(rates));
}

EvalResult evaluate_wmmse(const Dataset& data, double snr_db, const WmmseOptions& options) {
  const double sigma2 = noise_for_snr(snr_db, data.config.p_max);
  std::vector<double> rates;
  rates.reserve(data.size());
  for (const auto& s : data.samples) {
    rates.push_back(sum_rate(s.h, wmmse_solve(s.h, sigma2, data.config.p_max, options).w, sigma2));
  }
  return summarize_rates(std::move(rates));
}

const std::vector<double>& RateSidecar::at(double snr) const {
  for (std::size_t i = 0; i < snr_db.size(); ++i) {
    if (std::abs(snr_db[i] - snr) <= 1e-12) return rates[i];
  }
  throw ConfigError("rate sidecar has no entry for SNR " + format_double(snr) + " dB");
}

RateSidecar compute_sidecar(const Dataset& data, std::uint32_t dataset_crc, std::span<const double> snrs,
                            const WmmseOptions& options) {
  RateSidecar s;
  s.dataset_crc = dataset_crc;
  for (double snr : snrs) {
    s.snr_db.push_back(snr);
    s.rates.push_back(evaluate_wmmse(data, snr, options).per_sample);
  }
  return s;
}

namespace {
constexpr char kSidecarMagic[9] = "PAPPRATE";
constexpr std::uint32_t kSidecarVersion = 1;
}  // namespace

void save_sidecar(const RateSidecar& s, const std::filesystem::path& path) {
  ByteWriter w;
  w.put_magic(kSidecarMagic);
  w.put<std::uint32_t>(kSidecarVersion);
  w.put<std::uint32_t>(s.dataset_crc);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(s.snr_db.size()));
  const std::size_t n = s.rates.empty() ? 0 : s.rates[0].size();
  w.put<std::uint64_t>(n);
  for (std::size_t i = 0; i < s.snr_db.size(); ++i) {
    if (s.rates[i].size() != n) throw ConfigError("sidecar rows differ in length");
    w.put<double>(s.snr_db[i]);
    for (double r : s.rates[i]) w.put<double>(r);
  }
  w.seal();
  write_file_bytes(path, w.bytes());
}

RateSidecar load_sidecar(const std::filesystem::path& path) {
  ByteReader r(read_file_bytes(path), path.string());
  r.expect_magic(kSidecarMagic);
  if (r.get<std::uint32_t>() != kSidecarVersion) throw IoError(path.string() + ": unsupported sidecar version");
  RateSidecar s;
  s.dataset_crc = r.get<std::uint32_t>();
  const auto n_snr = r.get<std::uint32_t>();
  const auto n = r.get<std::uint64_t>();
  for (std::uint32_t i = 0; i < n_snr; ++i) {
    s.snr_db.push_back(r.get<double>());
    std::vector<double> row(n);
    for (auto& v : row) v = r.get<double>();
    s.rates.push_back(std::move(row));
  }
  r.expect_end();
  return s;
}

}  // namespace papp
