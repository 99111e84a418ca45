#include "cli.hpp"

#include "papp/channel.hpp"
#include "papp/complexity.hpp"
#include "papp/config.hpp"
#include "papp/errors.hpp"
#include "papp/io.hpp"
#include "papp/mldg.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

namespace papp::cli {
namespace fs = std::filesystem;

std::string default_output_root() {
  const char* env = std::getenv("PAPP_OUTPUT_ROOT");
  return env && *env ? std::string(env) : std::string("runs");
}

namespace {

struct Common {
  std::string config_path;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
  int threads = 1;
};

// Reads settings with defaults from the user's file and records the value
// actually used, so the output directory gets a complete resolved copy.
class Resolver {
 public:
  explicit Resolver(ConfigFile in) : in_(std::move(in)) {}

  double num(const std::string& sec, const std::string& key, double def) {
    const ConfigSection* s = in_.find(sec);
    const double v = s ? s->get_double(key, def) : def;
    out_.section(sec).set(key, format_double(v));
    return v;
  }
  long long integer(const std::string& sec, const std::string& key, long long def) {
    const ConfigSection* s = in_.find(sec);
    const long long v = s ? s->get_int(key, def) : def;
    out_.section(sec).set(key, std::to_string(v));
    return v;
  }
  bool flag(const std::string& sec, const std::string& key, bool def) {
    const ConfigSection* s = in_.find(sec);
    const bool v = s ? s->get_bool(key, def) : def;
    out_.section(sec).set(key, v ? "true" : "false");
    return v;
  }
  std::string str(const std::string& sec, const std::string& key, const std::string& def) {
    const ConfigSection* s = in_.find(sec);
    std::string v = s ? s->get_string(key, def) : def;
    out_.section(sec).set(key, v);
    return v;
  }
  std::vector<double> nums(const std::string& sec, const std::string& key, const std::vector<double>& def) {
    const ConfigSection* s = in_.find(sec);
    std::vector<double> v = s ? s->get_doubles(key, def) : def;
    std::string text;
    for (std::size_t i = 0; i < v.size(); ++i) text += (i ? "," : "") + format_double(v[i]);
    out_.section(sec).set(key, text);
    return v;
  }
  std::vector<std::string> strs(const std::string& sec, const std::string& key, const std::vector<std::string>& def) {
    const ConfigSection* s = in_.find(sec);
    std::vector<std::string> v = s ? s->get_strings(key, def) : def;
    std::string text;
    for (std::size_t i = 0; i < v.size(); ++i) text += (i ? "," : "") + v[i];
    out_.section(sec).set(key, text);
    return v;
  }
  std::vector<int> ints(const std::string& sec, const std::string& key, const std::vector<int>& def) {
    std::vector<double> d(def.begin(), def.end());
    std::vector<int> out;
    for (double x : nums(sec, key, d)) {
      if (x != static_cast<int>(x)) throw ConfigError("[" + sec + "] " + key + ": expected integers");
      out.push_back(static_cast<int>(x));
    }
    return out;
  }
  /// Free-form key = value section (e.g. site = path maps).
  std::vector<std::pair<std::string, std::string>> map(const std::string& sec) {
    std::vector<std::pair<std::string, std::string>> out;
    const ConfigSection* s = in_.find(sec);
    if (!s) return out;
    for (const auto& entry : s->entries()) {
      const std::string v = s->get_string(entry.first, "");
      out.emplace_back(entry.first, v);
      out_.section(sec).set(entry.first, v);
    }
    return out;
  }

  /// Rejects sections and keys that were never read.
  void finish(const std::set<std::string>& sections) const {
    in_.reject_unknown_sections(sections);
    for (const auto& s : in_.sections()) s.reject_unknown();
  }

  ConfigFile& resolved() { return out_; }

 private:
  ConfigFile in_;
  ConfigFile out_;
};

ConfigFile load_config(const Common& c) {
  if (c.config_path.empty()) return {};
  return ConfigFile::load(c.config_path);
}

fs::path output_dir(const Common& c, const std::string& command) {
  fs::path dir = c.out.empty() ? fs::path(default_output_root()) / command : fs::path(c.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
  return dir;
}

std::uint64_t resolve_seed(Resolver& r, const std::string& sec, const Common& c, long long def) {
  const long long from_file = r.integer(sec, "seed", def);
  const std::uint64_t seed = c.seed ? *c.seed : static_cast<std::uint64_t>(from_file);
  r.resolved().section(sec).set("seed", std::to_string(seed));
  return seed;
}

void write_common(Resolver& r, const Common& c, int threads) {
  auto& s = r.resolved().section("run");
  s.set("deterministic", c.deterministic ? "true" : "false");
  s.set("threads", std::to_string(threads));
}

SystemConfig read_system(Resolver& r) {
  SystemConfig sc;
  sc.n_tx = static_cast<int>(r.integer("system", "n_tx", 64));
  sc.n_users = static_cast<int>(r.integer("system", "n_users", 4));
  sc.p_max = r.num("system", "p_max", 1.0);
  sc.validate();
  return sc;
}

ModelConfig read_model(Resolver& r, const SystemConfig& sc) {
  ModelConfig m;
  m.n_tx = sc.n_tx;
  m.n_users = sc.n_users;
  m.p_max = sc.p_max;
  m.conv_channels = static_cast<int>(r.integer("model", "conv_channels", m.conv_channels));
  m.kernel = static_cast<int>(r.integer("model", "kernel", m.kernel));
  m.teacher_hidden = r.ints("model", "teacher_hidden", m.teacher_hidden);
  m.student_hidden = r.ints("model", "student_hidden", m.student_hidden);
  m.dropout = r.num("model", "dropout", m.dropout);
  m.bn_momentum = r.num("model", "bn_momentum", m.bn_momentum);
  m.validate();
  return m;
}

RateTriple read_triple(Resolver& r, const std::string& group, const RateTriple& def) {
  return {r.num("rates", group + "_alpha", def.alpha), r.num("rates", group + "_beta", def.beta),
          r.num("rates", group + "_epsilon", def.epsilon)};
}

void write_text(const fs::path& path, const std::string& text) {
  write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void save_resolved(Resolver& r, const fs::path& dir) { r.resolved().save(dir / "resolved.ini"); }

Domain load_domain(const fs::path& data_dir, const std::string& site, double snr_db) {
  const fs::path ds_path = data_dir / (site + ".bin");
  const fs::path rates_path = data_dir / (site + ".rates");
  Domain d;
  d.data = load_dataset(ds_path);
  const std::uint32_t crc = file_crc32(ds_path);
  bool fresh = false;
  if (fs::exists(rates_path)) {
    const RateSidecar s = load_sidecar(rates_path);
    if (s.dataset_crc == crc) {
      for (std::size_t i = 0; i < s.snr_db.size(); ++i) {
        if (std::abs(s.snr_db[i] - snr_db) <= 1e-12 && s.rates[i].size() == d.data.size()) {
          d.r_wmmse = s.rates[i];
          fresh = true;
        }
      }
    }
  }
  if (!fresh) {
    std::cerr << "note: recomputing WMMSE reference rates for " << site << " at " << format_double(snr_db)
              << " dB (sidecar missing or stale)\n";
    d.r_wmmse = evaluate_wmmse(d.data, snr_db).per_sample;
  }
  return d;
}

void check_shape(const Dataset& d, const SystemConfig& sc) {
  if (d.config.n_tx != sc.n_tx || d.config.n_users != sc.n_users) {
    throw ConfigError("dataset '" + d.site_id + "' is " + std::to_string(d.config.n_tx) + "x" +
                      std::to_string(d.config.n_users) + ", run expects " + std::to_string(sc.n_tx) + "x" +
                      std::to_string(sc.n_users));
  }
}

ad::Checkpoint training_checkpoint(const PappModel& m, int epochs_done, std::uint64_t seed) {
  ad::Checkpoint c = m.to_checkpoint();
  c.metadata.emplace_back("epochs_done", std::to_string(epochs_done));
  c.metadata.emplace_back("seed", std::to_string(seed));
  return c;
}

// ---- gen-data ---------------------------------------------------------------

int cmd_gen_data(const Common& c) {
  Resolver r(load_config(c));
  const SystemConfig sc = read_system(r);
  const std::string profile_path = r.str("data", "profiles", "");
  std::vector<SiteProfile> profiles =
      profile_path.empty() ? default_site_profiles() : parse_site_profiles(ConfigFile::load(profile_path));
  std::vector<std::string> all_ids;
  for (const auto& p : profiles) all_ids.push_back(p.site_id);
  const auto sites = r.strs("data", "sites", all_ids);
  const long long samples = r.integer("data", "samples", 1000);
  const auto snrs = r.nums("data", "snr_db", {10.0, 20.0, 40.0});
  WmmseOptions wopt;
  wopt.tol = r.num("data", "wmmse_tol", wopt.tol);
  wopt.max_iter = static_cast<int>(r.integer("data", "wmmse_max_iter", wopt.max_iter));
  const std::uint64_t seed = resolve_seed(r, "data", c, 0);
  std::map<std::string, long long> per_site;
  for (const auto& [site, n] : r.map("samples")) {
    try {
      per_site[site] = std::stoll(n);
    } catch (const std::logic_error&) {
      throw ConfigError("[samples] " + site + ": expected an integer");
    }
  }
  write_common(r, c, 1);
  r.finish({"system", "data", "samples"});
  if (samples <= 0) throw ConfigError("[data] samples must be positive");
  if (snrs.empty()) throw ConfigError("[data] snr_db must list at least one SNR");
  for (const auto& [site, n] : per_site) {
    if (std::find(sites.begin(), sites.end(), site) == sites.end()) {
      throw ConfigError("[samples] names site '" + site + "' that is not generated");
    }
    if (n <= 0) throw ConfigError("[samples] " + site + " must be positive");
  }

  const fs::path dir = output_dir(c, "gen-data");
  nlohmann::ordered_json manifest;
  manifest["n_tx"] = sc.n_tx;
  manifest["n_users"] = sc.n_users;
  manifest["p_max"] = sc.p_max;
  manifest["seed"] = seed;
  manifest["snr_db"] = snrs;
  auto& files = manifest["files"] = nlohmann::ordered_json::array();
  for (const auto& site : sites) {
    auto it = std::find_if(profiles.begin(), profiles.end(), [&](const SiteProfile& p) { return p.site_id == site; });
    if (it == profiles.end()) throw ConfigError("unknown site '" + site + "'");
    SiteProfile profile = *it;
    if (seed != 0) profile.seed = derive_seed(seed, {profile.seed});
    const auto n = static_cast<std::size_t>(per_site.count(site) ? per_site[site] : samples);
    const Dataset ds = generate_site_dataset(profile, n, sc);
    const fs::path ds_path = dir / (site + ".bin");
    save_dataset(ds, ds_path);
    const std::uint32_t crc = file_crc32(ds_path);
    const fs::path rates_path = dir / (site + ".rates");
    save_sidecar(compute_sidecar(ds, crc, snrs, wopt), rates_path);
    files.push_back({{"file", ds_path.filename().string()},
                     {"kind", "dataset"},
                     {"site", site},
                     {"samples", n},
                     {"bytes", fs::file_size(ds_path)},
                     {"crc32", crc}});
    files.push_back({{"file", rates_path.filename().string()},
                     {"kind", "rates"},
                     {"site", site},
                     {"samples", n},
                     {"bytes", fs::file_size(rates_path)},
                     {"crc32", file_crc32(rates_path)}});
    std::cout << "wrote " << ds_path.string() << " (" << n << " samples)\n";
  }
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  save_resolved(r, dir);
  return kOk;
}

// ---- train ------------------------------------------------------------------

int cmd_train(const Common& c) {
  Resolver r(load_config(c));
  const SystemConfig sc = read_system(r);
  TrainConfig tc;
  tc.model = read_model(r, sc);
  const std::string mode = r.str("train", "mode", "backbone");
  const fs::path data_dir = r.str("train", "data_dir", (fs::path(default_output_root()) / "gen-data").string());
  const auto sites = r.strs("train", "sites", default_training_sites());
  tc.epochs = static_cast<int>(r.integer("train", "epochs", tc.epochs));
  tc.batch_size = static_cast<std::size_t>(r.integer("train", "batch_size", static_cast<long long>(tc.batch_size)));
  tc.steps_per_epoch = static_cast<std::size_t>(r.integer("train", "steps_per_epoch", 0));
  tc.meta_train_domains = static_cast<std::size_t>(r.integer("train", "meta_train_domains", 5));
  tc.meta_test_domains = static_cast<std::size_t>(r.integer("train", "meta_test_domains", 2));
  tc.lambda = r.num("train", "lambda", tc.lambda);
  tc.rate_threshold = r.num("train", "rate_threshold", tc.rate_threshold);
  tc.snr_db = r.num("train", "snr_db", tc.snr_db);
  tc.seed = resolve_seed(r, "train", c, 1);
  const std::string resume = r.str("train", "resume", "");
  const long long checkpoint_every = r.integer("train", "checkpoint_every", 0);
  tc.rates.teacher = read_triple(r, "teacher", tc.rates.teacher);
  tc.rates.feature = read_triple(r, "feature", tc.rates.feature);
  tc.rates.student = read_triple(r, "student", tc.rates.student);
  const double single_lr = r.num("single_site", "lr", 1e-2);
  const bool single_augment = r.flag("single_site", "augment", false);
  tc.threads = c.deterministic ? 1 : c.threads;
  write_common(r, c, tc.threads);
  r.finish({"system", "model", "train", "rates", "single_site", "run"});
  tc.validate();
  if (mode != "backbone" && mode != "single-site") throw ConfigError("[train] mode must be backbone or single-site");
  if (checkpoint_every < 0) throw ConfigError("[train] checkpoint_every must be non-negative");

  const fs::path dir = output_dir(c, "train");
  save_resolved(r, dir);

  PappModel model = PappModel::init(tc.model, tc.seed);
  int start_epoch = 0;
  if (!resume.empty()) {
    const ad::Checkpoint ck = ad::load_checkpoint(resume);
    model = PappModel::from_checkpoint(ck);
    if (ck.meta("seed") != std::to_string(tc.seed)) throw ConfigError("resume checkpoint was trained with another seed");
    start_epoch = std::stoi(ck.meta("epochs_done", "0"));
    if (start_epoch > tc.epochs) throw ConfigError("resume checkpoint is already past [train] epochs");
    if (model.config.n_tx != sc.n_tx || model.config.n_users != sc.n_users) {
      throw ConfigError("resume checkpoint does not match [system]");
    }
  }

  if (mode == "single-site") {
    if (sites.size() != 1) throw ConfigError("single-site mode needs exactly one entry in [train] sites");
    Dataset ds = load_dataset(data_dir / (sites[0] + ".bin"));
    check_shape(ds, sc);
    FineTuneConfig fc;
    fc.epochs = tc.epochs;
    fc.lr = single_lr;
    fc.batch_size = tc.batch_size;
    fc.augment = single_augment;
    fc.snr_db = tc.snr_db;
    fc.dropout = true;
    fc.seed = tc.seed;
    const FineTuneReport rep = train_single_site(model, ds, fc);
    std::ostringstream csv;
    csv << "epoch,loss\n";
    for (std::size_t e = 0; e < rep.epoch_loss.size(); ++e) csv << e << ',' << format_double(rep.epoch_loss[e]) << '\n';
    write_text(dir / "train_metrics.csv", csv.str());
    ad::save_checkpoint(training_checkpoint(model, tc.epochs, tc.seed), dir / "checkpoint.bin");
    std::cout << "single-site model written to " << (dir / "checkpoint.bin").string() << '\n';
    return kOk;
  }

  std::vector<Domain> domains;
  for (const auto& site : sites) {
    domains.push_back(load_domain(data_dir, site, tc.snr_db));
    check_shape(domains.back().data, sc);
  }
  const fs::path ckpt_dir = dir / "checkpoints";
  TrainReport report;
  try {
    report = train_backbone(model, domains, tc, start_epoch, [&](const PappModel& m, const EpochMetrics& e) {
      std::cout << "epoch " << e.epoch << ": teacher " << format_double(e.teacher_rate) << " student "
                << format_double(e.student_rate) << " bits/s/Hz\n";
      if (checkpoint_every > 0 && (e.epoch + 1) % checkpoint_every == 0) {
        ad::save_checkpoint(training_checkpoint(m, e.epoch + 1, tc.seed),
                            ckpt_dir / ("epoch_" + std::to_string(e.epoch + 1) + ".bin"));
      }
    });
  } catch (const NumericError& e) {
    write_text(dir / "divergence.txt", std::string("training aborted: ") + e.what() + "\n");
    ad::save_checkpoint(training_checkpoint(model, -1, tc.seed), dir / "diverged.bin");
    throw;
  }
  ad::save_checkpoint(training_checkpoint(model, tc.epochs, tc.seed), dir / "checkpoint.bin");
  report.write_csv(dir / "train_metrics.csv");
  report.write_json(dir / "train_report.json");
  if (report.isolation_violations > 0) {
    throw NumericError("student loss reached the feature extractor in " +
                       std::to_string(report.isolation_violations) + " passes");
  }
  std::cout << "backbone written to " << (dir / "checkpoint.bin").string() << '\n';
  return kOk;
}

// ---- finetune ---------------------------------------------------------------

int cmd_finetune(const Common& c) {
  Resolver r(load_config(c));
  const std::string ckpt = r.str("finetune", "checkpoint", "");
  const std::string data = r.str("finetune", "data", "");
  FineTuneConfig fc;
  fc.epochs = static_cast<int>(r.integer("finetune", "epochs", fc.epochs));
  fc.lr = r.num("finetune", "lr", fc.lr);
  fc.batch_size = static_cast<std::size_t>(r.integer("finetune", "batch_size", static_cast<long long>(fc.batch_size)));
  fc.augment = r.flag("finetune", "augment", fc.augment);
  fc.augment_factor =
      static_cast<std::size_t>(r.integer("finetune", "augment_factor", static_cast<long long>(fc.augment_factor)));
  fc.snr_db = r.num("finetune", "snr_db", fc.snr_db);
  fc.dropout = r.flag("finetune", "dropout", fc.dropout);
  fc.seed = resolve_seed(r, "finetune", c, 1);
  write_common(r, c, 1);
  r.finish({"finetune", "run"});
  fc.validate();
  if (ckpt.empty()) throw ConfigError("[finetune] checkpoint is required");
  if (data.empty()) throw ConfigError("[finetune] data is required");

  const fs::path dir = output_dir(c, "finetune");
  save_resolved(r, dir);
  PappModel model = PappModel::from_checkpoint(ad::load_checkpoint(ckpt));
  const Dataset local = load_dataset(data);
  check_shape(local, model.config.system());
  const FineTuneReport rep = fine_tune(model, local, fc);
  std::ostringstream csv;
  csv << "epoch,loss\n";
  for (std::size_t e = 0; e < rep.epoch_loss.size(); ++e) csv << e << ',' << format_double(rep.epoch_loss[e]) << '\n';
  write_text(dir / "finetune_metrics.csv", csv.str());
  ad::Checkpoint out = model.to_checkpoint();
  out.metadata.emplace_back("finetuned_on", local.site_id);
  ad::save_checkpoint(out, dir / "checkpoint.bin");
  std::cout << "fine-tuned on " << local.site_id << " (" << rep.samples_seen << " augmented samples)\n";
  return kOk;
}

// ---- eval -------------------------------------------------------------------

int cmd_eval(const Common& c) {
  Resolver r(load_config(c));
  const auto data = r.strs("eval", "data", {});
  const auto snrs = r.nums("eval", "snr_db", {10.0, 20.0, 40.0});
  const std::string backbone = r.str("eval", "checkpoint", "");
  WmmseOptions wopt;
  wopt.tol = r.num("eval", "wmmse_tol", wopt.tol);
  wopt.max_iter = static_cast<int>(r.integer("eval", "wmmse_max_iter", wopt.max_iter));
  const auto finetuned = r.map("finetuned");
  const auto single = r.map("single_site");
  write_common(r, c, 1);
  r.finish({"eval", "finetuned", "single_site", "run"});
  if (data.empty()) throw ConfigError("[eval] data must list at least one dataset file");
  if (snrs.empty()) throw ConfigError("[eval] snr_db must list at least one SNR");

  const fs::path dir = output_dir(c, "eval");
  save_resolved(r, dir);
  std::optional<PappModel> zero_shot;
  if (!backbone.empty()) zero_shot = PappModel::from_checkpoint(ad::load_checkpoint(backbone));
  auto lookup = [](const std::vector<std::pair<std::string, std::string>>& m, const std::string& site) {
    std::optional<PappModel> out;
    for (const auto& [k, v] : m)
      if (k == site) out = PappModel::from_checkpoint(ad::load_checkpoint(v));
    return out;
  };

  std::ostringstream csv;
  csv << "method,site,snr_db,mean_rate,std,n\n";
  auto row = [&](const std::string& method, const std::string& site, double snr, const EvalResult& e) {
    csv << method << ',' << site << ',' << format_double(snr) << ',' << format_double(e.mean) << ','
        << format_double(e.std) << ',' << e.per_sample.size() << '\n';
  };
  for (const auto& path : data) {
    const Dataset ds = load_dataset(path);
    const auto ft = lookup(finetuned, ds.site_id);
    const auto ss = lookup(single, ds.site_id);
    const std::initializer_list<const PappModel*> models{zero_shot ? &*zero_shot : nullptr, ft ? &*ft : nullptr,
                                                          ss ? &*ss : nullptr};
    for (const PappModel* m : models) {
      if (m) check_shape(ds, m->config.system());
    }
    for (double snr : snrs) {
      row("ZF", ds.site_id, snr, evaluate_zf(ds, snr));
      row("WMMSE", ds.site_id, snr, evaluate_wmmse(ds, snr, wopt));
      if (zero_shot) row("PaPP-zero-shot", ds.site_id, snr, evaluate(*zero_shot, ds, snr));
      if (ft) row("PaPP-FT", ds.site_id, snr, evaluate(*ft, ds, snr));
      if (ss) row("single-site", ds.site_id, snr, evaluate(*ss, ds, snr));
    }
  }
  write_text(dir / "results.csv", csv.str());
  std::cout << csv.str();
  return kOk;
}

// ---- bench-complexity ---------------------------------------------------------

int cmd_bench_complexity(const Common& c) {
  Resolver r(load_config(c));
  ComplexityParams p;
  p.n_tx = r.integer("complexity", "n_tx", p.n_tx);
  p.n_users = r.integer("complexity", "n_users", p.n_users);
  p.iterations = parse_count(r.str("complexity", "iterations", "12.5"));
  p.c_out = r.integer("complexity", "c_out", p.c_out);
  p.fc1 = r.integer("complexity", "fc1", p.fc1);
  p.fc2 = r.integer("complexity", "fc2", p.fc2);
  p.fc3 = r.integer("complexity", "fc3", p.fc3);
  p.fc4 = r.integer("complexity", "fc4", 0);
  write_common(r, c, 1);
  // c_in and kernel are flagged in the report when left at their defaults.
  const ConfigFile in = load_config(c);
  const ConfigSection* sec = in.find("complexity");
  p.default_c_in = !(sec && sec->has("c_in"));
  p.default_kernel = !(sec && sec->has("kernel"));
  p.c_in = r.integer("complexity", "c_in", p.c_in);
  p.kernel = r.integer("complexity", "kernel", p.kernel);
  r.finish({"complexity", "run"});

  const ComplexityReport rep = complexity_report(p);
  const fs::path dir = output_dir(c, "bench-complexity");
  save_resolved(r, dir);
  std::ostringstream csv, text;
  rep.write_csv(csv);
  rep.write_text(text);
  write_text(dir / "complexity.csv", csv.str());
  write_text(dir / "complexity.txt", text.str());
  std::cout << text.str();
  return kOk;
}

// ---- compare ------------------------------------------------------------------

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

int cmd_compare(const Common& c, const std::vector<std::string>& cli_inputs) {
  Resolver r(load_config(c));
  const auto inputs = r.strs("compare", "inputs", cli_inputs);
  write_common(r, c, 1);
  r.finish({"compare", "run"});
  if (inputs.empty()) throw ConfigError("compare needs at least one eval results.csv");

  struct Row {
    std::string run, method, site, snr, mean, std, n;
  };
  std::vector<Row> rows;
  std::map<std::string, int> label_uses;
  for (const auto& in : inputs) {
    const fs::path p(in);
    std::string label = p.parent_path().filename().string();
    if (label.empty() || label_uses[label]++ > 0) label = p.string();
    const auto csv = read_csv(p);
    if (csv.empty() || csv[0] != std::vector<std::string>{"method", "site", "snr_db", "mean_rate", "std", "n"}) {
      throw IoError(p.string() + " is not an eval results file");
    }
    for (std::size_t i = 1; i < csv.size(); ++i) {
      if (csv[i].size() != 6) throw IoError(p.string() + ": malformed row " + std::to_string(i + 1));
      rows.push_back({label, csv[i][0], csv[i][1], csv[i][2], csv[i][3], csv[i][4], csv[i][5]});
    }
  }
  std::map<std::tuple<std::string, std::string, std::string>, double> wmmse;
  for (const auto& row : rows) {
    if (row.method == "WMMSE") wmmse[{row.run, row.site, row.snr}] = std::stod(row.mean);
  }
  std::ostringstream out;
  out << "run,method,site,snr_db,mean_rate,std,n,ratio_vs_wmmse\n";
  for (const auto& row : rows) {
    out << row.run << ',' << row.method << ',' << row.site << ',' << row.snr << ',' << row.mean << ',' << row.std
        << ',' << row.n << ',';
    auto it = wmmse.find({row.run, row.site, row.snr});
    if (it != wmmse.end() && it->second != 0.0) out << format_double(std::stod(row.mean) / it->second);
    out << '\n';
  }
  const fs::path dir = output_dir(c, "compare");
  save_resolved(r, dir);
  write_text(dir / "compare.csv", out.str());
  std::cout << out.str();
  return kOk;
}

void add_common(CLI::App* app, Common& c) {
  app->add_option("-c,--config", c.config_path, "INI configuration file")->check(CLI::ExistingFile);
  app->add_option("-o,--out", c.out, "output directory (default: $PAPP_OUTPUT_ROOT/<command>)");
  app->add_option("--seed", c.seed, "override the configured seed");
  app->add_flag("--deterministic", c.deterministic, "serialize all parallel work");
  app->add_option("--threads", c.threads, "worker threads for per-domain passes")->check(CLI::PositiveNumber);
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"massive-MIMO precoding lab"};
  app.require_subcommand(1);
  Common common;
  std::vector<std::string> compare_inputs;
  struct Sub {
    const char* name;
    const char* help;
  };
  const Sub subs[] = {{"gen-data", "generate per-site channel datasets and WMMSE reference rates"},
                      {"train", "train the backbone (or a single-site model)"},
                      {"finetune", "self-supervised fine-tuning on local data"},
                      {"eval", "evaluate precoders on datasets across SNRs"},
                      {"bench-complexity", "closed-form multiplication counts"},
                      {"compare", "merge eval results across runs"}};
  std::map<std::string, CLI::App*> commands;
  for (const auto& s : subs) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    add_common(sub, common);
    commands[s.name] = sub;
  }
  commands["compare"]->add_option("inputs", compare_inputs, "eval results.csv files");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  if (!reversed.empty()) reversed.pop_back();  // program name
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (commands["gen-data"]->parsed()) return cmd_gen_data(common);
    if (commands["train"]->parsed()) return cmd_train(common);
    if (commands["finetune"]->parsed()) return cmd_finetune(common);
    if (commands["eval"]->parsed()) return cmd_eval(common);
    if (commands["bench-complexity"]->parsed()) return cmd_bench_complexity(common);
    if (commands["compare"]->parsed()) return cmd_compare(common, compare_inputs);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kConfig;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kIo;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kNumeric;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUnexpected;
  }
  return kUnexpected;
}

}  // namespace papp::cli
