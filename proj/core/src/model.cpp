#include "papp/model.hpp"

#include "papp/config.hpp"
#include "papp/errors.hpp"
#include "papp/io.hpp"
#include "papp/random.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace papp {

using ad::CVar;
using ad::Shape;
using ad::Tensor;
using ad::Var;

std::size_t ModelConfig::feature_size() const {
  return static_cast<std::size_t>(conv_channels) * static_cast<std::size_t>(n_tx) *
         static_cast<std::size_t>(n_users);
}

void ModelConfig::validate() const {
  system().validate();
  if (conv_channels <= 0) throw ConfigError("conv_channels must be positive");
  if (kernel <= 0 || kernel % 2 == 0) throw ConfigError("kernel must be a positive odd integer");
  if (teacher_hidden.empty()) throw ConfigError("teacher needs at least one hidden layer");
  if (student_hidden.empty()) throw ConfigError("student needs at least one hidden layer");
  for (int h : teacher_hidden)
    if (h <= 0) throw ConfigError("teacher hidden sizes must be positive");
  for (int h : student_hidden)
    if (h <= 0) throw ConfigError("student hidden sizes must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (!(bn_momentum >= 0.0 && bn_momentum <= 1.0)) throw ConfigError("bn_momentum must lie in [0, 1]");
}

namespace {

constexpr int kFeatureGroup = 0;
constexpr int kTeacherGroup = 1;
constexpr int kStudentGroup = 2;
constexpr std::size_t kInputPlanes = 2;

Tensor glorot(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double bound = ad::glorot_bound(fan_in, fan_out);
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = rng.uniform(-bound, bound);
  return t;
}

void add_linear(ad::ParameterSet& p, const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
  p.add(name + ".weight", glorot({in, out}, in, out, rng));
  p.add(name + ".bias", Tensor({out}));
}

void add_batch_norm(ad::ParameterSet& p, const std::string& name, std::size_t n) {
  p.add(name + ".gamma", Tensor({n}, 1.0));
  p.add(name + ".beta", Tensor({n}));
  p.add(name + ".running_mean", Tensor({n}), false);
  p.add(name + ".running_var", Tensor({n}, 1.0), false);
}

std::string join_ints(const std::vector<int>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? "," : "") + std::to_string(xs[i]);
  return out;
}

std::vector<int> parse_ints(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
  return out;
}

const Var& var_of(const ad::ParameterSet& params, const std::vector<Var>& vars, const std::string& name) {
  return vars.at(params.index_of(name));
}

}  // namespace

PappModel PappModel::init(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  PappModel m;
  m.config = config;
  const auto k = static_cast<std::size_t>(config.kernel);
  const auto cout = static_cast<std::size_t>(config.conv_channels);

  Rng feature_rng(derive_seed(seed, {kFeatureGroup}));
  m.feature.add("conv.weight", glorot({cout, kInputPlanes, k, k}, kInputPlanes * k * k, cout * k * k, feature_rng));
  m.feature.add("conv.bias", Tensor({cout}));
  add_batch_norm(m.feature, "bn", cout);

  Rng teacher_rng(derive_seed(seed, {kTeacherGroup}));
  std::size_t in = config.feature_size();
  for (std::size_t i = 0; i < config.teacher_hidden.size(); ++i) {
    const auto out = static_cast<std::size_t>(config.teacher_hidden[i]);
    add_linear(m.teacher, "fc" + std::to_string(i + 1), in, out, teacher_rng);
    add_batch_norm(m.teacher, "bn" + std::to_string(i + 1), out);
    in = out;
  }
  const auto nu = static_cast<std::size_t>(config.n_users);
  add_linear(m.teacher, "v_head", in, nu, teacher_rng);
  add_linear(m.teacher, "u_head", in, 2 * nu, teacher_rng);
  add_linear(m.teacher, "mu_head", in, 1, teacher_rng);

  Rng student_rng(derive_seed(seed, {kStudentGroup}));
  in = config.feature_size();
  for (std::size_t i = 0; i < config.student_hidden.size(); ++i) {
    const auto out = static_cast<std::size_t>(config.student_hidden[i]);
    add_linear(m.student, "fc" + std::to_string(i + 1), in, out, student_rng);
    add_batch_norm(m.student, "bn" + std::to_string(i + 1), out);
    in = out;
  }
  const std::size_t n_out = static_cast<std::size_t>(config.n_tx) * nu;
  add_linear(m.student, "out_re", in, n_out, student_rng);
  add_linear(m.student, "out_im", in, n_out, student_rng);
  return m;
}

ad::Checkpoint PappModel::to_checkpoint() const {
  ad::Checkpoint c;
  c.metadata = {{"n_tx", std::to_string(config.n_tx)},
                {"n_users", std::to_string(config.n_users)},
                {"p_max", format_double(config.p_max)},
                {"conv_channels", std::to_string(config.conv_channels)},
                {"kernel", std::to_string(config.kernel)},
                {"teacher_hidden", join_ints(config.teacher_hidden)},
                {"student_hidden", join_ints(config.student_hidden)},
                {"dropout", format_double(config.dropout)},
                {"bn_momentum", format_double(config.bn_momentum)}};
  c.groups = {{"feature", feature}, {"teacher", teacher}, {"student", student}};
  return c;
}

PappModel PappModel::from_checkpoint(const ad::Checkpoint& ckpt) {
  PappModel m;
  try {
    m.config.n_tx = std::stoi(ckpt.meta("n_tx"));
    m.config.n_users = std::stoi(ckpt.meta("n_users"));
    m.config.p_max = std::stod(ckpt.meta("p_max"));
    m.config.conv_channels = std::stoi(ckpt.meta("conv_channels"));
    m.config.kernel = std::stoi(ckpt.meta("kernel"));
    m.config.teacher_hidden = parse_ints(ckpt.meta("teacher_hidden"));
    m.config.student_hidden = parse_ints(ckpt.meta("student_hidden"));
    m.config.dropout = std::stod(ckpt.meta("dropout"));
    m.config.bn_momentum = std::stod(ckpt.meta("bn_momentum"));
  } catch (const std::logic_error&) {
    throw IoError("checkpoint metadata is incomplete or malformed");
  }
  m.config.validate();
  // Shapes must match a freshly built model of the same configuration.
  const PappModel ref = init(m.config, 0);
  auto take = [&](const char* name, const ad::ParameterSet& like) {
    const ad::ParameterSet& g = ckpt.group(name);
    if (g.size() != like.size()) throw IoError(std::string("checkpoint group '") + name + "' has the wrong layout");
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (g[i].name != like[i].name || g[i].value.shape() != like[i].value.shape()) {
        throw IoError(std::string("checkpoint group '") + name + "' has the wrong layout");
      }
    }
    return g;
  };
  m.feature = take("feature", ref.feature);
  m.teacher = take("teacher", ref.teacher);
  m.student = take("student", ref.student);
  return m;
}

std::uint32_t PappModel::checksum() const {
  ByteWriter w;
  w.put<std::uint32_t>(feature.checksum());
  w.put<std::uint32_t>(teacher.checksum());
  w.put<std::uint32_t>(student.checksum());
  return crc32(w.bytes());
}

CVar channel_batch(ad::Tape& tape, std::span<const ChannelMatrix> hs) {
  if (hs.empty()) throw ConfigError("empty channel batch");
  const auto nt = static_cast<std::size_t>(hs[0].rows());
  const auto nu = static_cast<std::size_t>(hs[0].cols());
  Tensor re({hs.size(), nt, nu}), im({hs.size(), nt, nu});
  for (std::size_t b = 0; b < hs.size(); ++b) {
    if (static_cast<std::size_t>(hs[b].rows()) != nt || static_cast<std::size_t>(hs[b].cols()) != nu) {
      throw ConfigError("channel batch has mixed dimensions");
    }
    for (std::size_t i = 0; i < nt; ++i)
      for (std::size_t k = 0; k < nu; ++k) {
        const cdouble z = hs[b](static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
        re[(b * nt + i) * nu + k] = z.real();
        im[(b * nt + i) * nu + k] = z.imag();
      }
  }
  return {tape.constant(std::move(re)), tape.constant(std::move(im))};
}

Tensor channel_input(std::span<const ChannelMatrix> hs) {
  if (hs.empty()) throw ConfigError("empty channel batch");
  const auto nt = static_cast<std::size_t>(hs[0].rows());
  const auto nu = static_cast<std::size_t>(hs[0].cols());
  Tensor x({hs.size(), kInputPlanes, nt, nu});
  for (std::size_t b = 0; b < hs.size(); ++b) {
    if (static_cast<std::size_t>(hs[b].rows()) != nt || static_cast<std::size_t>(hs[b].cols()) != nu) {
      throw ConfigError("channel batch has mixed dimensions");
    }
    for (std::size_t i = 0; i < nt; ++i)
      for (std::size_t k = 0; k < nu; ++k) {
        const cdouble z = hs[b](static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
        x[((b * 2 + 0) * nt + i) * nu + k] = z.real();
        x[((b * 2 + 1) * nt + i) * nu + k] = z.imag();
      }
  }
  return x;
}

PrecodingMatrix precoder_at(const CVar& w, std::size_t b) {
  const Tensor& re = w.re.value();
  const Tensor& im = w.im.value();
  const std::size_t nt = re.dim(1), nu = re.dim(2);
  PrecodingMatrix out(static_cast<Eigen::Index>(nt), static_cast<Eigen::Index>(nu));
  for (std::size_t i = 0; i < nt; ++i)
    for (std::size_t k = 0; k < nu; ++k) {
      const std::size_t idx = (b * nt + i) * nu + k;
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = {re[idx], im[idx]};
    }
  return out;
}

ModelGraph::ModelGraph(ad::Tape& tape, const PappModel& model, Options options)
    : tape_(tape), model_(model), options_(options) {
  auto bind = [&](const ad::ParameterSet& p) {
    if (options_.differentiable) return ad::bind(tape_, p);
    std::vector<Var> vars;
    for (const auto& e : p.entries()) vars.push_back(tape_.constant(e.value));
    return vars;
  };
  feature_vars_ = bind(model.feature);
  if (options_.with_teacher) teacher_vars_ = bind(model.teacher);
  student_vars_ = bind(model.student);
}

Var ModelGraph::linear(const ad::ParameterSet& params, const std::vector<Var>& vars, const std::string& name,
                       Var x) {
  return ad::add_bias(ad::matmul(x, var_of(params, vars, name + ".weight")), var_of(params, vars, name + ".bias"));
}

Var ModelGraph::dense_block(int group, const ad::ParameterSet& params, const std::vector<Var>& vars, Var x,
                            int layer) {
  const std::string idx = std::to_string(layer);
  Var z = linear(params, vars, "fc" + idx, x);
  const std::string bn = "bn" + idx;
  ad::BatchStats stats;
  z = ad::batch_norm(z, var_of(params, vars, bn + ".gamma"), var_of(params, vars, bn + ".beta"),
                     params[params.index_of(bn + ".running_mean")].value,
                     params[params.index_of(bn + ".running_var")].value, options_.training,
                     options_.training ? &stats : nullptr);
  if (options_.training) stats_.push_back({group, params.index_of(bn + ".running_mean"), std::move(stats)});
  z = ad::relu(z);
  return ad::dropout(z, model_.config.dropout,
                     derive_seed(options_.dropout_seed, {static_cast<std::uint64_t>(group),
                                                         static_cast<std::uint64_t>(layer)}),
                     options_.training && options_.dropout);
}

Var ModelGraph::features(std::span<const ChannelMatrix> hs) {
  const ModelConfig& c = model_.config;
  for (const auto& h : hs) {
    if (h.rows() != c.n_tx || h.cols() != c.n_users) {
      throw ConfigError("channel is " + std::to_string(h.rows()) + "x" + std::to_string(h.cols()) +
                        ", model expects " + std::to_string(c.n_tx) + "x" + std::to_string(c.n_users));
    }
  }
  const ad::ParameterSet& p = model_.feature;
  const auto& vars = feature_vars_;
  Var x = tape_.constant(channel_input(hs));
  Var z = ad::conv2d(x, var_of(p, vars, "conv.weight"), var_of(p, vars, "conv.bias"));
  ad::BatchStats stats;
  z = ad::batch_norm(z, var_of(p, vars, "bn.gamma"), var_of(p, vars, "bn.beta"),
                     p[p.index_of("bn.running_mean")].value, p[p.index_of("bn.running_var")].value,
                     options_.training, options_.training ? &stats : nullptr);
  if (options_.training) stats_.push_back({kFeatureGroup, p.index_of("bn.running_mean"), std::move(stats)});
  return ad::relu(z);
}

TeacherOutputs ModelGraph::teacher(Var features) {
  if (!options_.with_teacher) throw ConfigError("teacher pass on a graph built without the teacher");
  const ModelConfig& c = model_.config;
  const ad::ParameterSet& p = model_.teacher;
  Var x = ad::flatten(features);
  for (std::size_t i = 0; i < c.teacher_hidden.size(); ++i) {
    x = dense_block(kTeacherGroup, p, teacher_vars_, x, static_cast<int>(i + 1));
  }
  const auto nu = static_cast<std::size_t>(c.n_users);
  TeacherOutputs out;
  out.v = ad::add_scalar(ad::softplus(linear(p, teacher_vars_, "v_head", x)), 1.0);
  Var u = ad::mul_scalar(linear(p, teacher_vars_, "u_head", x), 1.0 / c.n_tx);
  out.u = {ad::slice_cols(u, 0, nu), ad::slice_cols(u, nu, nu)};
  Var mu = ad::softplus(linear(p, teacher_vars_, "mu_head", x));
  out.mu = ad::reshape(mu, {mu.shape()[0]});
  return out;
}

CVar ModelGraph::student(Var features) {
  const ModelConfig& c = model_.config;
  const ad::ParameterSet& p = model_.student;
  Var x = ad::flatten(features);
  for (std::size_t i = 0; i < c.student_hidden.size(); ++i) {
    x = dense_block(kStudentGroup, p, student_vars_, x, static_cast<int>(i + 1));
  }
  const std::size_t batch = x.shape()[0];
  const auto nt = static_cast<std::size_t>(c.n_tx), nu = static_cast<std::size_t>(c.n_users);
  Var re = linear(p, student_vars_, "out_re", x);
  Var im = linear(p, student_vars_, "out_im", x);
  Var power = ad::sum_last(ad::add(ad::square(re), ad::square(im)));
  for (double v : power.value().values()) {
    if (!(v > 0.0)) throw DegenerateInputError("student produced an all-zero precoder; cannot normalize power");
  }
  Var scale = ad::sqrt(ad::rdiv_scalar(c.p_max, power));
  return {ad::reshape(ad::scale_rows(re, scale), {batch, nt, nu}),
          ad::reshape(ad::scale_rows(im, scale), {batch, nt, nu})};
}

void apply_running_stats(PappModel& model, const std::vector<ModelGraph::StatsRecord>& stats) {
  const double m = model.config.bn_momentum;
  for (const auto& rec : stats) {
    ad::ParameterSet& p = rec.group == kFeatureGroup ? model.feature
                          : rec.group == kTeacherGroup ? model.teacher
                                                       : model.student;
    Tensor& mean = p[rec.mean_index].value;
    Tensor& var = p[rec.mean_index + 1].value;
    for (std::size_t i = 0; i < mean.size(); ++i) {
      mean[i] = m * mean[i] + (1.0 - m) * rec.stats.mean[i];
      var[i] = m * var[i] + (1.0 - m) * rec.stats.var[i];
    }
  }
}

Reconstruction reconstruct_precoder(const CVar& h, const TeacherOutputs& aux, double p_max) {
  // w_k = conj(u_k) v_k (sum_j v_j |u_j|^2 h_j h_j^H + mu I)^{-1} h_k
  const Var d = ad::mul(aux.v, ad::cabs2(aux.u));
  const CVar hd{ad::scale_cols(h.re, d), ad::scale_cols(h.im, d)};
  CVar a = ad::cbmm(hd, ad::cherm(h));
  a.re = ad::add_scaled_identity(a.re, aux.mu);
  ad::SolveReport report;
  const CVar x = ad::hermitian_solve(a, h, &report);
  const Var cr = ad::mul(aux.v, aux.u.re);
  const Var ci = ad::neg(ad::mul(aux.v, aux.u.im));
  CVar w{ad::sub(ad::scale_cols(x.re, cr), ad::scale_cols(x.im, ci)),
         ad::add(ad::scale_cols(x.re, ci), ad::scale_cols(x.im, cr))};
  const Shape shape = w.re.shape();
  const Var power = ad::sum_last(ad::reshape(ad::cabs2(w), {shape[0], shape[1] * shape[2]}));
  const Var scale = ad::sqrt(ad::rdiv_scalar(p_max, ad::maximum_scalar(power, p_max)));
  return {{ad::scale_rows(w.re, scale), ad::scale_rows(w.im, scale)}, std::move(report.singular)};
}

Var sum_rate_batch(const CVar& h, const CVar& w, double sigma2) {
  // g[b, k, j] = h_k^H w_j
  const CVar g = ad::cbmm(ad::cherm(h), w);
  const Var p = ad::cabs2(g);
  const std::size_t batch = p.shape()[0], nu = p.shape()[1];
  Tensor mask({batch, nu, nu}, 1.0);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t k = 0; k < nu; ++k) mask[(b * nu + k) * nu + k] = 0.0;
  const Var signal = ad::diagonal(p);
  const Var interference = ad::add_scalar(ad::sum_last(ad::mul(p, h.re.tape()->constant(std::move(mask)))), sigma2);
  const Var rate = ad::log(ad::add_scalar(ad::div(signal, interference), 1.0));
  return ad::mul_scalar(ad::sum_last(rate), 1.0 / std::numbers::ln2);
}

Var teacher_loss(const CVar& h, const CVar& w_teacher, double sigma2) {
  return ad::neg(ad::mean(sum_rate_batch(h, w_teacher, sigma2)));
}

Var mse_batch(const CVar& w, const CVar& w_teacher) {
  const CVar diff{ad::sub(w_teacher.re, w.re), ad::sub(w_teacher.im, w.im)};
  const Shape s = w.re.shape();
  return ad::mul_scalar(ad::sum_last(ad::reshape(ad::cabs2(diff), {s[0], s[1] * s[2]})),
                        1.0 / static_cast<double>(s[1] * s[2]));
}

Var student_loss(const CVar& h, const CVar& w, const CVar& w_teacher, double sigma2,
                 std::span<const double> r_wmmse, double lambda, double threshold) {
  const std::size_t batch = w.re.shape()[0];
  if (r_wmmse.size() != batch) throw ConfigError("student_loss needs one WMMSE reference rate per sample");
  for (double r : r_wmmse) {
    if (!(r >= 0.0)) throw ConfigError("WMMSE reference rate must be non-negative");
  }
  ad::Tape& tape = *w.re.tape();
  const CVar target{ad::detach(w_teacher.re), ad::detach(w_teacher.im)};
  const Tensor teacher_rate = sum_rate_batch(h, target, sigma2).value();
  Tensor gate({batch});
  for (std::size_t b = 0; b < batch; ++b) gate[b] = teacher_rate[b] < threshold * r_wmmse[b] ? 0.0 : lambda;
  const Var rate_term = ad::mul(tape.constant(std::move(gate)), sum_rate_batch(h, w, sigma2));
  return ad::mean(ad::sub(mse_batch(w, target), rate_term));
}

std::vector<PrecodingMatrix> student_precoders(const PappModel& model, std::span<const ChannelMatrix> hs) {
  ad::Tape tape;
  ModelGraph graph(tape, model, {.training = false, .differentiable = false, .with_teacher = false});
  const CVar w = graph.student(graph.features(hs));
  std::vector<PrecodingMatrix> out;
  out.reserve(hs.size());
  for (std::size_t b = 0; b < hs.size(); ++b) out.push_back(precoder_at(w, b));
  return out;
}

}  // namespace papp
