// opflow command-line tool: generate | train | eval | gradcheck.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <openssl/evp.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "opflow/opflow.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string version_stamp() { return std::string("opflow ") + OPFLOW_VERSION + " (git " + OPFLOW_GIT_REVISION + ")"; }

std::string sha256_file(const fs::path& path) {
  const std::vector<std::uint8_t> bytes = opflow::read_bytes(path);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw opflow::Error("SHA-256 failed for " + path.string());
  }
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return hex.str();
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw opflow::Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

/// Config section of a manifest file (or a bare config object).
json load_config(const fs::path& path, const std::string& command) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw UsageError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  if (j.contains("command") && j["command"] != command) {
    throw UsageError("config file was written by '" + j["command"].get<std::string>() + "', not '" + command + "'");
  }
  return j.contains("config") ? j["config"] : j;
}

json seed_block(std::uint64_t seed, std::initializer_list<const char*> streams) {
  json s{{"root", seed}};
  for (const char* name : streams) s["streams"][name] = opflow::derive_seed(seed, name);
  return s;
}

void write_manifest(const fs::path& dir, const std::string& command, const json& config, const json& seeds,
                    const std::vector<fs::path>& inputs) {
  json m{{"command", command}, {"version", version_stamp()}, {"config", config}, {"seeds", seeds}};
  m["inputs"] = json::object();
  for (const auto& p : inputs) m["inputs"][p.string()] = sha256_file(p);
  write_json(dir / "manifest.json", m);
}

// ---------------------------------------------------------------- generate

struct GenerateArgs {
  std::string pde;
  int q = 1;
  std::optional<double> nu;
  std::optional<double> lambda;
  std::optional<std::size_t> grid;
  std::size_t n_train = 100;
  std::size_t n_test = 20;
  std::optional<double> t_max;
  double save_dt = 0.01;
  double dt = 1e-4;
  std::uint64_t seed = 0;
  std::string out = "data";
  std::string config;
};

json resolve_generate(const GenerateArgs& a, const CLI::App& cmd) {
  const opflow::PdeKind kind = opflow::pde_kind_from_string(a.pde);
  const bool two_d = kind == opflow::PdeKind::burgers2d || kind == opflow::PdeKind::ns2d;
  if (kind == opflow::PdeKind::chafee_infante && a.nu) {
    throw UsageError("--nu does not apply to chafee-infante (its knob is --lambda; diffusion is fixed at 1)");
  }
  if (kind != opflow::PdeKind::chafee_infante && a.lambda) throw UsageError("--lambda only applies to chafee-infante");
  if (kind != opflow::PdeKind::gen_burgers && cmd.count("--q") > 0) throw UsageError("--q only applies to gen-burgers");
  return {{"pde", a.pde},
          {"q", a.q},
          {"nu", a.nu.value_or(two_d ? 0.001 : 0.1)},
          {"lambda", a.lambda.value_or(1.0)},
          {"grid", a.grid.value_or(two_d ? 64 : 128)},
          {"n_train", a.n_train},
          {"n_test", a.n_test},
          {"t_max", a.t_max.value_or(kind == opflow::PdeKind::burgers2d ? 1.15 : 1.0)},
          {"save_dt", a.save_dt},
          {"dt", a.dt},
          {"seed", a.seed}};
}

opflow::DatasetMeta meta_from(const json& c) {
  opflow::DatasetMeta m;
  m.pde.kind = opflow::pde_kind_from_string(c.at("pde").get<std::string>());
  m.pde.q = c.at("q").get<int>();
  m.pde.nu = c.at("nu").get<double>();
  m.pde.lambda = c.at("lambda").get<double>();
  m.grid = {m.pde.dim(), c.at("grid").get<std::size_t>()};
  m.n_train = c.at("n_train").get<std::size_t>();
  m.n_test = c.at("n_test").get<std::size_t>();
  m.t_max = c.at("t_max").get<double>();
  m.save_dt = c.at("save_dt").get<double>();
  m.dt = c.at("dt").get<double>();
  m.seed = c.at("seed").get<std::uint64_t>();
  return m;
}

int run_generate(const json& config, const fs::path& out) {
  const opflow::DatasetMeta meta = meta_from(config);
  try {
    meta.validate();
  } catch (const opflow::ConfigError& e) {
    throw UsageError(e.what());
  }
  const fs::path dir = out / opflow::to_string(meta.pde.kind);
  for (const char* split : {"train", "test"}) {
    const opflow::Dataset ds = opflow::generate_split(meta, split);
    opflow::write_dataset(dir / (std::string(split) + ".opfl"), ds);
    std::cout << "wrote " << (dir / (std::string(split) + ".opfl")).string() << " (" << ds.size() << " samples)\n";
  }
  write_manifest(dir, "generate", config, seed_block(meta.seed, {"data/train", "data/test"}), {});
  return 0;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string data;
  std::string preset = "desk";
  std::optional<int> P;
  std::string weights = "default";
  std::optional<std::string> activation;
  bool baseline = false;
  std::uint64_t seed = 0;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<double> lr;
  std::string out = "runs/train";
  std::string resume;
  std::string config;
};

opflow::LossWeights parse_weights(const std::string& s) {
  if (s == "default" || s == "3d" || s == "baseline") return opflow::LossWeights::from_preset(s);
  opflow::LossWeights w;
  char tail = 0;
  if (std::sscanf(s.c_str(), "%lf,%lf,%lf,%lf%c", &w.final, &w.initial, &w.inter, &w.comp, &tail) != 4) {
    throw UsageError("--weights expects default, 3d, or four comma-separated numbers");
  }
  return w;
}

json resolve_train(const TrainArgs& a) {
  opflow::Preset p = opflow::preset_from_name(a.preset);
  if (a.activation) p.fno.activation = opflow::activation_from_string(*a.activation);
  if (p.fno.activation != opflow::Activation::relu && p.fno.activation != opflow::Activation::gelu) {
    throw UsageError("--activation must be relu or gelu");
  }
  p.train.seed = a.seed;
  if (a.P) p.train.P = *a.P;
  p.train.weights = parse_weights(a.weights);
  if (a.baseline) {
    p.train.weights = opflow::LossWeights::baseline();
    p.train.P = 1;
  }
  if (a.epochs) p.train.epochs = *a.epochs;
  if (a.batch_size) p.train.batch_size = *a.batch_size;
  if (a.lr) p.train.adam.lr = *a.lr;
  return {{"data", a.data}, {"preset", p.name}, {"baseline", a.baseline}, {"fno", p.fno}, {"hyper", p.hyper},
          {"train", p.train}};
}

fs::path split_path(const fs::path& data, const std::string& split) {
  if (fs::is_regular_file(data)) return data;
  return data / (split + ".opfl");
}

int run_train(const json& config, const fs::path& out, const std::string& resume) {
  opflow::FnoConfig fno;
  opflow::HyperConfig hyper;
  opflow::TrainConfig tc;
  try {
    fno = config.at("fno").get<opflow::FnoConfig>();
    hyper = config.at("hyper").get<opflow::HyperConfig>();
    tc = config.at("train").get<opflow::TrainConfig>();
    tc.validate();
    fno.validate();
    hyper.validate();
  } catch (const opflow::ConfigError& e) {
    throw UsageError(e.what());
  } catch (const json::exception& e) {
    throw UsageError(std::string("malformed train config: ") + e.what());
  }
  const fs::path data = config.at("data").get<std::string>();
  const fs::path train_path = split_path(data, "train");
  const fs::path test_path = data / "test.opfl";
  if (!fs::exists(train_path)) throw UsageError("training data not found: " + train_path.string());
  const opflow::Dataset train_set = opflow::read_dataset(train_path);
  std::optional<opflow::Dataset> test_set;
  if (fs::is_directory(data) && fs::exists(test_path)) test_set = opflow::read_dataset(test_path);
  if (fno.d != train_set.meta.grid.d) throw UsageError("preset dimension does not match the dataset");
  fno.validate_for(train_set.meta.grid.n);

  opflow::TrainState state;
  std::vector<fs::path> inputs{train_path};
  if (test_set) inputs.push_back(test_path);
  if (!resume.empty()) {
    opflow::Checkpoint ck = opflow::read_checkpoint(resume);
    if (!(ck.state.model.fno == fno) || !(ck.state.model.hyper == hyper)) {
      throw UsageError("checkpoint " + resume + " was trained with a different model config");
    }
    state = std::move(ck.state);
    inputs.push_back(resume);
  } else {
    state = opflow::init_train_state(fno, hyper, tc);
  }

  fs::create_directories(out);
  const fs::path ckpt = out / "checkpoint.opfl";
  opflow::train(state, train_set, test_set ? &*test_set : nullptr, tc, [&](const opflow::TrainState& s) {
    const auto& e = s.history.epochs.back();
    std::printf("epoch %zu  final %.4g  initial %.4g  inter %.4g  comp %.4g  total %.4g", e.epoch, e.final, e.initial,
                e.inter, e.comp, e.total);
    if (!std::isnan(e.test_err)) std::printf("  test_err_T %.4g", e.test_err);
    std::printf("\n");
    std::fflush(stdout);
    if (e.epoch % tc.eval_every == 0 || e.epoch == tc.epochs) opflow::write_checkpoint(ckpt, s, tc);
  });
  state.history.write_csv(out / "history.csv");
  json timing = json::array();
  for (const auto& e : state.history.epochs) timing.push_back({{"epoch", e.epoch}, {"seconds", e.wall_seconds}});
  write_json(out / "timing.json", timing);
  write_manifest(out, "train", config, seed_block(tc.seed, {"init", "shuffle", "augmentation", "time-plans"}), inputs);
  return 0;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string model;
  std::string data;
  double sweep_dt = 0.01;
  std::optional<double> extrapolate_to;
  std::string reference;
  std::string out = "runs/eval";
  std::string config;
};

json resolve_eval(const EvalArgs& a) {
  return {{"model", a.model},
          {"data", a.data},
          {"sweep_dt", a.sweep_dt},
          {"extrapolate_to", a.extrapolate_to.value_or(1.0)},
          {"reference", a.reference}};
}

int run_eval(const json& config, const fs::path& out) {
  const fs::path model_path = config.at("model").get<std::string>();
  const fs::path data = split_path(config.at("data").get<std::string>(), "test");
  const std::string reference = config.at("reference").get<std::string>();
  for (const auto& p : {model_path, data}) {
    if (!fs::exists(p)) throw UsageError("input not found: " + p.string());
  }
  const opflow::Checkpoint ck = opflow::read_checkpoint(model_path);
  const opflow::Dataset ds = opflow::read_dataset(data);
  std::optional<opflow::Checkpoint> ref;
  std::vector<fs::path> inputs{model_path, data};
  if (!reference.empty()) {
    ref = opflow::read_checkpoint(reference);
    inputs.emplace_back(reference);
  }
  const double t_end = config.at("extrapolate_to").get<double>();
  const opflow::EvalReport report =
      opflow::sweep_intermediate(ck.state.model, ds, config.at("sweep_dt").get<double>(), t_end,
                                 ref ? &ref->state.model : nullptr, ck.config.horizon);
  opflow::emit(report, out);
  std::printf("Err(T): mean %.4g median %.4g over %zu samples\n", report.at_T.mean, report.at_T.median, report.at_T.n);
  if (report.energy_increases > 0) {
    std::printf("note: predicted energy increased at %zu (time, sample) points\n", report.energy_increases);
  }
  write_manifest(out, "eval", config, json{{"root", nullptr}}, inputs);
  return 0;
}

// ---------------------------------------------------------------- gradcheck

int run_gradcheck(const std::string& config) {
  if (config != "tiny") throw UsageError("gradcheck supports --config tiny only");
  bool ok = true;
  for (const auto& r : opflow::run_gradcheck_suite()) {
    std::printf("%s  %-22s rel.err %.3e\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.error);
    ok = ok && r.passed;
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"opflow: learned semigroup solution operators for time-dependent PDEs"};
  app.set_version_flag("--version", version_stamp());
  app.require_subcommand(1);

  GenerateArgs g;
  auto* gen = app.add_subcommand("generate", "solve random initial conditions and write train/test datasets");
  gen->add_option("--pde", g.pde, "gen-burgers | chafee-infante | burgers2d | ns2d");
  gen->add_option("--q", g.q, "nonlinearity exponent of gen-burgers (1..4)");
  gen->add_option("--nu", g.nu, "viscosity (default 0.1 in 1-D, 0.001 in 2-D)");
  gen->add_option("--lambda", g.lambda, "reaction coefficient of chafee-infante (default 1)");
  gen->add_option("--grid", g.grid, "points per axis, a power of two (default 128 in 1-D, 64 in 2-D)");
  gen->add_option("--n-train", g.n_train, "training samples");
  gen->add_option("--n-test", g.n_test, "test samples");
  gen->add_option("--t-max", g.t_max, "final time (default 1, burgers2d 1.15)");
  gen->add_option("--save-dt", g.save_dt, "snapshot spacing");
  gen->add_option("--dt", g.dt, "solver time step");
  gen->add_option("--seed", g.seed, "root seed");
  gen->add_option("--out", g.out, "data root; files go to <out>/<pde>/{train,test}.opfl");
  gen->add_option("--config", g.config, "manifest or config JSON replacing the flags above");

  TrainArgs t;
  auto* trn = app.add_subcommand("train", "train the time-conditioned operator");
  trn->add_option("--data", t.data, "dataset directory holding train.opfl and test.opfl");
  trn->add_option("--preset", t.preset, "desk | paper")->check(CLI::IsMember({"desk", "paper"}));
  trn->add_option("--P", t.P, "maximal number of composition intervals (1..4)");
  trn->add_option("--weights", t.weights, "default | 3d | w_final,w_initial,w_inter,w_comp");
  trn->add_option("--activation", t.activation, "relu | gelu");
  trn->add_flag("--baseline", t.baseline, "plain FNO trained at T only (weights 1,0,0,0)");
  trn->add_option("--seed", t.seed, "root seed");
  trn->add_option("--epochs", t.epochs, "override the preset's epoch count");
  trn->add_option("--batch-size", t.batch_size, "override the preset's batch size");
  trn->add_option("--lr", t.lr, "override the learning rate");
  trn->add_option("--out", t.out, "output directory");
  trn->add_option("--resume", t.resume, "continue from a checkpoint");
  trn->add_option("--config", t.config, "manifest or config JSON replacing the flags above");

  EvalArgs e;
  auto* evl = app.add_subcommand("eval", "evaluate a checkpoint against stored trajectories");
  evl->add_option("--model", e.model, "checkpoint file");
  evl->add_option("--data", e.data, "dataset directory (uses test.opfl) or .opfl file");
  evl->add_option("--sweep-dt", e.sweep_dt, "time spacing of the intermediate sweep");
  evl->add_option("--extrapolate-to", e.extrapolate_to, "last sweep time; past T uses unit steps plus a residual");
  evl->add_option("--reference", e.reference, "baseline checkpoint drawn as the FNO reference line");
  evl->add_option("--out", e.out, "output directory");
  evl->add_option("--config", e.config, "manifest or config JSON replacing the flags above");

  std::string grad_config = "tiny";
  auto* grd = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  grd->add_option("--config", grad_config, "configuration (tiny)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) {
      if (g.config.empty() && g.pde.empty()) throw UsageError("generate: --pde is required");
      const json cfg = g.config.empty() ? resolve_generate(g, *gen) : load_config(g.config, "generate");
      return run_generate(cfg, g.out);
    }
    if (trn->parsed()) {
      json cfg;
      if (!t.config.empty()) {
        cfg = load_config(t.config, "train");
        if (!t.data.empty()) cfg["data"] = t.data;
      } else {
        if (t.data.empty()) throw UsageError("train: --data is required");
        cfg = resolve_train(t);
      }
      return run_train(cfg, t.out, t.resume);
    }
    if (evl->parsed()) {
      json cfg;
      if (!e.config.empty()) {
        cfg = load_config(e.config, "eval");
      } else {
        if (e.model.empty() || e.data.empty()) throw UsageError("eval: --model and --data are required");
        cfg = resolve_eval(e);
      }
      return run_eval(cfg, e.out);
    }
    if (grd->parsed()) return run_gradcheck(grad_config);
  } catch (const UsageError& err) {
    std::cerr << "usage error: " << err.what() << "\n";
    return 2;
  } catch (const opflow::ConfigError& err) {
    std::cerr << "usage error: " << err.what() << "\n";
    return 2;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 2;
}
