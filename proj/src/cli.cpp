#include "adaor/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <csignal>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>

#include "adaor/errors.hpp"
#include "adaor/image_io.hpp"
#include "adaor/metrics.hpp"
#include "adaor/sampler.hpp"
#include "adaor/service.hpp"
#include "adaor/train.hpp"

namespace adaor::cli {

namespace {

constexpr std::uint64_t kEvalCaseStream = 0xE7A1;
constexpr std::uint64_t kEvalNoiseStream = 0xE7A2;
constexpr std::uint64_t kOracleStream = 0x0AC1E;
constexpr std::size_t kOracleCases = 64;
constexpr double kGradcheckTolerance = 1e-5;

using Echo = std::vector<std::pair<std::string, std::string>>;

std::string join(const std::vector<double>& xs, char sep = ' ') {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) s += sep;
    s += format_number(xs[i]);
  }
  return s;
}

std::string comment_lines(const Echo& echo) {
  std::string s;
  for (const auto& [k, v] : echo) s += "# " + k + "=" + v + "\n";
  return s;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path);
  return f;
}

double l2(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

double norm(std::span<const double> a) {
  double s = 0.0;
  for (double x : a) s += x * x;
  return std::sqrt(s);
}

double median(std::vector<double> xs) {
  xs.erase(std::remove_if(xs.begin(), xs.end(), [](double x) { return std::isnan(x); }), xs.end());
  if (xs.empty()) return std::nan("");
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

// Out-of-range arguments are usage errors, not runtime failures.
template <class F>
void check_args(F&& f) {
  try {
    f();
  } catch (const DomainError& e) {
    throw std::invalid_argument(e.what());
  }
}

struct Loaded {
  DenoiserNet net;
  std::string id;
};

Loaded load_checkpoint(const std::string& path) {
  const auto bytes = read_file(path);
  return {deserialize(bytes), checkpoint_id(bytes)};
}

// ---- train ----

struct TrainArgs {
  std::string task = "vec";
  std::optional<std::int64_t> steps;
  std::size_t batch = 64;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  double p_null = 0.10;
  double p_id = 0.10;
  std::string out;
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  TrainConfig cfg = TrainConfig::defaults(parse_task(a.task));
  if (a.steps) cfg.steps = *a.steps;
  cfg.batch = a.batch;
  cfg.lr = a.lr;
  cfg.seed = a.seed;
  cfg.mix = {a.p_null, a.p_id};
  cfg.validate();
  const std::string loss_path = a.out + ".loss.csv";
  err << comment_lines({{"command", "train"},
                        {"task", std::string(task_name(cfg.task))},
                        {"steps", std::to_string(cfg.steps)},
                        {"batch", std::to_string(cfg.batch)},
                        {"lr", format_number(cfg.lr)},
                        {"seed", std::to_string(cfg.seed)},
                        {"p_null", format_number(cfg.mix.p_null)},
                        {"p_id", format_number(cfg.mix.p_id)},
                        {"out", a.out},
                        {"loss_csv", loss_path}});
  const std::int64_t every = std::max<std::int64_t>(1, cfg.steps / 20);
  const TrainResult r = train(cfg, [&](std::int64_t s, double loss) {
    if (s % every == 0 || s + 1 == cfg.steps) err << "step " << s << " loss " << format_number(loss) << "\n";
  });
  save(r.net, a.out);
  write_loss_csv(loss_path, cfg, r.losses);
  out << "checkpoint " << a.out << " id " << checkpoint_id(read_file(a.out)) << "\n";
  return kExitOk;
}

// ---- sweep ----

struct SweepArgs {
  std::string ckpt;
  std::string instruction;
  std::string alphas = "0:1:6";
  double w = kDefaultGuidanceScale;
  std::string scheduler = "sqrt";
  std::string variant = "adaor";
  std::uint64_t seed = 0;
  std::uint64_t case_seed = 0;
  std::string png;
  std::string csv;
};

int cmd_sweep(const SweepArgs& a, std::ostream& out, std::ostream& err) {
  const Loaded ck = load_checkpoint(a.ckpt);
  const Task task(ck.net.config().task);
  const Instruction edit = task.instruction_by_name(a.instruction);
  if (!is_edit(edit)) throw std::invalid_argument("--instruction must be an edit, not " + a.instruction);
  SweepConfig cfg;
  cfg.alphas = parse_alphas(a.alphas);
  cfg.w = a.w;
  cfg.scheduler = parse_scheduler(a.scheduler);
  cfg.variant = parse_variant(a.variant);
  cfg.seed = a.seed;
  check_args([&] { cfg.validate(); });

  const Echo echo = {{"command", "sweep"},
                     {"ckpt", a.ckpt},
                     {"checkpoint_id", ck.id},
                     {"task", std::string(task.name())},
                     {"instruction", std::string(task.instruction_name(edit))},
                     {"variant", std::string(variant_name(cfg.variant))},
                     {"w", format_number(cfg.w)},
                     {"scheduler", std::string(scheduler_name(cfg.scheduler))},
                     {"alphas", join(cfg.alphas)},
                     {"steps", std::to_string(cfg.steps)},
                     {"seed", std::to_string(cfg.seed)},
                     {"case_seed", std::to_string(a.case_seed)},
                     {"embedding", "randproj"}};
  err << comment_lines(echo);

  const Case c = task.case_from_seed(a.case_seed);
  const Sweep s = sweep(ck.net, c.source, edit, cfg);

  std::ostringstream csv;
  csv << comment_lines(echo);
  csv << "alpha,max_pred_norm,l2_to_source,l2_to_reference,manifold_residual\n";
  for (std::size_t i = 0; i < s.alphas.size(); ++i) {
    const Sample ref = task.partial_edit(c, edit, s.alphas[i]);
    const double residual = task.kind() == TaskKind::disc ? disc::fit_params(s.outputs[i]).residual : std::nan("");
    csv << format_number(s.alphas[i]) << "," << format_number(s.max_pred_norm[i]) << ","
        << format_number(l2(s.outputs[i], c.source)) << "," << format_number(l2(s.outputs[i], ref)) << ","
        << format_number(residual) << "\n";
  }
  if (s.outputs.size() >= 3) {
    const Embedding emb = Embedding::randproj(task.dim());
    const auto dir = text_direction_proxy(task, edit, emb, 64);
    const MetricsReport r = evaluate_sweep(s, task.kind(), emb, dir);
    csv << metrics_csv_header() << "\n"
        << metrics_csv_row("case" + std::to_string(a.case_seed), cfg.variant, cfg.scheduler, cfg.w, s.alphas.size(), r)
        << "\n";
    for (const auto& f : r.flags) err << "metrics flag: " << f << "\n";
  } else {
    err << "metrics skipped: fewer than 3 alphas\n";
  }

  if (!a.csv.empty()) {
    open_out(a.csv) << csv.str();
  } else {
    out << csv.str();
  }
  if (!a.png.empty()) {
    std::vector<std::vector<double>> panels{c.source};
    panels.insert(panels.end(), s.outputs.begin(), s.outputs.end());
    image::write_file(a.png, image::grid_png(panels, image::layout_for(task.kind())));
  }
  return kExitOk;
}

// ---- eval ----

struct EvalArgs {
  std::string ckpt;
  std::size_t n_cases = 32;
  std::string variants = "cfg,adaor,cfgid,adaor-analytic";
  std::string report;
  std::uint64_t seed = 0;
};

std::string variant_label(Variant v, Scheduler s) {
  std::string l(variant_name(v));
  if (s != Scheduler::sqrt) l += ":" + std::string(scheduler_name(s));
  return l;
}

int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  if (a.n_cases < 1) throw std::invalid_argument("--n-cases must be >= 1");
  const Loaded ck = load_checkpoint(a.ckpt);
  const Task task(ck.net.config().task);
  const auto variants = parse_variant_list(a.variants);
  const Embedding emb = Embedding::randproj(task.dim());
  const auto alphas = SweepConfig::uniform_alphas(6);

  std::string vlist;
  for (const auto& [v, s] : variants) vlist += (vlist.empty() ? "" : ",") + variant_label(v, s);
  const Echo echo = {{"command", "eval"},          {"ckpt", a.ckpt},
                     {"checkpoint_id", ck.id},     {"task", std::string(task.name())},
                     {"n_cases", std::to_string(a.n_cases)}, {"variants", vlist},
                     {"seed", std::to_string(a.seed)},       {"w", format_number(kDefaultGuidanceScale)},
                     {"alphas", join(alphas)},     {"steps", std::to_string(flow::kDefaultSteps)},
                     {"embedding", "randproj"}};
  err << comment_lines(echo);

  std::array<std::vector<double>, kNumEdits> dirs;
  for (Instruction e : task.edit_instructions()) dirs[e.id] = text_direction_proxy(task, e, emb, 64);

  struct Agg {
    std::vector<double> ds, cv, nd, tc, res;
    std::size_t diverged = 0;
  };
  std::vector<Agg> agg(variants.size());
  std::ostringstream csv;
  csv << comment_lines(echo) << metrics_csv_header() << "\n";

  for (std::size_t i = 0; i < a.n_cases; ++i) {
    const Case c = task.case_from_seed(derive_seed(a.seed, kEvalCaseStream, i));
    for (Instruction e : task.edit_instructions()) {
      const std::string case_id = "c" + std::to_string(i) + "-" + std::string(task.instruction_name(e));
      for (std::size_t v = 0; v < variants.size(); ++v) {
        SweepConfig cfg;
        cfg.alphas = alphas;
        cfg.seed = derive_seed(a.seed, kEvalNoiseStream, i);
        cfg.variant = variants[v].first;
        cfg.scheduler = variants[v].second;
        MetricsReport r;
        try {
          r = evaluate_sweep(sweep(ck.net, c.source, e, cfg), task.kind(), emb, dirs[e.id]);
        } catch (const DivergenceError&) {
          r.delta_smooth = r.linearity_cv = r.norm_dir = r.traj_consistency = r.mean_step = std::nan("");
          r.flags.push_back("diverged");
          ++agg[v].diverged;
        }
        csv << metrics_csv_row(case_id, cfg.variant, cfg.scheduler, cfg.w, alphas.size(), r) << "\n";
        agg[v].ds.push_back(r.delta_smooth);
        agg[v].cv.push_back(r.linearity_cv);
        agg[v].nd.push_back(r.norm_dir);
        agg[v].tc.push_back(r.traj_consistency);
        agg[v].res.push_back(r.mean_residual());
      }
    }
  }

  csv << "# aggregate: medians over cases x instructions\n";
  csv << "variant,scheduler,n,n_diverged,median_delta_smooth,median_linearity_cv,median_norm_dir,"
         "median_traj_consistency,median_mean_residual\n";
  std::ostringstream table;
  table << std::left << std::setw(18) << "variant" << std::right << std::setw(12) << "delta_smooth" << std::setw(12)
        << "linearity" << std::setw(12) << "norm_dir" << std::setw(12) << "consistency" << std::setw(12)
        << "residual" << std::setw(10) << "diverged" << "\n";
  for (std::size_t v = 0; v < variants.size(); ++v) {
    const Agg& g = agg[v];
    const double m[5] = {median(g.ds), median(g.cv), median(g.nd), median(g.tc), median(g.res)};
    csv << variant_name(variants[v].first) << "," << scheduler_name(variants[v].second) << "," << g.ds.size() << ","
        << g.diverged;
    for (double x : m) csv << "," << format_number(x);
    csv << "\n";
    table << std::left << std::setw(18) << variant_label(variants[v].first, variants[v].second) << std::right
          << std::fixed << std::setprecision(4);
    for (double x : m) table << std::setw(12) << x;
    table << std::setw(10) << g.diverged << "\n";
  }
  if (!a.report.empty()) open_out(a.report) << csv.str();
  out << table.str();
  return kExitOk;
}

// ---- oracle-id ----

struct OracleArgs {
  std::string ckpt;
  std::string report;
  std::string t_grid = "0.3,0.5,0.7,0.9";
};

int cmd_oracle_id(const OracleArgs& a, std::ostream& out, std::ostream& err) {
  const Loaded ck = load_checkpoint(a.ckpt);
  const Task task(ck.net.config().task);
  const std::vector<double> grid = parse_alphas(a.t_grid);
  check_args([&] {
    for (double t : grid) (void)flow::TimePoint(t);
  });
  const Echo echo = {{"command", "oracle-id"}, {"ckpt", a.ckpt},
                     {"checkpoint_id", ck.id}, {"task", std::string(task.name())},
                     {"t_grid", join(grid)},   {"n_cases", std::to_string(kOracleCases)}};
  err << comment_lines(echo);

  std::ostringstream csv;
  csv << comment_lines(echo);
  csv << "t,case,cosine,rel_l2,learned_norm_times_t,analytic_norm_times_t,z_minus_source_norm,analytic_law_gap\n";
  std::ostringstream table;
  table << "t        median_cosine  median_rel_l2  max_law_gap\n";
  for (double t : grid) {
    std::vector<double> cosines, rels;
    double max_gap = 0.0;
    for (std::size_t i = 0; i < kOracleCases; ++i) {
      Rng rng(derive_seed(kOracleStream, i));
      const Case c = task.sample_case(rng);
      std::vector<double> eps(task.dim());
      for (double& e : eps) e = rng.normal();
      const flow::LatentState z = flow::noise_forward(c.source, flow::TimePoint(t), eps);
      const auto learned = ck.net.predict(z, c.source, kIdentityToken);
      const auto analytic = flow::analytical_id_prediction(z, c.source);
      double dot = 0.0;
      for (std::size_t j = 0; j < learned.size(); ++j) dot += learned[j] * analytic[j];
      const double cosine = dot / (norm(learned) * norm(analytic));
      const double rel = l2(learned, analytic) / norm(analytic);
      const double zc = l2(z.z, c.source);
      const double gap = std::abs(norm(analytic) * t - zc);
      max_gap = std::max(max_gap, gap);
      cosines.push_back(cosine);
      rels.push_back(rel);
      csv << format_number(t) << "," << i << "," << format_number(cosine) << "," << format_number(rel) << ","
          << format_number(norm(learned) * t) << "," << format_number(norm(analytic) * t) << "," << format_number(zc)
          << "," << format_number(gap) << "\n";
    }
    table << std::left << std::setw(9) << format_number(t) << std::right << std::fixed << std::setprecision(4)
          << std::setw(13) << median(cosines) << std::setw(15) << median(rels) << std::scientific
          << std::setprecision(2) << std::setw(13) << max_gap << std::defaultfloat << "\n";
  }
  if (!a.report.empty()) open_out(a.report) << csv.str();
  out << table.str();
  return kExitOk;
}

// ---- gradcheck ----

int cmd_gradcheck(std::uint64_t seed, std::ostream& out, std::ostream& err) {
  err << comment_lines({{"command", "gradcheck"}, {"seed", std::to_string(seed)}, {"tolerance", "1e-05"}});
  double worst = 0.0;
  for (TaskKind kind : {TaskKind::vec, TaskKind::disc}) {
    DenoiserNet net = DenoiserNet::init(seed, kind);
    // The disc net has ~250k weights; a seeded coordinate subset keeps this fast.
    const auto r = gradcheck_denoiser(net, seed, 4, kind == TaskKind::disc ? 64 : 0);
    out << task_name(kind) << " max_rel_error " << format_number(r.max_rel_error) << "\n";
    for (const auto& [name, e] : r.per_parameter) out << "  " << name << " " << format_number(e) << "\n";
    worst = std::max(worst, r.max_rel_error);
  }
  const bool ok = worst < kGradcheckTolerance;
  out << (ok ? "PASS" : "FAIL") << " max_rel_error " << format_number(worst) << "\n";
  return ok ? kExitOk : kExitRuntime;
}

// ---- serve ----

service::HttpServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

int cmd_serve(const std::string& ckpt, const std::string& host, int port, std::ostream& out, std::ostream& err) {
  Loaded ck = load_checkpoint(ckpt);
  const service::Service svc(std::move(ck.net), ck.id);
  err << comment_lines({{"command", "serve"},
                        {"ckpt", ckpt},
                        {"checkpoint_id", svc.checkpoint_id()},
                        {"task", std::string(svc.task().name())},
                        {"host", host},
                        {"port", std::to_string(port)}});
  service::HttpServer server(svc);
  const int bound = server.bind(host, port);
  out << "listening on http://" << host << ":" << bound << std::endl;
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  server.listen();
  g_server = nullptr;
  return kExitOk;
}

}  // namespace

std::vector<double> parse_alphas(const std::string& text) {
  auto number = [&](const std::string& s) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos == 0 || pos != s.size()) throw std::invalid_argument("not a number: '" + s + "' in '" + text + "'");
    return v;
  };
  if (text.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
    if (parts.size() != 3) throw std::invalid_argument("range must be START:END:COUNT, got '" + text + "'");
    const double count = number(parts[2]);
    if (count < 1 || count != std::floor(count)) throw std::invalid_argument("COUNT must be a positive integer");
    return SweepConfig::uniform_alphas(static_cast<int>(count), number(parts[0]), number(parts[1]));
  }
  std::vector<double> out;
  std::stringstream ss(text);
  for (std::string p; std::getline(ss, p, ',');) out.push_back(number(p));
  if (out.empty()) throw std::invalid_argument("empty list");
  return out;
}

std::vector<std::pair<Variant, Scheduler>> parse_variant_list(const std::string& text) {
  std::vector<std::pair<Variant, Scheduler>> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    const auto colon = item.find(':');
    const Variant v = parse_variant(item.substr(0, colon));
    const Scheduler s = colon == std::string::npos ? Scheduler::sqrt : parse_scheduler(item.substr(colon + 1));
    out.emplace_back(v, s);
  }
  if (out.empty()) throw std::invalid_argument("empty variant list");
  return out;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Adaptive-origin guidance lab: train, sample, evaluate, serve", "adaor"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "train a denoiser on synthetic paired edits");
  train_cmd->add_option("--task", ta.task, "vec or disc")->check(CLI::IsMember({"vec", "disc"}));
  train_cmd->add_option("--steps", ta.steps, "optimizer steps (default 5000 vec, 30000 disc)");
  train_cmd->add_option("--batch", ta.batch, "batch size")->capture_default_str();
  train_cmd->add_option("--lr", ta.lr, "Adam learning rate")->capture_default_str();
  train_cmd->add_option("--seed", ta.seed, "seed")->capture_default_str();
  train_cmd->add_option("--p-null", ta.p_null, "probability of the NULL instruction")->capture_default_str();
  train_cmd->add_option("--p-id", ta.p_id, "probability of the ID instruction")->capture_default_str();
  train_cmd->add_option("--out", ta.out, "checkpoint path; the loss CSV goes to PATH.loss.csv")->required();

  SweepArgs sa;
  auto* sweep_cmd = app.add_subcommand("sweep", "sample one case across edit strengths");
  sweep_cmd->add_option("--ckpt", sa.ckpt, "checkpoint")->required();
  sweep_cmd->add_option("--instruction", sa.instruction, "edit name")->required();
  sweep_cmd->add_option("--alphas", sa.alphas, "START:END:COUNT or a comma list")->capture_default_str();
  sweep_cmd->add_option("--w", sa.w, "guidance scale")->capture_default_str();
  sweep_cmd->add_option("--scheduler", sa.scheduler, "sqrt or linear")->capture_default_str();
  sweep_cmd->add_option("--variant", sa.variant, "adaor, cfg, cfgid or adaor-analytic")->capture_default_str();
  sweep_cmd->add_option("--seed", sa.seed, "noise seed")->capture_default_str();
  sweep_cmd->add_option("--case-seed", sa.case_seed, "source case seed")->capture_default_str();
  sweep_cmd->add_option("--png", sa.png, "grid PNG path");
  sweep_cmd->add_option("--csv", sa.csv, "CSV path (stdout when omitted)");

  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("eval", "metric suite over many cases, instructions and variants");
  eval_cmd->add_option("--ckpt", ea.ckpt, "checkpoint")->required();
  eval_cmd->add_option("--n-cases", ea.n_cases, "cases per instruction")->capture_default_str();
  eval_cmd->add_option("--variants", ea.variants, "comma list of variant[:scheduler]")->capture_default_str();
  eval_cmd->add_option("--report", ea.report, "report CSV path");
  eval_cmd->add_option("--seed", ea.seed, "seed")->capture_default_str();

  OracleArgs oa;
  auto* oracle_cmd = app.add_subcommand("oracle-id", "learned vs analytical identity prediction");
  oracle_cmd->add_option("--ckpt", oa.ckpt, "checkpoint")->required();
  oracle_cmd->add_option("--report", oa.report, "report CSV path");
  oracle_cmd->add_option("--t-grid", oa.t_grid, "comma list of times in (0, 1]")->capture_default_str();

  std::uint64_t gc_seed = 0;
  auto* grad_cmd = app.add_subcommand("gradcheck", "autodiff vs central differences on fresh denoisers");
  grad_cmd->add_option("--seed", gc_seed, "seed")->capture_default_str();

  std::string serve_ckpt, host = "127.0.0.1";
  int port = 8080;
  auto* serve_cmd = app.add_subcommand("serve", "HTTP API over a checkpoint");
  serve_cmd->add_option("--ckpt", serve_ckpt, "checkpoint")->required();
  serve_cmd->add_option("--host", host, "bind address")->capture_default_str();
  serve_cmd->add_option("--port", port, "port (0 picks a free one)")->capture_default_str()->check(
      CLI::Range(0, 65535));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train_cmd) return cmd_train(ta, out, err);
    if (*sweep_cmd) return cmd_sweep(sa, out, err);
    if (*eval_cmd) return cmd_eval(ea, out, err);
    if (*oracle_cmd) return cmd_oracle_id(oa, out, err);
    if (*grad_cmd) return cmd_gradcheck(gc_seed, out, err);
    if (*serve_cmd) return cmd_serve(serve_ckpt, host, port, out, err);
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace adaor::cli
