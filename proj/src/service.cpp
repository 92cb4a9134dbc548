#include "adaor/service.hpp"

#include <httplib.h>

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <map>
#include <optional>

#include "adaor/image_io.hpp"

namespace adaor::service {

using nlohmann::json;

namespace {

constexpr std::size_t kTextDirCases = 64;

const std::array<std::string_view, 8> kRequestFields = {"instruction", "variant", "w",     "scheduler",
                                                        "alphas",      "seed",    "case_seed", "steps"};

struct SweepRequest {
  Instruction instruction;
  Variant variant = Variant::adaor;
  double w = kDefaultGuidanceScale;
  Scheduler scheduler = Scheduler::sqrt;
  std::vector<double> alphas;
  std::uint64_t seed = 0;
  std::uint64_t case_seed = 0;
  int steps = flow::kDefaultSteps;
};

Response json_response(int status, const json& j) { return {status, j.dump()}; }

Response error_response(int status, const std::string& message) {
  return json_response(status, {{"error", message}});
}

json image_json(std::span<const double> x, const image::Layout& layout) {
  return {{"values", std::vector<double>(x.begin(), x.end())},
          {"png", image::base64(image::sample_png(x, layout))}};
}

// nlohmann serializes NaN as null, which is what the UI expects for flagged metrics.
json metrics_json(const MetricsReport& r) {
  return {{"delta_smooth", r.delta_smooth},
          {"linearity_cv", r.linearity_cv},
          {"norm_dir", r.norm_dir},
          {"traj_consistency", r.traj_consistency},
          {"mean_step", r.mean_step},
          {"manifold_residual_per_alpha", r.manifold_residual_per_alpha},
          {"flags", r.flags}};
}

std::optional<std::uint64_t> read_seed(const json& body, const char* key, std::map<std::string, std::string>& errors) {
  if (!body.contains(key)) return 0;
  const json& v = body[key];
  if (!v.is_number_unsigned()) {
    errors[key] = "must be a nonnegative integer";
    return std::nullopt;
  }
  return v.get<std::uint64_t>();
}

std::optional<SweepRequest> parse_request(const Task& task, const json& body,
                                          std::map<std::string, std::string>& errors) {
  SweepRequest req;
  for (const auto& [key, _] : body.items()) {
    if (std::find(kRequestFields.begin(), kRequestFields.end(), key) == kRequestFields.end()) {
      errors[key] = "unknown field";
    }
  }

  if (!body.contains("instruction") || !body["instruction"].is_string()) {
    errors["instruction"] = "required string";
  } else {
    try {
      req.instruction = task.instruction_by_name(body["instruction"].get<std::string>());
      if (!is_edit(req.instruction)) errors["instruction"] = "NULL and ID are not user-selectable edits";
    } catch (const std::invalid_argument& e) {
      errors["instruction"] = e.what();
    }
  }

  if (body.contains("variant")) {
    try {
      if (!body["variant"].is_string()) throw std::invalid_argument("must be a string");
      req.variant = parse_variant(body["variant"].get<std::string>());
    } catch (const std::invalid_argument& e) {
      errors["variant"] = e.what();
    }
  }

  if (body.contains("scheduler")) {
    try {
      if (!body["scheduler"].is_string()) throw std::invalid_argument("must be a string");
      req.scheduler = parse_scheduler(body["scheduler"].get<std::string>());
    } catch (const std::invalid_argument& e) {
      errors["scheduler"] = e.what();
    }
  }

  if (body.contains("w")) {
    if (!body["w"].is_number() || !(body["w"].get<double>() >= 0.0) || !std::isfinite(body["w"].get<double>())) {
      errors["w"] = "must be a finite number >= 0";
    } else {
      req.w = body["w"].get<double>();
    }
  }

  if (!body.contains("alphas") || !body["alphas"].is_array() || body["alphas"].empty()) {
    errors["alphas"] = "required nonempty array of numbers in [0, 1]";
  } else if (body["alphas"].size() > Service::kMaxAlphas) {
    errors["alphas"] = "at most " + std::to_string(Service::kMaxAlphas) + " values";
  } else {
    for (const json& a : body["alphas"]) {
      if (!a.is_number() || !(a.get<double>() >= 0.0 && a.get<double>() <= 1.0)) {
        errors["alphas"] = "every value must be a number in [0, 1]";
        break;
      }
      req.alphas.push_back(a.get<double>());
    }
  }

  if (auto s = read_seed(body, "seed", errors)) req.seed = *s;
  if (auto s = read_seed(body, "case_seed", errors)) req.case_seed = *s;

  if (body.contains("steps")) {
    const json& k = body["steps"];
    if (!k.is_number_integer() || k.get<std::int64_t>() < 2 || k.get<std::int64_t>() > Service::kMaxSteps) {
      errors["steps"] = "must be an integer in [2, " + std::to_string(Service::kMaxSteps) + "]";
    } else {
      req.steps = k.get<int>();
    }
  }

  if (!errors.empty()) return std::nullopt;
  return req;
}

}  // namespace

Service::Service(DenoiserNet net, std::string checkpoint_id)
    : net_(std::move(net)),
      task_(net_.config().task),
      checkpoint_id_(std::move(checkpoint_id)),
      emb_(Embedding::randproj(task_.dim())) {
  for (Instruction e : task_.edit_instructions()) text_dirs_[e.id] = text_direction_proxy(task_, e, emb_, kTextDirCases);
}

Response Service::health() const {
  return json_response(200, {{"status", "ok"}, {"checkpoint_id", checkpoint_id_}, {"task", task_.name()}});
}

Response Service::meta() const {
  json vocab = json::array();
  for (Instruction e : task_.edit_instructions()) vocab.push_back(task_.instruction_name(e));
  json variants = json::array();
  for (Variant v : kAllVariants) variants.push_back(variant_name(v));
  const auto layout = image::layout_for(task_.kind());
  return json_response(
      200, {{"task", task_.name()},
            {"dim", task_.dim()},
            {"image", {{"width", layout.width}, {"height", layout.height}, {"lo", layout.lo}, {"hi", layout.hi}}},
            {"vocabulary", vocab},
            {"variants", variants},
            {"schedulers", {"sqrt", "linear"}},
            {"defaults",
             {{"variant", variant_name(Variant::adaor)},
              {"w", kDefaultGuidanceScale},
              {"scheduler", scheduler_name(Scheduler::sqrt)},
              {"alphas", SweepConfig::uniform_alphas(6)},
              {"steps", flow::kDefaultSteps}}},
            {"checkpoint_id", checkpoint_id_}});
}

Response Service::sweep(std::string_view body) const {
  const json parsed = json::parse(body, nullptr, false);
  if (parsed.is_discarded() || !parsed.is_object()) {
    return json_response(400, {{"error", "invalid request"}, {"fields", {{"body", "must be a JSON object"}}}});
  }
  std::map<std::string, std::string> errors;
  const auto req = parse_request(task_, parsed, errors);
  if (!req) return json_response(400, {{"error", "invalid request"}, {"fields", errors}});

  const Case c = task_.case_from_seed(req->case_seed);
  SweepConfig cfg;
  cfg.alphas = req->alphas;
  cfg.steps = req->steps;
  cfg.seed = req->seed;
  cfg.variant = req->variant;
  cfg.w = req->w;
  cfg.scheduler = req->scheduler;

  Sweep s;
  try {
    s = adaor::sweep(net_, c.source, req->instruction, cfg);
  } catch (const DivergenceError& e) {
    return json_response(422, {{"error", e.what()},
                               {"step", e.step()},
                               {"t", e.t()},
                               {"variant", variant_name(e.variant())},
                               {"alpha", e.alpha()}});
  }

  const auto layout = image::layout_for(task_.kind());
  json outputs = json::array(), refs = json::array();
  for (std::size_t i = 0; i < s.alphas.size(); ++i) {
    json o = image_json(s.outputs[i], layout);
    o["alpha"] = s.alphas[i];
    o["max_pred_norm"] = s.max_pred_norm[i];
    outputs.push_back(std::move(o));
    json r = image_json(task_.partial_edit(c, req->instruction, s.alphas[i]), layout);
    r["alpha"] = s.alphas[i];
    refs.push_back(std::move(r));
  }

  json metrics;
  if (s.outputs.size() >= 3) {
    metrics = metrics_json(evaluate_sweep(s, task_.kind(), emb_, text_dirs_[req->instruction.id]));
  } else {
    MetricsReport r;
    r.delta_smooth = r.linearity_cv = r.norm_dir = r.traj_consistency = r.mean_step = std::nan("");
    r.flags.push_back("fewer than 3 outputs");
    metrics = metrics_json(r);
  }
  metrics["embedding"] = embedding_name(emb_.kind());

  json config = {{"instruction", task_.instruction_name(req->instruction)},
                 {"variant", variant_name(cfg.variant)},
                 {"w", cfg.w},
                 {"scheduler", scheduler_name(cfg.scheduler)},
                 {"alphas", s.alphas},
                 {"seed", cfg.seed},
                 {"case_seed", req->case_seed},
                 {"steps", cfg.steps},
                 {"task", task_.name()},
                 {"checkpoint_id", checkpoint_id_}};
  return json_response(200, {{"config", config},
                             {"source", image_json(c.source, layout)},
                             {"outputs", outputs},
                             {"references", refs},
                             {"metrics", metrics}});
}

Response Service::handle(std::string_view method, std::string_view path, std::string_view body) const {
  if (path == "/api/health") return method == "GET" ? health() : error_response(405, "use GET");
  if (path == "/api/meta") return method == "GET" ? meta() : error_response(405, "use GET");
  if (path == "/api/sweep") return method == "POST" ? sweep(body) : error_response(405, "use POST");
  return error_response(404, "no route for " + std::string(path));
}

HttpServer::HttpServer(const Service& service) : server_(std::make_unique<httplib::Server>()) {
  server_->set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                                {"Access-Control-Allow-Headers", "Content-Type"}});
  auto route = [&service](const httplib::Request& req, httplib::Response& res) {
    const Response r = service.handle(req.method, req.path, req.body);
    res.status = r.status;
    res.set_content(r.body, "application/json");
  };
  server_->Get("/api/health", route);
  server_->Get("/api/meta", route);
  server_->Post("/api/sweep", route);
  server_->Options(".*", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
}

HttpServer::~HttpServer() = default;

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int p = server_->bind_to_any_port(host);
    if (p < 0) throw std::runtime_error("cannot bind " + host);
    return p;
  }
  if (!server_->bind_to_port(host, port)) {
    throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  }
  return port;
}

void HttpServer::listen() { server_->listen_after_bind(); }

void HttpServer::stop() { server_->stop(); }

}  // namespace adaor::service
