#include "adaor/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "adaor/errors.hpp"
#include "adaor/rng.hpp"

namespace adaor {

using nlohmann::json;

std::array<double, kTimeDim> time_embedding(double t) {
  std::array<double, kTimeDim> e{};
  for (std::size_t k = 0; k < kTimeDim / 2; ++k) {
    const double freq = std::ldexp(std::numbers::pi, static_cast<int>(k));
    e[2 * k] = std::sin(freq * t);
    e[2 * k + 1] = std::cos(freq * t);
  }
  return e;
}

ModelConfig ModelConfig::for_task(TaskKind task, std::optional<std::size_t> hidden) {
  ModelConfig cfg;
  cfg.task = task;
  cfg.dim = Task(task).dim();
  cfg.hidden = hidden.value_or(task == TaskKind::disc ? 256 : 128);
  return cfg;
}

namespace {

std::vector<std::pair<std::string, std::vector<std::size_t>>> layout(const ModelConfig& cfg) {
  std::vector<std::pair<std::string, std::vector<std::size_t>>> out;
  out.push_back({"embedding", {kVocabSize, kEmbedDim}});
  std::size_t in = cfg.input_dim();
  for (std::size_t l = 0; l <= kDepth; ++l) {
    const std::size_t o = l == kDepth ? cfg.dim : cfg.hidden;
    out.push_back({"fc" + std::to_string(l) + ".weight", {in, o}});
    out.push_back({"fc" + std::to_string(l) + ".bias", {o}});
    in = o;
  }
  return out;
}

}  // namespace

DenoiserNet DenoiserNet::init(std::uint64_t seed, TaskKind task, std::optional<std::size_t> hidden) {
  DenoiserNet net;
  net.cfg_ = ModelConfig::for_task(task, hidden);
  Rng rng(seed);
  for (auto& [name, shape] : layout(net.cfg_)) {
    nd::Tensor t(shape, 0.0);
    if (name == "embedding") {
      for (double& v : t.data()) v = 0.02 * rng.normal();
    } else if (shape.size() == 2) {
      const double sd = 1.0 / std::sqrt(static_cast<double>(shape[0]));
      for (double& v : t.data()) v = sd * rng.normal();
    }
    net.params_.emplace_back(name, std::move(t));
  }
  return net;
}

std::vector<nd::Parameter*> DenoiserNet::parameters() {
  std::vector<nd::Parameter*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

std::size_t DenoiserNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

bool DenoiserNet::operator==(const DenoiserNet& other) const {
  if (cfg_.task != other.cfg_.task || cfg_.dim != other.cfg_.dim || cfg_.hidden != other.cfg_.hidden ||
      params_.size() != other.params_.size() || !(echo_ == other.echo_)) {
    return false;
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& a = params_[i].value;
    const auto& b = other.params_[i].value;
    if (a.shape() != b.shape() || std::memcmp(a.raw(), b.raw(), a.size() * sizeof(double)) != 0) return false;
  }
  return true;
}

void DenoiserNet::build_input(std::span<const PredictQuery> queries, std::vector<double>& input) const {
  const std::size_t d = cfg_.dim, in = cfg_.input_dim();
  input.resize(queries.size() * in);
  const nd::Tensor& emb = params_.front().value;
  for (std::size_t r = 0; r < queries.size(); ++r) {
    const PredictQuery& q = queries[r];
    if (q.z.size() != d || q.source.size() != d) {
      throw DimensionError("predict: expected dim " + std::to_string(d) + ", got z=" +
                           std::to_string(q.z.size()) + " source=" + std::to_string(q.source.size()));
    }
    if (q.instruction.id >= kVocabSize) {
      throw std::invalid_argument("predict: unknown instruction id " + std::to_string(q.instruction.id));
    }
    if (!(q.t > 0.0 && q.t <= 1.0)) throw DomainError("predict: t must lie in (0, 1], got " + std::to_string(q.t));
    double* row = input.data() + r * in;
    std::copy(q.z.begin(), q.z.end(), row);
    std::copy(q.source.begin(), q.source.end(), row + d);
    std::copy_n(emb.raw() + q.instruction.id * kEmbedDim, kEmbedDim, row + 2 * d);
    const auto te = time_embedding(q.t);
    std::copy(te.begin(), te.end(), row + 2 * d + kEmbedDim);
  }
}

void DenoiserNet::predict_batch(std::span<const PredictQuery> queries, std::span<double> out) const {
  if (out.size() != queries.size() * cfg_.dim) {
    throw DimensionError("predict_batch: output buffer has " + std::to_string(out.size()) + " values, need " +
                         std::to_string(queries.size() * cfg_.dim));
  }
  if (queries.empty()) return;
  std::vector<double> act, next;
  build_input(queries, act);
  std::size_t width = cfg_.input_dim();
  const std::size_t rows = queries.size();
  for (std::size_t l = 0; l <= kDepth; ++l) {
    const nd::Tensor& w = params_[1 + 2 * l].value;
    const nd::Tensor& b = params_[2 + 2 * l].value;
    const std::size_t o = w.cols();
    double* dst = l == kDepth ? out.data() : nullptr;
    if (!dst) {
      next.resize(rows * o);
      dst = next.data();
    }
    nd::affine(act.data(), w.raw(), b.raw(), dst, rows, width, o);
    if (l < kDepth) {
      for (double& v : next) v = nd::silu(v);
      act.swap(next);
    }
    width = o;
  }
  // The head estimates the clean sample; convert to velocity.
  const std::size_t d = cfg_.dim;
  for (std::size_t r = 0; r < rows; ++r) {
    const PredictQuery& q = queries[r];
    double* row = out.data() + r * d;
    for (std::size_t j = 0; j < d; ++j) row[j] = (q.z[j] - row[j]) / q.t;
  }
}

std::vector<double> DenoiserNet::predict(const flow::LatentState& state, std::span<const double> source,
                                         Instruction instruction) const {
  const PredictQuery q{state.z, source, instruction, state.time.t()};
  std::vector<double> out(cfg_.dim);
  predict_batch(std::span(&q, 1), out);
  return out;
}

nd::Graph::Var DenoiserNet::forward(nd::Graph& g, const nd::Tensor& z, const nd::Tensor& source,
                                    const std::vector<std::size_t>& tokens, std::span<const double> times) {
  const std::size_t rows = z.rows();
  if (z.cols() != cfg_.dim || !z.same_shape(source) || tokens.size() != rows || times.size() != rows) {
    throw DimensionError("forward: inconsistent batch shapes z=" + shape_string(z.shape()) +
                         " source=" + shape_string(source.shape()));
  }
  nd::Tensor temb({rows, kTimeDim});
  for (std::size_t r = 0; r < rows; ++r) {
    const auto te = time_embedding(times[r]);
    std::copy(te.begin(), te.end(), temb.raw() + r * kTimeDim);
  }
  const std::array<nd::Graph::Var, 4> parts = {g.input(z), g.input(source),
                                               g.gather_rows(g.param(params_[0]), tokens), g.input(std::move(temb))};
  nd::Graph::Var h = g.concat(parts);
  for (std::size_t l = 0; l <= kDepth; ++l) {
    h = g.linear(h, g.param(params_[1 + 2 * l]), g.param(params_[2 + 2 * l]));
    if (l < kDepth) h = g.silu(h);
  }
  return h;
}

// ---------------------------------------------------------------- checkpoint

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

double get_f64(const std::uint8_t* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

json header_json(const DenoiserNet& net) {
  const ModelConfig& cfg = net.config();
  json h;
  h["format"] = 1;
  h["task"] = std::string(task_name(cfg.task));
  h["dim"] = cfg.dim;
  h["hidden"] = cfg.hidden;
  h["depth"] = kDepth;
  h["embed_dim"] = kEmbedDim;
  h["time_dim"] = kTimeDim;
  json vocab = json::array();
  for (auto v : Task(cfg.task).vocabulary()) vocab.push_back(std::string(v));
  h["vocabulary"] = vocab;
  json tensors = json::array();
  for (const auto& p : net.parameter_tensors()) tensors.push_back({{"name", p.name}, {"shape", p.value.shape()}});
  h["tensors"] = tensors;
  const TrainEcho& e = net.train_echo();
  h["train"] = {{"steps", e.steps}, {"batch", e.batch}, {"lr", e.lr},
                {"seed", e.seed},   {"p_null", e.p_null}, {"p_id", e.p_id}};
  return h;
}

}  // namespace

std::vector<std::uint8_t> serialize(const DenoiserNet& net) {
  const std::string header = header_json(net).dump();
  std::vector<std::uint8_t> out(kCheckpointMagic.begin(), kCheckpointMagic.end());
  put_u32(out, static_cast<std::uint32_t>(header.size()));
  out.insert(out.end(), header.begin(), header.end());
  out.reserve(out.size() + 8 * net.parameter_count());
  for (const auto& p : net.parameter_tensors())
    for (double v : p.value.data()) put_f64(out, v);
  return out;
}

DenoiserNet deserialize(std::span<const std::uint8_t> bytes) {
  using K = CheckpointError::Kind;
  const std::size_t magic_len = kCheckpointMagic.size();
  if (bytes.size() < magic_len && std::memcmp(bytes.data(), kCheckpointMagic.data(), bytes.size()) == 0) {
    throw CheckpointError(K::Truncated, "checkpoint: truncated magic");
  }
  if (bytes.size() < magic_len || std::memcmp(bytes.data(), kCheckpointMagic.data(), magic_len) != 0) {
    throw CheckpointError(K::BadMagic, "checkpoint: bad magic (expected \"ADAOR1\")");
  }
  if (bytes.size() < magic_len + 4) throw CheckpointError(K::Truncated, "checkpoint: truncated header length");
  std::uint32_t hlen = 0;
  for (int i = 0; i < 4; ++i) hlen |= static_cast<std::uint32_t>(bytes[magic_len + i]) << (8 * i);
  const std::size_t payload_at = magic_len + 4 + hlen;
  if (bytes.size() < payload_at) throw CheckpointError(K::Truncated, "checkpoint: truncated header");

  json h;
  try {
    h = json::parse(bytes.begin() + magic_len + 4, bytes.begin() + payload_at);
  } catch (const json::exception& e) {
    throw CheckpointError(K::BadHeader, std::string("checkpoint: malformed header: ") + e.what());
  }

  DenoiserNet net;
  try {
    net.cfg_ = ModelConfig::for_task(parse_task(h.at("task").get<std::string>()), h.at("hidden").get<std::size_t>());
    if (h.at("dim").get<std::size_t>() != net.cfg_.dim || h.at("depth").get<std::size_t>() != kDepth ||
        h.at("embed_dim").get<std::size_t>() != kEmbedDim || h.at("time_dim").get<std::size_t>() != kTimeDim) {
      throw CheckpointError(K::ShapeMismatch, "checkpoint: architecture fields do not match task");
    }
    const auto expected = layout(net.cfg_);
    const json& tensors = h.at("tensors");
    if (tensors.size() != expected.size()) {
      throw CheckpointError(K::ShapeMismatch, "checkpoint: expected " + std::to_string(expected.size()) +
                                                  " tensors, header lists " + std::to_string(tensors.size()));
    }
    for (std::size_t i = 0; i < expected.size(); ++i) {
      const auto shape = tensors[i].at("shape").get<std::vector<std::size_t>>();
      if (tensors[i].at("name").get<std::string>() != expected[i].first || shape != expected[i].second) {
        throw CheckpointError(K::ShapeMismatch, "checkpoint: tensor " + expected[i].first + " expected shape " +
                                                    shape_string(expected[i].second) + ", header has " +
                                                    shape_string(shape));
      }
    }
    const json& t = h.at("train");
    net.echo_ = {t.at("steps").get<std::int64_t>(), t.at("batch").get<std::int64_t>(), t.at("lr").get<double>(),
                 t.at("seed").get<std::uint64_t>(), t.at("p_null").get<double>(), t.at("p_id").get<double>()};
  } catch (const json::exception& e) {
    throw CheckpointError(K::BadHeader, std::string("checkpoint: incomplete header: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(K::BadHeader, std::string("checkpoint: ") + e.what());
  }

  std::size_t count = 0;
  for (const auto& [name, shape] : layout(net.cfg_)) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    count += n;
  }
  const std::size_t need = payload_at + 8 * count;
  if (bytes.size() < need) {
    throw CheckpointError(K::Truncated, "checkpoint: truncated payload (" + std::to_string(bytes.size()) +
                                            " bytes, need " + std::to_string(need) + ")");
  }
  if (bytes.size() > need) throw CheckpointError(K::TrailingBytes, "checkpoint: unexpected trailing bytes");

  const std::uint8_t* p = bytes.data() + payload_at;
  for (const auto& [name, shape] : layout(net.cfg_)) {
    nd::Tensor t(shape, 0.0);
    for (double& v : t.data()) {
      v = get_f64(p);
      p += 8;
    }
    net.params_.emplace_back(name, std::move(t));
  }
  return net;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointError::Kind::Io, "cannot open " + path.string());
  return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void save(const DenoiserNet& net, const std::filesystem::path& path) {
  const auto bytes = serialize(net);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError(CheckpointError::Kind::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError(CheckpointError::Kind::Io, "write failed for " + path.string());
}

DenoiserNet load(const std::filesystem::path& path) { return deserialize(read_file(path)); }

std::string checkpoint_id(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) s[i] = kHex[h & 0xF];
  return s;
}

nd::GradcheckResult gradcheck_denoiser(DenoiserNet& net, std::uint64_t seed, std::size_t batch,
                                       std::size_t max_coords_per_tensor) {
  const std::size_t d = net.dim();
  Rng rng(seed);
  nd::Tensor z({batch, d}), src({batch, d}), target({batch, d});
  std::vector<std::size_t> tokens(batch);
  std::vector<double> times(batch);
  for (std::size_t r = 0; r < batch; ++r) {
    tokens[r] = rng.below(kVocabSize);
    times[r] = rng.uniform(0.05, 1.0);
    for (std::size_t j = 0; j < d; ++j) {
      z.at(r, j) = rng.normal();
      src.at(r, j) = rng.uniform();
      target.at(r, j) = rng.normal();
    }
  }
  auto params = net.parameters();
  return nd::gradcheck(
      params,
      [&](nd::Graph& g) { return g.mse_loss(net.forward(g, z, src, tokens, times), g.input(target)); },
      {1e-5, max_coords_per_tensor, seed});
}

}  // namespace adaor
