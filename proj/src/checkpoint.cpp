#include "spaorb/checkpoint.hpp"

#include "spaorb/errors.hpp"

#include <bit>
#include <fstream>
#include <set>
#include <sstream>

namespace spaorb::checkpoint {

namespace {

using ojson = nlohmann::ordered_json;

void append_le(std::string &out, const std::vector<double> &values) {
  for (double x : values) {
    auto bits = std::bit_cast<std::uint64_t>(x);
    for (int b = 0; b < 8; ++b) {
      out.push_back(static_cast<char>(bits & 0xffu));
      bits >>= 8;
    }
  }
}

std::vector<double> read_le(std::string_view bytes, std::size_t &pos, std::size_t count) {
  if (bytes.size() - pos < count * 8) {
    throw SchemaError("checkpoint: payload truncated");
  }
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t bits = 0;
    for (int b = 7; b >= 0; --b) {
      bits = (bits << 8) | static_cast<unsigned char>(bytes[pos + static_cast<std::size_t>(b)]);
    }
    out[i] = std::bit_cast<double>(bits);
    pos += 8;
  }
  return out;
}

void reject_unknown(const ojson &j, const std::set<std::string> &known, const char *what) {
  if (!j.is_object()) {
    throw SchemaError(std::string(what) + " must be a JSON object");
  }
  for (const auto &[key, value] : j.items()) {
    if (!known.contains(key)) {
      throw SchemaError(std::string(what) + ": unknown field '" + key + "'");
    }
  }
}

template <typename T>
void read_field(const ojson &j, const char *key, T &out) {
  if (j.contains(key)) {
    out = j.at(key).get<T>();
  }
}

} // namespace

ojson model_config_to_json(const model::ModelConfig &cfg) {
  ojson j;
  j["hidden_dim"] = cfg.hidden_dim;
  j["gnn_layers"] = cfg.gnn_layers;
  j["proj_dim"] = cfg.proj_dim;
  j["readout_layers"] = cfg.readout_layers;
  j["readout_hidden"] = cfg.readout_hidden;
  j["kernel_hidden"] = cfg.kernel_hidden;
  j["t_walk"] = cfg.t_walk;
  j["l_rbf"] = cfg.l_rbf;
  j["rbf_min"] = cfg.rbf_min;
  j["rbf_max"] = cfg.rbf_max;
  j["r_fine"] = cfg.r_fine;
  j["r_coarse"] = cfg.r_coarse;
  j["seed"] = cfg.seed;
  return j;
}

model::ModelConfig model_config_from_json(const ojson &j) {
  reject_unknown(j,
                 {"hidden_dim", "gnn_layers", "proj_dim", "readout_layers", "readout_hidden", "kernel_hidden",
                  "t_walk", "l_rbf", "rbf_min", "rbf_max", "r_fine", "r_coarse", "seed"},
                 "model config");
  model::ModelConfig cfg;
  try {
    read_field(j, "hidden_dim", cfg.hidden_dim);
    read_field(j, "gnn_layers", cfg.gnn_layers);
    read_field(j, "proj_dim", cfg.proj_dim);
    read_field(j, "readout_layers", cfg.readout_layers);
    read_field(j, "readout_hidden", cfg.readout_hidden);
    read_field(j, "kernel_hidden", cfg.kernel_hidden);
    read_field(j, "t_walk", cfg.t_walk);
    read_field(j, "l_rbf", cfg.l_rbf);
    read_field(j, "rbf_min", cfg.rbf_min);
    read_field(j, "rbf_max", cfg.rbf_max);
    read_field(j, "r_fine", cfg.r_fine);
    read_field(j, "r_coarse", cfg.r_coarse);
    read_field(j, "seed", cfg.seed);
  } catch (const nlohmann::json::exception &e) {
    throw SchemaError(std::string("model config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

ojson loss_weights_to_json(const losses::LossWeights &w) {
  ojson j;
  j["lambda1"] = w.lambda1;
  j["lambda2"] = w.lambda2;
  j["huber_delta"] = w.huber_delta;
  return j;
}

losses::LossWeights loss_weights_from_json(const ojson &j) {
  reject_unknown(j, {"lambda1", "lambda2", "huber_delta"}, "loss weights");
  losses::LossWeights w;
  try {
    read_field(j, "lambda1", w.lambda1);
    read_field(j, "lambda2", w.lambda2);
    read_field(j, "huber_delta", w.huber_delta);
  } catch (const nlohmann::json::exception &e) {
    throw SchemaError(std::string("loss weights: ") + e.what());
  }
  w.validate();
  return w;
}

std::string serialize(const Checkpoint &ckpt) {
  const auto &p = ckpt.params;
  ojson h;
  h["format"] = kFormat;
  h["schema_version"] = kSchemaVersion;
  h["config"] = model_config_to_json(ckpt.config);
  h["loss_weights"] = loss_weights_to_json(ckpt.weights);
  ojson tensors = ojson::array();
  for (const auto &t : p.manifest) {
    tensors.push_back({{"name", t.name}, {"shape", {t.rows, t.cols}}});
  }
  h["tensors"] = tensors;
  h["parameter_count"] = p.values.size();
  if (ckpt.training) {
    const auto &s = *ckpt.training;
    if (s.adam.m.size() != p.values.size() || s.adam.v.size() != p.values.size()) {
      throw InvalidInput("checkpoint: optimizer moments do not match the parameter count");
    }
    h["training"] = {{"epoch", s.epoch},
                     {"best_val", s.best_val},
                     {"best_epoch", s.best_epoch},
                     {"adam_step", s.adam.step}};
  }
  std::string out = h.dump();
  out.push_back('\n');
  append_le(out, p.values);
  if (ckpt.training) {
    append_le(out, ckpt.training->adam.m);
    append_le(out, ckpt.training->adam.v);
  }
  return out;
}

Checkpoint deserialize(std::string_view bytes) {
  const auto newline = bytes.find('\n');
  if (newline == std::string_view::npos) {
    throw SchemaError("checkpoint: missing header line");
  }
  ojson h;
  try {
    h = ojson::parse(bytes.substr(0, newline));
  } catch (const nlohmann::json::exception &e) {
    throw SchemaError(std::string("checkpoint: unreadable header: ") + e.what());
  }
  Checkpoint ckpt;
  std::size_t count = 0;
  try {
    if (h.at("format").get<std::string>() != kFormat) {
      throw SchemaError("checkpoint: unknown format tag");
    }
    const int version = h.at("schema_version").get<int>();
    if (version != kSchemaVersion) {
      throw SchemaError("checkpoint: schema version " + std::to_string(version) + " is not supported");
    }
    ckpt.config = model_config_from_json(h.at("config"));
    ckpt.weights = loss_weights_from_json(h.at("loss_weights"));
    ckpt.params.manifest = model::build_manifest(ckpt.config);
    const auto &tensors = h.at("tensors");
    if (tensors.size() != ckpt.params.manifest.size()) {
      throw SchemaError("checkpoint: tensor list does not match the configuration");
    }
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      const auto &spec = ckpt.params.manifest[i];
      const auto &shape = tensors[i].at("shape");
      if (tensors[i].at("name").get<std::string>() != spec.name || shape.size() != 2 ||
          shape[0].get<int>() != spec.rows || shape[1].get<int>() != spec.cols) {
        throw SchemaError("checkpoint: tensor " + std::to_string(i) + " does not match the configuration");
      }
      count += spec.size();
    }
    if (h.at("parameter_count").get<std::size_t>() != count) {
      throw SchemaError("checkpoint: parameter count mismatch");
    }
    if (h.contains("training")) {
      const auto &t = h.at("training");
      TrainingState s;
      s.epoch = t.at("epoch").get<int>();
      s.best_val = t.at("best_val").get<double>();
      s.best_epoch = t.at("best_epoch").get<int>();
      s.adam.step = t.at("adam_step").get<std::int64_t>();
      ckpt.training = s;
    }
  } catch (const nlohmann::json::exception &e) {
    throw SchemaError(std::string("checkpoint: malformed header: ") + e.what());
  } catch (const InvalidInput &e) {
    throw SchemaError(std::string("checkpoint: ") + e.what());
  }
  std::size_t pos = newline + 1;
  ckpt.params.values = read_le(bytes, pos, count);
  if (ckpt.training) {
    ckpt.training->adam.m = read_le(bytes, pos, count);
    ckpt.training->adam.v = read_le(bytes, pos, count);
  }
  if (pos != bytes.size()) {
    throw SchemaError("checkpoint: trailing bytes after payload");
  }
  return ckpt;
}

void save(const std::filesystem::path &path, const Checkpoint &ckpt) {
  const std::string bytes = serialize(ckpt);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw IoError("cannot write " + tmp.string());
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
      throw IoError("short write to " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    throw IoError("cannot move checkpoint into " + path.string() + ": " + ec.message());
  }
}

Checkpoint load(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open checkpoint " + path.string());
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize(buf.str());
}

} // namespace spaorb::checkpoint
