#include "ovc/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace ovc {

using nlohmann::json;

namespace {

json model_section(const ModelConfig& c) {
  return {{"d_word", c.d_word},           {"d_hidden", c.d_hidden}, {"n_heads", c.n_heads},
          {"d_obj", c.d_obj},             {"variant", std::string(variant_name(c.variant))},
          {"residual", c.residual},       {"max_objects", c.max_objects}, {"seed", c.seed}};
}

ModelConfig parse_model_section(const json& j) {
  if (!j.is_object()) throw Error("\"model\" must be an object");
  ModelConfig c;
  const json defaults = model_section(c);
  for (const auto& [key, value] : j.items()) {
    if (!defaults.contains(key)) throw Error("unknown model key: " + key);
  }
  try {
    c.d_word = j.value("d_word", c.d_word);
    c.d_hidden = j.value("d_hidden", c.d_hidden);
    c.n_heads = j.value("n_heads", c.n_heads);
    c.d_obj = j.value("d_obj", c.d_obj);
    if (j.contains("variant")) c.variant = parse_variant(j["variant"].get<std::string>());
    c.residual = j.value("residual", c.residual);
    c.max_objects = j.value("max_objects", c.max_objects);
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw Error(std::string("bad model config value: ") + e.what());
  }
  if (c.d_word < 1 || c.d_obj < 1 || c.n_heads < 1) throw Error("model dimensions must be positive");
  if (c.d_hidden < 2 || c.d_hidden % 2 != 0) throw Error("d_hidden must be even and >= 2");
  if (c.max_objects < 1) throw Error("max_objects must be >= 1");
  return c;
}

}  // namespace

json run_config_to_json(const RunConfig& c) {
  return {{"model", model_section(c.model)}, {"train", train_config_to_json(c.train)}};
}

RunConfig run_config_from_json(const json& j) {
  if (!j.is_object()) throw Error("config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key != "model" && key != "train") throw Error("unknown config section: " + key);
  }
  RunConfig c;
  if (j.contains("model")) c.model = parse_model_section(j["model"]);
  if (j.contains("train")) c.train = train_config_from_json(j["train"]);
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

std::string content_hash(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string file_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return content_hash(ss.str());
}

}  // namespace ovc
