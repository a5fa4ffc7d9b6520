#include "speckle/config.hpp"

#include <fstream>
#include <sstream>

#include "speckle/error.hpp"

namespace speckle {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingFrame: return "MissingFrame";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::UnsupportedBitDepth: return "UnsupportedBitDepth";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::PatchOutOfBounds: return "PatchOutOfBounds";
    case ErrorCode::EigSolveFailure: return "EigSolveFailure";
    case ErrorCode::EmptySystem: return "EmptySystem";
    case ErrorCode::ConvergenceFailure: return "ConvergenceFailure";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::InvalidScene: return "InvalidScene";
    case ErrorCode::UnknownScenario: return "UnknownScenario";
    case ErrorCode::ConstantSignal: return "ConstantSignal";
    case ErrorCode::NoPropagationDetected: return "NoPropagationDetected";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
  }
  return "UnknownError";
}

void PipelineConfig::validate() const {
  if (patch_size < 3 || patch_size % 2 == 0)
    fail(ErrorCode::InvalidConfig, "patch_size must be odd and >= 3, got " + std::to_string(patch_size));
  const long k = static_cast<long>(patch_size) * patch_size;
  if (embed_dim < 1 || embed_dim > k)
    fail(ErrorCode::InvalidConfig, "embed_dim must be in [1, patch_size^2], got " + std::to_string(embed_dim));
  if (subsample_stride < 1) fail(ErrorCode::InvalidConfig, "subsample_stride must be >= 1");
  if (neighborhood_radius < 1) fail(ErrorCode::InvalidConfig, "neighborhood_radius must be >= 1");
  if (lambda < 0.0) fail(ErrorCode::InvalidConfig, "lambda must be >= 0");
  if (!(epsilon > 0.0)) fail(ErrorCode::InvalidConfig, "epsilon must be > 0");
  if (max_iters < 1) fail(ErrorCode::InvalidConfig, "max_iters must be >= 1");
  if (!(tol > 0.0)) fail(ErrorCode::InvalidConfig, "tol must be > 0");
  if (!(bandwidth_mult > 0.0)) fail(ErrorCode::InvalidConfig, "bandwidth_mult must be > 0");
  if (threads < 0) fail(ErrorCode::InvalidConfig, "threads must be >= 0");
}

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

long parse_long(const std::string& value, const std::string& key) {
  try {
    size_t pos = 0;
    long v = std::stol(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    fail(ErrorCode::InvalidConfig, "key '" + key + "': expected integer, got '" + value + "'");
  }
}

double parse_double(const std::string& value, const std::string& key) {
  try {
    size_t pos = 0;
    double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    fail(ErrorCode::InvalidConfig, "key '" + key + "': expected number, got '" + value + "'");
  }
}

}  // namespace

bool parse_bool(const std::string& value, const std::string& key) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  fail(ErrorCode::InvalidConfig, "key '" + key + "': expected boolean, got '" + value + "'");
}

KeyValueMap parse_key_values(std::istream& in, const std::string& origin) {
  KeyValueMap map;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t sep = line.find_first_of("=:");
    if (sep == std::string::npos)
      fail(ErrorCode::InvalidConfig,
           origin + ":" + std::to_string(lineno) + ": expected 'key = value', got '" + line + "'");
    std::string key = trim(line.substr(0, sep));
    std::string value = trim(line.substr(sep + 1));
    if (key.empty())
      fail(ErrorCode::InvalidConfig, origin + ":" + std::to_string(lineno) + ": empty key");
    map[key] = value;
  }
  return map;
}

KeyValueMap parse_key_value_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open config file: " + path);
  return parse_key_values(in, path);
}

PipelineConfig config_from_map(const KeyValueMap& map, PipelineConfig base) {
  PipelineConfig cfg = base;
  for (const auto& [key, value] : map) {
    if (key == "patch_size") cfg.patch_size = static_cast<int>(parse_long(value, key));
    else if (key == "embed_dim") cfg.embed_dim = static_cast<int>(parse_long(value, key));
    else if (key == "subsample_stride") cfg.subsample_stride = static_cast<int>(parse_long(value, key));
    else if (key == "neighborhood_radius") cfg.neighborhood_radius = static_cast<int>(parse_long(value, key));
    else if (key == "lambda") cfg.lambda = parse_double(value, key);
    else if (key == "epsilon") cfg.epsilon = parse_double(value, key);
    else if (key == "max_iters") cfg.max_iters = static_cast<int>(parse_long(value, key));
    else if (key == "tol") cfg.tol = parse_double(value, key);
    else if (key == "seed") cfg.seed = static_cast<uint64_t>(parse_long(value, key));
    else if (key == "bandwidth_mult") cfg.bandwidth_mult = parse_double(value, key);
    else if (key == "temporal") cfg.temporal = parse_bool(value, key);
    else if (key == "threads") cfg.threads = static_cast<int>(parse_long(value, key));
    else fail(ErrorCode::InvalidConfig, "unknown config key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

nlohmann::json config_to_json(const PipelineConfig& cfg) {
  return nlohmann::json{
      {"patch_size", cfg.patch_size},
      {"embed_dim", cfg.embed_dim},
      {"subsample_stride", cfg.subsample_stride},
      {"neighborhood_radius", cfg.neighborhood_radius},
      {"lambda", cfg.lambda},
      {"epsilon", cfg.epsilon},
      {"max_iters", cfg.max_iters},
      {"tol", cfg.tol},
      {"seed", cfg.seed},
      {"bandwidth_mult", cfg.bandwidth_mult},
      {"temporal", cfg.temporal},
      {"threads", cfg.threads},
  };
}

PipelineConfig config_from_json(const nlohmann::json& j) {
  PipelineConfig cfg;
  cfg.patch_size = j.value("patch_size", cfg.patch_size);
  cfg.embed_dim = j.value("embed_dim", cfg.embed_dim);
  cfg.subsample_stride = j.value("subsample_stride", cfg.subsample_stride);
  cfg.neighborhood_radius = j.value("neighborhood_radius", cfg.neighborhood_radius);
  cfg.lambda = j.value("lambda", cfg.lambda);
  cfg.epsilon = j.value("epsilon", cfg.epsilon);
  cfg.max_iters = j.value("max_iters", cfg.max_iters);
  cfg.tol = j.value("tol", cfg.tol);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.bandwidth_mult = j.value("bandwidth_mult", cfg.bandwidth_mult);
  cfg.temporal = j.value("temporal", cfg.temporal);
  cfg.threads = j.value("threads", cfg.threads);
  cfg.validate();
  return cfg;
}

}  // namespace speckle
