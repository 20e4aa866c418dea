#include "skillprobe/checkpoint.hpp"

#include <string>

#include "json.hpp"

#include "skillprobe/error.hpp"
#include "skillprobe/io.hpp"

namespace skillprobe {
namespace {

using ordered_json = nlohmann::ordered_json;

constexpr const char* kFormat = "skillprobe-model/1";

ordered_json config_json(const ModelConfig& c) {
  ordered_json j;
  j["d"] = c.d;
  j["n_layers"] = c.n_layers;
  j["m"] = c.m;
  j["n_heads"] = c.n_heads;
  j["vocab_size"] = c.vocab_size;
  j["max_seq_len"] = c.max_seq_len;
  j["seed"] = c.seed;
  j["tied_head"] = c.tied_head;
  return j;
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.d = j.at("d").get<int>();
  c.n_layers = j.at("n_layers").get<int>();
  c.m = j.at("m").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.vocab_size = j.at("vocab_size").get<int>();
  c.max_seq_len = j.at("max_seq_len").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.tied_head = j.at("tied_head").get<bool>();
  c.validate();
  return c;
}

}  // namespace

std::string model_manifest_json(const ModelParams& params, const char* dtype) {
  const std::string dt(dtype);
  if (dt != "f64le" && dt != "f32le") {
    fail(ErrorCode::kInvalidArgument, "checkpoint dtype must be f64le or f32le");
  }
  ordered_json j;
  j["format"] = kFormat;
  j["config"] = config_json(params.config());
  j["dtype"] = dt;
  j["content_hash"] = params.content_hash();
  j["seed"] = params.config().seed;
  j["blob"] = "weights.bin";
  ordered_json sections = ordered_json::array();
  const ParamLayout layout(params.config());
  for (const auto& t : layout.tensors) {
    ordered_json s;
    s["name"] = t.name;
    s["offset"] = t.offset;
    s["shape"] = t.shape;
    sections.push_back(std::move(s));
  }
  j["sections"] = std::move(sections);
  return j.dump(2) + "\n";
}

void save_model(const ModelParams& params, const std::filesystem::path& dir, const char* dtype) {
  const std::string manifest = model_manifest_json(params, dtype);
  std::string blob;
  if (std::string(dtype) == "f64le") {
    append_f64le(blob, params.data());
  } else {
    append_f32le(blob, params.data());
  }
  write_file_atomic(dir / "weights.bin", blob);
  write_file_atomic(dir / "manifest.json", manifest);
}

ModelParams load_model(const std::filesystem::path& dir) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParseError, (dir / "manifest.json").string() + ": " + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != kFormat) {
      fail(ErrorCode::kParseError, "unsupported model checkpoint format");
    }
    const ModelConfig cfg = config_from_json(j.at("config"));
    const auto dtype = j.at("dtype").get<std::string>();
    const std::string blob = read_file(dir / j.value("blob", std::string("weights.bin")));
    std::vector<double> weights;
    if (dtype == "f64le") {
      weights = decode_f64le(blob);
    } else if (dtype == "f32le") {
      weights = decode_f32le(blob);
    } else {
      fail(ErrorCode::kParseError, "unknown dtype '" + dtype + "'");
    }
    ModelParams params(cfg, std::move(weights));
    const auto expected = j.at("content_hash").get<std::string>();
    if (dtype == "f64le" && params.content_hash() != expected) {
      fail(ErrorCode::kValidationFailed, dir.string() + ": weight hash does not match manifest");
    }
    return params;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParseError, (dir / "manifest.json").string() + ": " + e.what());
  }
}

}  // namespace skillprobe
