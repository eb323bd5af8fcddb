#include "p2c/model.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "p2c/digest.hpp"
#include "p2c/error.hpp"

namespace p2c {
namespace {

constexpr int kModelFormat = 1;
static_assert(std::endian::native == std::endian::little, "model files assume a little-endian host");

}  // namespace

EncoderInput Model::code_input(std::string_view code, std::string id) const {
  return {vocab.tokenize(code, max_seq_len), std::nullopt, std::move(id)};
}

EncoderInput Model::text_input(std::string_view text, std::string id) const {
  return {vocab.tokenize(text, max_seq_len), std::nullopt, std::move(id)};
}

EncoderInput Model::policy_input(std::string_view text, Facet facet, std::string id) const {
  // The facet prefix counts against max_seq_len.
  const std::size_t budget = params.facet_mode == FacetMode::kPrefixed && max_seq_len > 1 ? max_seq_len - 1 : max_seq_len;
  return {vocab.tokenize(text, budget), facet, std::move(id)};
}

Embedding Model::encode_code(std::string_view code) const { return encode(code_input(code), params); }

Embedding Model::encode_policy(std::string_view text, Facet facet) const {
  return encode(policy_input(text, facet), params);
}

nlohmann::json model_to_json(const Model& model) {
  const auto shape = model.params.weights.shape();
  nlohmann::json j;
  j["format"] = kModelFormat;
  j["d"] = shape.dim;
  j["h"] = shape.hidden;
  j["vocab_size"] = shape.vocab_size;
  j["vocab_hash"] = model.params.vocab_hash;
  j["facet_mode"] = std::string(to_string(model.params.facet_mode));
  j["max_seq_len"] = model.max_seq_len;
  j["encoding"] = "base64-f64le";
  auto arrays = nlohmann::json::object();
  model.params.weights.for_each_block([&](const char* name, std::span<const double> block) {
    arrays[name] = base64_encode(std::as_bytes(block));
  });
  j["arrays"] = std::move(arrays);
  j["vocab"] = model.vocab.to_json();
  return j;
}

Model model_from_json(const nlohmann::json& j) {
  try {
    require(j.value("format", 0) == kModelFormat, "model: unsupported format");
    require(j.value("encoding", std::string()) == "base64-f64le", "model: unsupported array encoding");
    Model m;
    m.vocab = Vocabulary::from_json(j.at("vocab"));
    const EncoderShape shape{j.at("vocab_size").get<std::size_t>(), j.at("d").get<std::size_t>(),
                             j.at("h").get<std::size_t>()};
    require(shape.vocab_size == m.vocab.size(), "model: vocab_size does not match the embedded vocabulary");
    m.params.weights = Weights::zeros(shape);
    m.params.facet_mode = parse_facet_mode(j.at("facet_mode").get<std::string>());
    m.params.vocab_hash = j.at("vocab_hash").get<std::string>();
    if (m.params.vocab_hash != m.vocab.hash()) {
      fail(ErrorCode::kConflict, "model: vocab_hash does not match the embedded vocabulary");
    }
    m.max_seq_len = j.value("max_seq_len", kDefaultMaxSeqLen);
    const auto& arrays = j.at("arrays");
    m.params.weights.for_each_block([&](const char* name, std::span<double> block) {
      const auto bytes = base64_decode(arrays.at(name).get<std::string>());
      if (bytes.size() != block.size_bytes()) {
        fail(ErrorCode::kInvalidInput, std::string("model: array '") + name + "' has the wrong size");
      }
      std::memcpy(block.data(), bytes.data(), bytes.size());
    });
    if (!m.params.weights.all_finite()) fail(ErrorCode::kNonFinite, "model: parameters contain non-finite values");
    return m;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kInvalidInput, std::string("model: ") + e.what());
  }
}

void save_model(const std::filesystem::path& path, const Model& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
  out << model_to_json(model).dump() << '\n';
  if (!out) fail(ErrorCode::kIo, "write failed for " + path.string());
}

Model load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot read " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kInvalidInput, path.string() + ": " + e.what());
  }
  return model_from_json(j);
}

}  // namespace p2c
