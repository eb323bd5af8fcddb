#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

#include "p2c/bpe.hpp"
#include "p2c/encoder.hpp"

namespace p2c {

/// A vocabulary and the encoder parameters trained against it. This is the
/// unit that is saved, loaded, indexed and served.
struct Model {
  Vocabulary vocab;
  EncoderParams params;
  std::size_t max_seq_len = kDefaultMaxSeqLen;

  std::string hash() const { return model_hash(params); }

  EncoderInput code_input(std::string_view code, std::string id = {}) const;
  EncoderInput text_input(std::string_view text, std::string id = {}) const;
  EncoderInput policy_input(std::string_view text, Facet facet, std::string id = {}) const;

  Embedding encode_code(std::string_view code) const;
  Embedding encode_policy(std::string_view text, Facet facet) const;
};

// Model file: one JSON document
//   {"format":1,"d","h","vocab_size","vocab_hash","facet_mode","max_seq_len",
//    "encoding":"base64-f64le",
//    "arrays":{"token_embeddings","w1","b1","w2","b2","mask_beta"},
//    "vocab":{...vocabulary file...}}
// Each array is the row-major block from Weights::for_each_block, stored as
// little-endian IEEE-754 doubles and base64-encoded. Round trips are
// bit-exact.
nlohmann::json model_to_json(const Model& model);
Model model_from_json(const nlohmann::json& j);
void save_model(const std::filesystem::path& path, const Model& model);
Model load_model(const std::filesystem::path& path);

}  // namespace p2c
