#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "p2c/corpus.hpp"
#include "p2c/index.hpp"
#include "p2c/judgment.hpp"
#include "p2c/model.hpp"

namespace httplib {
class Server;
}

namespace p2c::service {

/// One model file with the index it produced, served under an opaque tag.
struct ServedModel {
  std::string tag;
  std::shared_ptr<const Model> model;
  std::shared_ptr<const EmbeddingIndex> index;
};

struct ServiceOptions {
  /// Relevance threshold for /classify.
  double alpha = 1.0;
  std::size_t max_k = 1000;
};

struct Response {
  int status = 200;
  std::string body;
};

using QueryParams = std::multimap<std::string, std::string>;

/// HTTP front-end over immutable models and indexes plus the judgment store.
/// The first served model is the default for requests without a model_tag.
///
///   GET  /health               {"status","model_hash","model_tags"}
///   GET  /models?nonce=        {"model_tags"} in an order seeded by nonce
///   POST /search               {"policy_text","facet","k"[,"model_tag"]}
///   POST /classify             {"policy_text","code"[,"model_tag"]}
///   POST /judgments            JudgmentRecord -> {"id"}
///   GET  /metrics/acceptance   ?model_tag= per-facet and overall rates
///   GET  /snippets/{id}        {"id","code"}
///
/// Errors are {"error","message"} with 400, 404, 405 or 409.
class Service {
 public:
  /// Throws kConflict when a model and its index disagree, when an indexed
  /// snippet has no code, or when tags repeat.
  Service(std::vector<ServedModel> models, std::span<const CodeSnippet> snippets,
          std::shared_ptr<JudgmentStore> store, ServiceOptions options = {});

  Response handle(std::string_view method, std::string_view path, const QueryParams& query,
                  std::string_view body) const;

  /// Routes every request on `server` through handle().
  void mount(httplib::Server& server) const;

  const ServedModel& default_model() const { return models_.front(); }
  const std::vector<ServedModel>& models() const { return models_; }

 private:
  const ServedModel& model_for(std::string_view tag) const;
  Response health() const;
  Response list_models(const QueryParams& query) const;
  Response search(std::string_view body) const;
  Response classify(std::string_view body) const;
  Response record_judgment(std::string_view body) const;
  Response acceptance(const QueryParams& query) const;
  Response snippet(std::string_view id) const;

  std::vector<ServedModel> models_;
  std::unordered_map<std::string, std::string> code_;
  std::shared_ptr<JudgmentStore> store_;
  ServiceOptions options_;
};

}  // namespace p2c::service
