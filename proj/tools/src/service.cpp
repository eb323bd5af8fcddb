#include "p2c/service.hpp"

#include <algorithm>
#include <random>
#include <unordered_set>

#include <json.hpp>

#include "p2c/assessor.hpp"
#include "p2c/digest.hpp"
#include "p2c/error.hpp"

// After the Eigen-based headers: <resolv.h> defines a _res macro.
#include <httplib.h>

namespace p2c::service {
namespace {

using json = nlohmann::json;

Response json_response(int status, const json& body) { return {status, body.dump()}; }

Response error_response(int status, std::string_view code, const std::string& message) {
  return json_response(status, {{"error", code}, {"message", message}});
}

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidInput:
    case ErrorCode::kDegenerate: return 400;
    case ErrorCode::kNotFound: return 404;
    case ErrorCode::kConflict:
    case ErrorCode::kStaleIndex: return 409;
    default: return 500;
  }
}

json parse_body(std::string_view body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::exception& e) {
    fail(ErrorCode::kInvalidInput, std::string("malformed JSON body: ") + e.what());
  }
  if (!j.is_object()) fail(ErrorCode::kInvalidInput, "request body must be a JSON object");
  return j;
}

std::string string_field(const json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_string()) {
    fail(ErrorCode::kInvalidInput, std::string("'") + key + "' must be a string");
  }
  return j.at(key).get<std::string>();
}

std::string optional_tag(const json& j) {
  if (!j.contains("model_tag") || j.at("model_tag").is_null()) return {};
  return string_field(j, "model_tag");
}

std::string non_blank(const json& j, const char* key) {
  std::string s = string_field(j, key);
  if (s.find_first_not_of(" \t\r\n") == std::string::npos) {
    fail(ErrorCode::kInvalidInput, std::string("'") + key + "' must not be blank");
  }
  return s;
}

const std::string* query_value(const QueryParams& query, const std::string& key) {
  const auto it = query.find(key);
  return it == query.end() ? nullptr : &it->second;
}

}  // namespace

Service::Service(std::vector<ServedModel> models, std::span<const CodeSnippet> snippets,
                 std::shared_ptr<JudgmentStore> store, ServiceOptions options)
    : models_(std::move(models)), store_(std::move(store)), options_(options) {
  require(!models_.empty(), "service: at least one model is required");
  require(store_ != nullptr, "service: a judgment store is required");
  for (const auto& s : snippets) code_.emplace(s.id, s.code);
  std::unordered_set<std::string> tags;
  for (const auto& m : models_) {
    require(m.model && m.index, "service: model '" + m.tag + "' is incomplete");
    if (m.tag.empty() || !tags.insert(m.tag).second) {
      fail(ErrorCode::kConflict, "service: model tags must be unique and non-empty ('" + m.tag + "')");
    }
    if (m.index->model_hash() != m.model->hash()) {
      fail(ErrorCode::kConflict, "service: index for '" + m.tag + "' was built by model " + m.index->model_hash() +
                                     ", loaded model is " + m.model->hash());
    }
    for (const auto& id : m.index->ids()) {
      if (!code_.contains(id)) fail(ErrorCode::kConflict, "service: indexed snippet '" + id + "' has no code");
    }
  }
}

const ServedModel& Service::model_for(std::string_view tag) const {
  if (tag.empty()) return models_.front();
  for (const auto& m : models_) {
    if (m.tag == tag) return m;
  }
  fail(ErrorCode::kInvalidInput, "unknown model_tag '" + std::string(tag) + "'");
}

Response Service::handle(std::string_view method, std::string_view path, const QueryParams& query,
                         std::string_view body) const {
  try {
    const bool get = method == "GET";
    const bool post = method == "POST";
    if (path == "/health") return get ? health() : error_response(405, "method_not_allowed", "use GET");
    if (path == "/models") return get ? list_models(query) : error_response(405, "method_not_allowed", "use GET");
    if (path == "/search") return post ? search(body) : error_response(405, "method_not_allowed", "use POST");
    if (path == "/classify") return post ? classify(body) : error_response(405, "method_not_allowed", "use POST");
    if (path == "/judgments") {
      return post ? record_judgment(body) : error_response(405, "method_not_allowed", "use POST");
    }
    if (path == "/metrics/acceptance") {
      return get ? acceptance(query) : error_response(405, "method_not_allowed", "use GET");
    }
    constexpr std::string_view kSnippets = "/snippets/";
    if (path.starts_with(kSnippets) && path.size() > kSnippets.size()) {
      return get ? snippet(path.substr(kSnippets.size())) : error_response(405, "method_not_allowed", "use GET");
    }
    return error_response(404, "not_found", "no route for " + std::string(path));
  } catch (const Error& e) {
    return error_response(status_for(e.code()), to_string(e.code()), e.what());
  } catch (const std::exception& e) {
    return error_response(500, "internal", e.what());
  }
}

Response Service::health() const {
  json tags = json::array();
  for (const auto& m : models_) tags.push_back(m.tag);
  return json_response(200, {{"status", "ok"}, {"model_hash", default_model().model->hash()}, {"model_tags", tags}});
}

Response Service::list_models(const QueryParams& query) const {
  std::vector<std::string> tags;
  for (const auto& m : models_) tags.push_back(m.tag);
  if (const auto* nonce = query_value(query, "nonce")) {
    const std::string digest = sha256_hex(*nonce);
    std::mt19937_64 rng(std::stoull(digest.substr(0, 16), nullptr, 16));
    std::shuffle(tags.begin(), tags.end(), rng);
  }
  return json_response(200, {{"model_tags", tags}});
}

Response Service::search(std::string_view body) const {
  const json j = parse_body(body);
  const std::string text = non_blank(j, "policy_text");
  const Facet facet = parse_facet(string_field(j, "facet"));
  if (!j.contains("k") || !j.at("k").is_number_integer()) fail(ErrorCode::kInvalidInput, "'k' must be an integer");
  const auto k = j.at("k").get<std::int64_t>();
  if (k < 1 || static_cast<std::size_t>(k) > options_.max_k) {
    fail(ErrorCode::kInvalidInput, "'k' must be in [1, " + std::to_string(options_.max_k) + "]");
  }
  const ServedModel& m = model_for(optional_tag(j));
  const auto hits = p2c::search(text, facet, *m.index, static_cast<std::size_t>(k), *m.model);
  json results = json::array();
  for (const auto& h : hits) {
    results.push_back(
        {{"snippet_id", h.snippet_id}, {"code", code_.at(h.snippet_id)}, {"distance", h.distance}, {"rank", h.rank}});
  }
  return json_response(200, {{"results", results}, {"model_hash", m.model->hash()}, {"model_tag", m.tag}});
}

Response Service::classify(std::string_view body) const {
  const json j = parse_body(body);
  const std::string text = non_blank(j, "policy_text");
  const std::string code = non_blank(j, "code");
  const ServedModel& m = model_for(optional_tag(j));
  json out = p2c::classify(text, code, *m.model, options_.alpha).to_json();
  out["model_hash"] = m.model->hash();
  out["model_tag"] = m.tag;
  return json_response(200, out);
}

Response Service::record_judgment(std::string_view body) const {
  const JudgmentRecord r = JudgmentRecord::from_json(parse_body(body));
  const ServedModel& m = model_for(r.model_tag);
  if (r.model_tag.empty()) fail(ErrorCode::kInvalidInput, "'model_tag' must not be empty");
  if (!m.index->contains(r.snippet_id)) {
    fail(ErrorCode::kNotFound, "snippet '" + r.snippet_id + "' is not in the index served as '" + m.tag + "'");
  }
  const auto result = store_->record(r);
  return json_response(200, {{"id", result.id}});
}

Response Service::acceptance(const QueryParams& query) const {
  const std::string* tag = query_value(query, "model_tag");
  const auto judgments = tag ? store_->for_tag(*tag) : store_->all();
  const AcceptanceRates rates = judgments.empty() ? AcceptanceRates{} : acceptance_rate(judgments);
  json out = rates.to_json();
  out["model_tag"] = tag ? json(*tag) : json(nullptr);
  out["n_judgments"] = judgments.size();
  return json_response(200, out);
}

Response Service::snippet(std::string_view id) const {
  const bool indexed = std::any_of(models_.begin(), models_.end(), [&](const auto& m) { return m.index->contains(id); });
  const auto it = code_.find(std::string(id));
  if (!indexed || it == code_.end()) fail(ErrorCode::kNotFound, "unknown snippet '" + std::string(id) + "'");
  return json_response(200, {{"id", it->first}, {"code", it->second}});
}

void Service::mount(httplib::Server& server) const {
  const auto handler = [this](const httplib::Request& req, httplib::Response& res) {
    const QueryParams query(req.params.begin(), req.params.end());
    const Response r = handle(req.method, req.path, query, req.body);
    res.status = r.status;
    res.set_content(r.body, "application/json");
  };
  server.Get(".*", handler);
  server.Post(".*", handler);
  server.Put(".*", handler);
  server.Delete(".*", handler);
  server.Patch(".*", handler);
}

}  // namespace p2c::service
