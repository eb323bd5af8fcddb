#include "p2c/corpus_io.hpp"

#include <fstream>
#include <sstream>

#include "p2c/error.hpp"

namespace p2c {
namespace {

template <typename T>
T field(const nlohmann::json& j, const char* name) {
  if (!j.contains(name)) fail(ErrorCode::kInvalidInput, std::string("missing field '") + name + "'");
  try {
    return j.at(name).get<T>();
  } catch (const nlohmann::json::exception&) {
    fail(ErrorCode::kInvalidInput, std::string("field '") + name + "' has the wrong type");
  }
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
  return out;
}

}  // namespace

nlohmann::json to_json(const Policy& p) {
  return {{"id", p.id}, {"text", p.text}, {"source", std::string(to_string(p.source))}};
}

nlohmann::json to_json(const CodeSnippet& s) {
  nlohmann::json j{{"id", s.id}, {"code", s.code}};
  if (!s.ground_truth.empty()) {
    auto gt = nlohmann::json::array();
    for (const auto& g : s.ground_truth) gt.push_back({{"policy_id", g.policy_id}, {"facet", std::string(to_string(g.facet))}});
    j["ground_truth"] = std::move(gt);
  }
  return j;
}

nlohmann::json to_json(const BugFixRecord& r) {
  return {{"id", r.id}, {"comment", r.comment}, {"code_before", r.code_before}, {"code_after", r.code_after}};
}

nlohmann::json to_json(const CodeCommentPair& p) { return {{"code", p.code}, {"comment", p.comment}}; }

Policy policy_from_json(const nlohmann::json& j) {
  Policy p{field<std::string>(j, "id"), field<std::string>(j, "text"), PolicySource::kUser};
  if (j.contains("source")) p.source = parse_policy_source(field<std::string>(j, "source"));
  return p;
}

CodeSnippet snippet_from_json(const nlohmann::json& j) {
  CodeSnippet s{field<std::string>(j, "id"), field<std::string>(j, "code"), {}};
  if (j.contains("ground_truth") && !j.at("ground_truth").is_null()) {
    for (const auto& g : j.at("ground_truth")) {
      s.ground_truth.push_back({field<std::string>(g, "policy_id"), parse_facet(field<std::string>(g, "facet"))});
    }
  }
  return s;
}

BugFixRecord bugfix_from_json(const nlohmann::json& j) {
  return {field<std::string>(j, "id"), field<std::string>(j, "comment"), field<std::string>(j, "code_before"),
          field<std::string>(j, "code_after")};
}

CodeCommentPair cc_pair_from_json(const nlohmann::json& j) {
  return {field<std::string>(j, "code"), field<std::string>(j, "comment")};
}

std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot read " + path.string());
  std::vector<nlohmann::json> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      rows.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::kInvalidInput, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return rows;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<nlohmann::json>& rows) {
  auto out = open_out(path);
  for (const auto& r : rows) out << r.dump() << '\n';
}

template <typename T, typename F>
static std::vector<T> read_rows(const std::filesystem::path& path, F parse) {
  std::vector<T> out;
  std::size_t row = 0;
  for (const auto& j : read_jsonl(path)) {
    ++row;
    try {
      out.push_back(parse(j));
    } catch (const Error& e) {
      fail(e.code(), path.string() + ": record " + std::to_string(row) + ": " + e.what());
    }
  }
  return out;
}

std::vector<Policy> read_policies(const std::filesystem::path& path) {
  return read_rows<Policy>(path, policy_from_json);
}
std::vector<CodeSnippet> read_snippets(const std::filesystem::path& path) {
  return read_rows<CodeSnippet>(path, snippet_from_json);
}
std::vector<BugFixRecord> read_bugfixes(const std::filesystem::path& path) {
  return read_rows<BugFixRecord>(path, bugfix_from_json);
}

std::vector<CodeCommentPair> read_cc_pairs(const std::filesystem::path& path) {
  return read_rows<CodeCommentPair>(path, cc_pair_from_json);
}

template <typename T>
static void write_rows(const std::filesystem::path& path, const std::vector<T>& rows) {
  std::vector<nlohmann::json> js;
  js.reserve(rows.size());
  for (const auto& r : rows) js.push_back(to_json(r));
  write_jsonl(path, js);
}

void write_policies(const std::filesystem::path& path, const std::vector<Policy>& p) { write_rows(path, p); }
void write_snippets(const std::filesystem::path& path, const std::vector<CodeSnippet>& s) { write_rows(path, s); }
void write_bugfixes(const std::filesystem::path& path, const std::vector<BugFixRecord>& r) { write_rows(path, r); }
void write_cc_pairs(const std::filesystem::path& path, const std::vector<CodeCommentPair>& p) { write_rows(path, p); }

std::vector<std::string> parse_paragraphs(const std::string& text) {
  std::vector<std::string> paragraphs;
  std::istringstream in(text);
  std::string line;
  std::string current;
  const auto flush = [&] {
    if (!current.empty()) paragraphs.push_back(std::move(current));
    current.clear();
  };
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) {
      flush();
    } else {
      if (!current.empty()) current.push_back('\n');
      current += line;
    }
  }
  flush();
  return paragraphs;
}

std::vector<std::string> read_paragraphs(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_paragraphs(buf.str());
}

void write_paragraphs(const std::filesystem::path& path, const std::vector<std::string>& paragraphs) {
  auto out = open_out(path);
  for (std::size_t i = 0; i < paragraphs.size(); ++i) {
    if (i > 0) out << "\n";
    out << paragraphs[i] << "\n";
  }
}

}  // namespace p2c
