#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "p2c/corpus.hpp"

namespace p2c {

// Line-delimited JSON readers and writers for the corpus files:
//   policies.jsonl  {"id","text","source"}
//   snippets.jsonl  {"id","code","ground_truth":[{"policy_id","facet"}]}
//   bugfix.jsonl    {"id","comment","code_before","code_after"}
//   cc_pairs.jsonl  {"code","comment"}
//   docs.txt        blank-line-separated paragraphs

nlohmann::json to_json(const Policy& p);
nlohmann::json to_json(const CodeSnippet& s);
nlohmann::json to_json(const BugFixRecord& r);
nlohmann::json to_json(const CodeCommentPair& p);
Policy policy_from_json(const nlohmann::json& j);
CodeSnippet snippet_from_json(const nlohmann::json& j);
BugFixRecord bugfix_from_json(const nlohmann::json& j);
CodeCommentPair cc_pair_from_json(const nlohmann::json& j);

std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, const std::vector<nlohmann::json>& rows);

std::vector<Policy> read_policies(const std::filesystem::path& path);
std::vector<CodeSnippet> read_snippets(const std::filesystem::path& path);
std::vector<BugFixRecord> read_bugfixes(const std::filesystem::path& path);
std::vector<CodeCommentPair> read_cc_pairs(const std::filesystem::path& path);
void write_policies(const std::filesystem::path& path, const std::vector<Policy>& policies);
void write_snippets(const std::filesystem::path& path, const std::vector<CodeSnippet>& snippets);
void write_bugfixes(const std::filesystem::path& path, const std::vector<BugFixRecord>& records);
void write_cc_pairs(const std::filesystem::path& path, const std::vector<CodeCommentPair>& pairs);

std::vector<std::string> read_paragraphs(const std::filesystem::path& path);
std::vector<std::string> parse_paragraphs(const std::string& text);
void write_paragraphs(const std::filesystem::path& path, const std::vector<std::string>& paragraphs);

}  // namespace p2c
