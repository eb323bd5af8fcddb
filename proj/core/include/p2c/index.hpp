#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "p2c/corpus.hpp"
#include "p2c/encoder.hpp"
#include "p2c/model.hpp"

namespace p2c {

struct RankedResult {
  std::string snippet_id;
  double distance = 0.0;
  std::size_t rank = 0;  // 1-based
};

/// Snippet ids with their unit embeddings, tied to the model that produced
/// them. Immutable once built.
class EmbeddingIndex {
 public:
  EmbeddingIndex() = default;
  EmbeddingIndex(std::vector<std::string> ids, RowMatrix embeddings, std::string model_hash);

  const std::vector<std::string>& ids() const { return ids_; }
  const RowMatrix& embeddings() const { return embeddings_; }
  const std::string& model_hash() const { return model_hash_; }
  std::size_t size() const { return ids_.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(embeddings_.cols()); }
  /// Row of `id`, or size() if absent.
  std::size_t position_of(std::string_view id) const;
  bool contains(std::string_view id) const { return position_of(id) != size(); }

  /// Exact scan: top-k by ascending squared distance, ties by ascending id.
  std::vector<RankedResult> search_exact(const Vector& query, std::size_t k) const;

 private:
  std::vector<std::string> ids_;
  RowMatrix embeddings_;
  std::string model_hash_;
  std::unordered_map<std::string, std::size_t> position_;
};

/// Encodes every snippet in order. Encoding failures name the snippet.
EmbeddingIndex build_index(std::span<const CodeSnippet> snippets, const Model& model);

/// Throws kStaleIndex unless the index was built by `model`.
void require_fresh(const EmbeddingIndex& index, const Model& model);

/// Exact search for one faceted policy.
std::vector<RankedResult> search(std::string_view policy_text, Facet facet, const EmbeddingIndex& index,
                                 std::size_t k, const Model& model);

// Index file (little-endian):
//   "P2CINDEX" u32 format=1, u32 d, u64 count, u32 hash_len, hash bytes,
//   count x (u32 id_len, id bytes), count x d f64 row-major.
void save_index(const std::filesystem::path& path, const EmbeddingIndex& index);
EmbeddingIndex load_index(const std::filesystem::path& path);

struct IvfOptions {
  /// 0 picks round(sqrt(count)).
  std::size_t n_lists = 0;
  std::size_t n_probe = 24;
  std::size_t iterations = 12;
  std::uint64_t seed = 0;
};

/// Inverted-file approximate search: k-means cells over the exact index,
/// scanning only the n_probe cells nearest the query. Results are re-ranked
/// exactly within the probed cells.
class IvfIndex {
 public:
  IvfIndex(const EmbeddingIndex& base, const IvfOptions& options = {});

  std::vector<RankedResult> search(const Vector& query, std::size_t k) const;
  std::size_t n_lists() const { return static_cast<std::size_t>(centroids_.rows()); }

 private:
  const EmbeddingIndex* base_;
  std::size_t n_probe_;
  RowMatrix centroids_;
  std::vector<std::vector<std::size_t>> lists_;
};

/// Fraction of the exact top-k ids that the approximate top-k also returns.
double recall_at_k(std::span<const RankedResult> exact, std::span<const RankedResult> approximate);

}  // namespace p2c
