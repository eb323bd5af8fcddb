#include "p2c/index.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <unordered_set>

#include "p2c/error.hpp"

namespace p2c {
namespace {

static_assert(std::endian::native == std::endian::little, "index files assume a little-endian host");

constexpr char kMagic[8] = {'P', '2', 'C', 'I', 'N', 'D', 'E', 'X'};
constexpr std::uint32_t kFormat = 1;

struct Candidate {
  double distance;
  std::size_t row;
};

std::vector<RankedResult> top_k(std::vector<Candidate> candidates, std::size_t k, const std::vector<std::string>& ids) {
  const auto less = [&](const Candidate& a, const Candidate& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    return ids[a.row] < ids[b.row];
  };
  k = std::min(k, candidates.size());
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k), candidates.end(), less);
  std::vector<RankedResult> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back({ids[candidates[i].row], candidates[i].distance, i + 1});
  return out;
}

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::string& what) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) fail(ErrorCode::kIo, "index file truncated while reading " + what);
  return value;
}

std::string get_string(std::istream& in, std::size_t len, const std::string& what) {
  std::string s(len, '\0');
  in.read(s.data(), static_cast<std::streamsize>(len));
  if (!in) fail(ErrorCode::kIo, "index file truncated while reading " + what);
  return s;
}

}  // namespace

EmbeddingIndex::EmbeddingIndex(std::vector<std::string> ids, RowMatrix embeddings, std::string model_hash)
    : ids_(std::move(ids)), embeddings_(std::move(embeddings)), model_hash_(std::move(model_hash)) {
  require(static_cast<std::size_t>(embeddings_.rows()) == ids_.size(), "index: row count must equal id count");
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (!position_.emplace(ids_[i], i).second) {
      fail(ErrorCode::kInvalidInput, "index: duplicate snippet id '" + ids_[i] + "'");
    }
  }
}

std::size_t EmbeddingIndex::position_of(std::string_view id) const {
  const auto it = position_.find(std::string(id));
  return it == position_.end() ? size() : it->second;
}

std::vector<RankedResult> EmbeddingIndex::search_exact(const Vector& query, std::size_t k) const {
  require(k >= 1, "search: k must be >= 1");
  require(static_cast<std::size_t>(query.size()) == dim(), "search: query dimension does not match the index");
  std::vector<Candidate> candidates(size());
  for (std::size_t i = 0; i < size(); ++i) {
    candidates[i] = {(embeddings_.row(static_cast<Eigen::Index>(i)).transpose() - query).squaredNorm(), i};
  }
  return top_k(std::move(candidates), k, ids_);
}

EmbeddingIndex build_index(std::span<const CodeSnippet> snippets, const Model& model) {
  require(!snippets.empty(), "build_index: no snippets");
  std::vector<std::string> ids;
  ids.reserve(snippets.size());
  RowMatrix rows(static_cast<Eigen::Index>(snippets.size()), static_cast<Eigen::Index>(model.params.dim()));
  for (std::size_t i = 0; i < snippets.size(); ++i) {
    try {
      rows.row(static_cast<Eigen::Index>(i)) = model.encode_code(snippets[i].code).transpose();
    } catch (const Error& e) {
      fail(e.code(), "snippet '" + snippets[i].id + "': " + e.what());
    }
    ids.push_back(snippets[i].id);
  }
  return EmbeddingIndex(std::move(ids), std::move(rows), model.hash());
}

void require_fresh(const EmbeddingIndex& index, const Model& model) {
  if (index.model_hash() != model.hash()) {
    fail(ErrorCode::kStaleIndex, "stale index: built for model " + index.model_hash() + ", serving " + model.hash());
  }
}

std::vector<RankedResult> search(std::string_view policy_text, Facet facet, const EmbeddingIndex& index,
                                 std::size_t k, const Model& model) {
  require(k >= 1, "search: k must be >= 1");
  require_fresh(index, model);
  return index.search_exact(model.encode_policy(policy_text, facet), k);
}

void save_index(const std::filesystem::path& path, const EmbeddingIndex& index) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kFormat);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(index.dim()));
  put<std::uint64_t>(out, index.size());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(index.model_hash().size()));
  out.write(index.model_hash().data(), static_cast<std::streamsize>(index.model_hash().size()));
  for (const auto& id : index.ids()) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(id.size()));
    out.write(id.data(), static_cast<std::streamsize>(id.size()));
  }
  out.write(reinterpret_cast<const char*>(index.embeddings().data()),
            static_cast<std::streamsize>(index.embeddings().size() * sizeof(double)));
  if (!out) fail(ErrorCode::kIo, "write failed for " + path.string());
}

EmbeddingIndex load_index(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open index " + path.string());
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    fail(ErrorCode::kInvalidInput, path.string() + " is not an index file");
  }
  const auto format = get<std::uint32_t>(in, "format");
  if (format != kFormat) fail(ErrorCode::kInvalidInput, "unsupported index format " + std::to_string(format));
  const auto d = get<std::uint32_t>(in, "dimension");
  const auto count = get<std::uint64_t>(in, "count");
  const auto hash = get_string(in, get<std::uint32_t>(in, "hash length"), "model hash");
  std::vector<std::string> ids;
  ids.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) ids.push_back(get_string(in, get<std::uint32_t>(in, "id length"), "id"));
  RowMatrix rows(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(d));
  in.read(reinterpret_cast<char*>(rows.data()), static_cast<std::streamsize>(rows.size() * sizeof(double)));
  if (!in) fail(ErrorCode::kIo, "index file truncated while reading embeddings");
  return EmbeddingIndex(std::move(ids), std::move(rows), hash);
}

IvfIndex::IvfIndex(const EmbeddingIndex& base, const IvfOptions& options) : base_(&base), n_probe_(options.n_probe) {
  require(base.size() > 0, "ivf: empty index");
  require(options.n_probe >= 1, "ivf: n_probe must be >= 1");
  const std::size_t n = base.size();
  std::size_t lists = options.n_lists == 0
                          ? static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n))))
                          : options.n_lists;
  lists = std::clamp<std::size_t>(lists, 1, n);
  const RowMatrix& x = base.embeddings();

  // Seeded distinct rows as initial centroids, then Lloyd iterations.
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), 0);
  std::mt19937_64 rng(options.seed);
  std::shuffle(rows.begin(), rows.end(), rng);
  centroids_.resize(static_cast<Eigen::Index>(lists), x.cols());
  for (std::size_t c = 0; c < lists; ++c) centroids_.row(static_cast<Eigen::Index>(c)) = x.row(static_cast<Eigen::Index>(rows[c]));

  std::vector<std::size_t> assign(n, 0);
  const auto assign_all = [&] {
    // ||x - c||^2 = ||x||^2 - 2 x.c + ||c||^2; ||x||^2 is constant per row.
    const RowMatrix dots = x * centroids_.transpose();
    const Vector c_norms = centroids_.rowwise().squaredNorm();
    for (std::size_t i = 0; i < n; ++i) {
      Eigen::Index best = 0;
      (c_norms.transpose() - 2.0 * dots.row(static_cast<Eigen::Index>(i))).minCoeff(&best);
      assign[i] = static_cast<std::size_t>(best);
    }
  };
  for (std::size_t it = 0; it < options.iterations; ++it) {
    assign_all();
    RowMatrix sums = RowMatrix::Zero(centroids_.rows(), centroids_.cols());
    std::vector<std::size_t> counts(lists, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sums.row(static_cast<Eigen::Index>(assign[i])) += x.row(static_cast<Eigen::Index>(i));
      ++counts[assign[i]];
    }
    for (std::size_t c = 0; c < lists; ++c) {
      if (counts[c] > 0) centroids_.row(static_cast<Eigen::Index>(c)) = sums.row(static_cast<Eigen::Index>(c)) / static_cast<double>(counts[c]);
    }
  }
  assign_all();
  lists_.assign(lists, {});
  for (std::size_t i = 0; i < n; ++i) lists_[assign[i]].push_back(i);
}

std::vector<RankedResult> IvfIndex::search(const Vector& query, std::size_t k) const {
  require(k >= 1, "search: k must be >= 1");
  require(static_cast<std::size_t>(query.size()) == base_->dim(), "search: query dimension does not match the index");
  const std::size_t lists = n_lists();
  std::vector<Candidate> cells(lists);
  for (std::size_t c = 0; c < lists; ++c) {
    cells[c] = {(centroids_.row(static_cast<Eigen::Index>(c)).transpose() - query).squaredNorm(), c};
  }
  const std::size_t probe = std::min(n_probe_, lists);
  std::partial_sort(cells.begin(), cells.begin() + static_cast<std::ptrdiff_t>(probe), cells.end(),
                    [](const Candidate& a, const Candidate& b) {
                      return a.distance != b.distance ? a.distance < b.distance : a.row < b.row;
                    });
  std::vector<Candidate> candidates;
  const RowMatrix& x = base_->embeddings();
  for (std::size_t p = 0; p < probe; ++p) {
    for (std::size_t i : lists_[cells[p].row]) {
      candidates.push_back({(x.row(static_cast<Eigen::Index>(i)).transpose() - query).squaredNorm(), i});
    }
  }
  return top_k(std::move(candidates), k, base_->ids());
}

double recall_at_k(std::span<const RankedResult> exact, std::span<const RankedResult> approximate) {
  require(!exact.empty(), "recall_at_k: empty exact result");
  std::unordered_set<std::string> found;
  for (const auto& r : approximate) found.insert(r.snippet_id);
  std::size_t hits = 0;
  for (const auto& r : exact) hits += found.contains(r.snippet_id) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(exact.size());
}

}  // namespace p2c
