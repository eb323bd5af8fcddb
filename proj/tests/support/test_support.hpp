#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "p2c/bpe.hpp"
#include "p2c/encoder.hpp"
#include "p2c/model.hpp"

namespace p2c::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::string templ = (std::filesystem::temp_directory_path() / "p2c-test-XXXXXX").string();
    if (::mkdtemp(templ.data()) == nullptr) throw std::runtime_error("mkdtemp failed");
    path_ = templ;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::vector<std::string> toy_texts() {
  return {"always close the handle after use", "never log the raw password",
          "int open_file(const char* path) { return fd; }", "prefer safe_copy over raw_copy for buffers",
          "void f() { safe_copy(dst, src); }", "void g() { raw_copy(dst, src); }"};
}

/// Small model over the toy texts.
inline Model toy_model(std::uint64_t seed = 1, FacetMode mode = FacetMode::kPrefixed, std::size_t dim = 8,
                       std::size_t hidden = 16) {
  Model m;
  m.vocab = train_bpe(toy_texts(), 120);
  m.params = EncoderParams::initialize({m.vocab.size(), dim, hidden}, mode, seed, m.vocab.hash());
  return m;
}

/// Row-major matrix of n random unit rows.
inline RowMatrix random_unit_rows(std::mt19937_64& rng, std::size_t n, std::size_t d) {
  std::normal_distribution<double> g(0.0, 1.0);
  RowMatrix e(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < e.rows(); ++i) {
    for (Eigen::Index j = 0; j < e.cols(); ++j) e(i, j) = g(rng);
    e.row(i).normalize();
  }
  return e;
}

}  // namespace p2c::testing
