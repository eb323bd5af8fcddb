#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace p2c {

/// Incremental SHA-256; `hex()` finalizes.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  Sha256& update(std::span<const std::byte> bytes);
  Sha256& update(std::string_view text);
  template <typename T>
  Sha256& update_values(std::span<const T> values) {
    return update(std::as_bytes(values));
  }
  std::string hex();

 private:
  void* ctx_;
};

std::string sha256_hex(std::string_view text);

std::string base64_encode(std::span<const std::byte> bytes);
std::vector<std::byte> base64_decode(std::string_view text);

bool is_valid_utf8(std::string_view text);

}  // namespace p2c
