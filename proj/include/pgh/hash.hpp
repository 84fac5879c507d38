#pragma once

#include <string>
#include <string_view>

namespace pgh {

/// Lower-case hex SHA-256 of the input bytes.
std::string sha256_hex(std::string_view data);

/// Incremental SHA-256 with length-prefixed parts, so that ("ab","c") and
/// ("a","bc") digest differently.
class Digest {
 public:
  Digest();
  ~Digest();
  Digest(const Digest&) = delete;
  Digest& operator=(const Digest&) = delete;

  Digest& add(std::string_view part);
  std::string hex();

 private:
  struct Impl;
  Impl* impl_;
};

}  // namespace pgh
