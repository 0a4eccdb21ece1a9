#pragma once

#include <openssl/evp.h>

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace splitshield {

// SHA-256 hex digest; used for content-addressed cache keys and for the
// weight checksums that enforce the no-retraining restriction.
inline std::string sha256_hex(std::span<const uint8_t> bytes) {
  unsigned char out[EVP_MAX_MD_SIZE];
  unsigned int out_len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx) throw std::runtime_error("EVP_MD_CTX_new failed");
  bool ok = EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) &&
            EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) &&
            EVP_DigestFinal_ex(ctx, out, &out_len);
  EVP_MD_CTX_free(ctx);
  if (!ok) throw std::runtime_error("sha256 failed");
  static const char* hex = "0123456789abcdef";
  std::string s;
  s.reserve(out_len * 2);
  for (unsigned int i = 0; i < out_len; ++i) {
    s.push_back(hex[out[i] >> 4]);
    s.push_back(hex[out[i] & 0xf]);
  }
  return s;
}

inline std::string sha256_hex(const std::string& s) {
  return sha256_hex(std::span<const uint8_t>(
      reinterpret_cast<const uint8_t*>(s.data()), s.size()));
}

inline std::string sha256_hex(const std::vector<float>& v) {
  return sha256_hex(std::span<const uint8_t>(
      reinterpret_cast<const uint8_t*>(v.data()), v.size() * sizeof(float)));
}

}  // namespace splitshield
