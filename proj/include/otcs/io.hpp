#pragma once

#include "otcs/common.hpp"

#include <json.hpp>

#include <string>
#include <utility>
#include <vector>

namespace otcs {

/// Self-describing binary container: 8-byte magic, u32 version, u64 header
/// length, UTF-8 JSON header, then each named array as little-endian f64 in
/// the order listed under header["arrays"].
struct Blob {
  std::string magic;  // exactly 8 characters
  nlohmann::json header = nlohmann::json::object();
  std::vector<std::pair<std::string, Eigen::VectorXd>> arrays;

  const Eigen::VectorXd& array(const std::string& name) const;
};

void save_blob(const std::string& path, const Blob& blob);
/// Throws Io when the magic does not match `expected_magic`.
Blob load_blob(const std::string& path, const std::string& expected_magic);

/// Creates the parent directory of `path` if needed.
void ensure_parent_dir(const std::string& path);

}  // namespace otcs
