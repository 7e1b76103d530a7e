#include "otcs/io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace otcs {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

namespace {

constexpr std::uint32_t kBlobVersion = 1;

template <typename T>
void write_pod(std::ofstream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in, const std::string& path) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  require(in.good(), ErrorKind::Io, path + ": truncated file");
  return value;
}

}  // namespace

const Eigen::VectorXd& Blob::array(const std::string& name) const {
  for (const auto& [key, values] : arrays)
    if (key == name) return values;
  fail(ErrorKind::Io, "checkpoint is missing array '" + name + "'");
}

void ensure_parent_dir(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
}

void save_blob(const std::string& path, const Blob& blob) {
  require(blob.magic.size() == 8, ErrorKind::InvalidArgument, "blob magic must be 8 bytes");
  nlohmann::json header = blob.header;
  header["arrays"] = nlohmann::json::array();
  for (const auto& [name, values] : blob.arrays)
    header["arrays"].push_back({{"name", name}, {"size", values.size()}});
  const std::string text = header.dump();

  ensure_parent_dir(path);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorKind::Io, "cannot write " + path);
  out.write(blob.magic.data(), 8);
  write_pod(out, kBlobVersion);
  write_pod(out, static_cast<std::uint64_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, values] : blob.arrays)
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(double)));
  require(out.good(), ErrorKind::Io, "write failed for " + path);
}

Blob load_blob(const std::string& path, const std::string& expected_magic) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::Io, "cannot open " + path);
  Blob blob;
  blob.magic.resize(8);
  in.read(blob.magic.data(), 8);
  require(in.good() && blob.magic == expected_magic, ErrorKind::Io,
          path + ": not a '" + expected_magic + "' file");
  const auto version = read_pod<std::uint32_t>(in, path);
  require(version == kBlobVersion, ErrorKind::Io, path + ": unsupported version " + std::to_string(version));
  const auto len = read_pod<std::uint64_t>(in, path);
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  require(in.good(), ErrorKind::Io, path + ": truncated header");
  blob.header = nlohmann::json::parse(text);
  for (const auto& entry : blob.header.at("arrays")) {
    Eigen::VectorXd values(entry.at("size").get<Eigen::Index>());
    in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)));
    require(in.good() || (in.eof() && values.size() == 0), ErrorKind::Io, path + ": truncated array");
    blob.arrays.emplace_back(entry.at("name").get<std::string>(), std::move(values));
  }
  return blob;
}

}  // namespace otcs
