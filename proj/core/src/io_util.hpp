#pragma once

// Internal file helpers shared by the .cpp translation units; not installed.

#include <filesystem>
#include <fstream>
#include <string>

#include "blocksurgeon/errors.hpp"

namespace blocksurgeon::io {

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("cannot open '" + path + "' for reading");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("short write to '" + path + "'");
}

inline bool exists(const std::string& path) {
  return std::filesystem::exists(path);
}

inline void ensure_dir(const std::string& dir) {
  std::filesystem::create_directories(dir);
}

inline std::string join(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

}  // namespace blocksurgeon::io
