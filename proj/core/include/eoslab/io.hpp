#pragma once

#include <cstdio>
#include <fstream>
#include <string>

#include "eoslab/error.hpp"

namespace eoslab {

// Write-to-temp then rename, so readers never observe a partial file.
inline void atomic_write_file(const std::string& path, const std::string& contents) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw EoslabError("cannot open for write: " + tmp);
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw EoslabError("write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw EoslabError("rename failed: " + tmp + " -> " + path);
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw EoslabError("cannot open: " + path);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace eoslab
