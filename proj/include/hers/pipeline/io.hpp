#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>

#include "hers/error.hpp"

namespace hers::pipeline {

namespace fs = std::filesystem;

/// Writes through "<path>.partial" and renames on success. If the writer
/// throws, the .partial file is left behind and the error propagates.
inline void write_atomic(const fs::path& path, const std::function<void(std::ostream&)>& writer) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path partial = path;
  partial += ".partial";
  {
    std::ofstream out(partial, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open '" + partial.string() + "' for writing");
    writer(out);
    out.flush();
    if (!out) throw Error("write failed for '" + partial.string() + "'");
  }
  std::error_code ec;
  fs::rename(partial, path, ec);
  if (ec) throw Error("cannot rename '" + partial.string() + "': " + ec.message());
}

inline void write_text_atomic(const fs::path& path, const std::string& text) {
  write_atomic(path, [&](std::ostream& os) { os << text; });
}

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace hers::pipeline
