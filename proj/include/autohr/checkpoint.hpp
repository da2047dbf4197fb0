#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "autohr/cell.hpp"
#include "autohr/errors.hpp"

namespace autohr {

// A checkpoint is a directory:
//   genotype.txt  -- cell wiring (absent for pure supernet states)
//   params.bin    -- all named arrays as raw little-endian doubles
//   manifest.txt  -- one line per array: <name> <count> <byte offset>
// Array values come from ParamView lists; the same views are filled on load.

inline void save_checkpoint(const std::string& dir, const std::vector<ParamView>& views,
                            const std::string* genotype_text) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create checkpoint directory " + dir);

  std::ofstream bin(dir + "/params.bin", std::ios::binary | std::ios::trunc);
  std::ofstream man(dir + "/manifest.txt", std::ios::trunc);
  if (!bin || !man) throw IoError("cannot write checkpoint files in " + dir);
  size_t offset = 0;
  for (const auto& v : views) {
    if (v.name.find(' ') != std::string::npos) {
      throw ValueError("checkpoint: array name contains a space: " + v.name);
    }
    man << v.name << " " << v.count << " " << offset << "\n";
    bin.write(reinterpret_cast<const char*>(v.value),
              std::streamsize(v.count * sizeof(double)));
    offset += v.count * sizeof(double);
  }
  if (!bin || !man) throw IoError("short write in checkpoint " + dir);
  bin.close();
  man.close();

  if (genotype_text != nullptr) {
    std::ofstream gf(dir + "/genotype.txt", std::ios::trunc);
    if (!gf) throw IoError("cannot write genotype in " + dir);
    gf << *genotype_text;
  }
}

struct ManifestEntry {
  size_t count = 0;
  size_t offset = 0;
};

inline std::map<std::string, ManifestEntry> read_manifest(const std::string& dir) {
  std::ifstream man(dir + "/manifest.txt");
  if (!man) throw IoError("cannot open manifest in " + dir);
  std::map<std::string, ManifestEntry> out;
  std::string line;
  while (std::getline(man, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string name;
    ManifestEntry e;
    if (!(ls >> name >> e.count >> e.offset)) {
      throw IoError("malformed manifest line '" + line + "' in " + dir);
    }
    if (!out.emplace(name, e).second) {
      throw IoError("duplicate manifest entry '" + name + "' in " + dir);
    }
  }
  return out;
}

// Fills every view from the checkpoint; a missing name or a size mismatch is
// an error, extra arrays in the checkpoint are ignored.
inline void load_checkpoint_values(const std::string& dir, const std::vector<ParamView>& views) {
  const auto manifest = read_manifest(dir);
  std::ifstream bin(dir + "/params.bin", std::ios::binary);
  if (!bin) throw IoError("cannot open params.bin in " + dir);
  for (const auto& v : views) {
    const auto it = manifest.find(v.name);
    if (it == manifest.end()) {
      throw IoError("checkpoint " + dir + " is missing array '" + v.name + "'");
    }
    if (it->second.count != v.count) {
      throw IoError("checkpoint array '" + v.name + "' has " +
                    std::to_string(it->second.count) + " values, expected " +
                    std::to_string(v.count));
    }
    bin.seekg(std::streamoff(it->second.offset));
    bin.read(reinterpret_cast<char*>(v.value), std::streamsize(v.count * sizeof(double)));
    if (!bin) throw IoError("short read for array '" + v.name + "' in " + dir);
  }
}

inline bool checkpoint_has_array(const std::string& dir, const std::string& name) {
  return read_manifest(dir).count(name) > 0;
}

inline std::string load_checkpoint_genotype(const std::string& dir) {
  std::ifstream gf(dir + "/genotype.txt");
  if (!gf) throw IoError("no genotype.txt in checkpoint " + dir);
  std::ostringstream ss;
  ss << gf.rdbuf();
  return ss.str();
}

inline bool checkpoint_has_genotype(const std::string& dir) {
  return std::filesystem::exists(dir + "/genotype.txt");
}

}  // namespace autohr
