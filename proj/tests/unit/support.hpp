#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

#include "irsim/world_model.hpp"

namespace testing_support {

inline irsim::WorldModelInstance small_world(const std::vector<std::string>& texts,
                                             irsim::ChunkingConfig chunking = {}) {
  std::vector<irsim::Document> docs;
  for (std::size_t i = 0; i < texts.size(); ++i) docs.push_back({"doc" + std::to_string(i), texts[i]});
  return irsim::ingest(docs, chunking);
}

inline std::string repeated_words(std::size_t n, const std::string& prefix = "w") {
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) out += ' ';
    out += prefix + std::to_string(i);
  }
  return out;
}

// A fresh directory under the system temp dir, removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path = std::filesystem::temp_directory_path() /
           ("irsim-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
};

}  // namespace testing_support
