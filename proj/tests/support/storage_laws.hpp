#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "opflow/error.hpp"
#include "opflow/storage/local_storage.hpp"

namespace opflow::test_support {

/// RFC 1321 test suite.
inline const std::vector<std::pair<std::string, std::string>>& md5_vectors() {
  static const std::vector<std::pair<std::string, std::string>> v = {
      {"", "d41d8cd98f00b204e9800998ecf8427e"},
      {"a", "0cc175b9c0f1b6a831c399e269772661"},
      {"abc", "900150983cd24fb0d6963f7d28e17f72"},
      {"message digest", "f96b697d7cb7938d525a2f31aaf161d0"},
      {"abcdefghijklmnopqrstuvwxyz", "c3fcd3d76192e4007dfb496cca67e13b"},
      {"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789", "d174ab98d277d9f5a5611c2c9f419d9f"},
      {"12345678901234567890123456789012345678901234567890123456789012345678901234567890",
       "57edf4a22be3c955ac49da2e2107b67a"},
  };
  return v;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

/// Relative path -> content for every regular file under `root`.
inline std::map<std::string, std::string> tree_of(const std::filesystem::path& root) {
  std::map<std::string, std::string> out;
  if (std::filesystem::is_regular_file(root)) {
    out[""] = slurp(root);
    return out;
  }
  for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[std::filesystem::relative(e.path(), root).string()] = slurp(e.path());
  }
  return out;
}

/// Digest computed by the system md5sum tool.
inline std::string md5sum_tool(const std::filesystem::path& p) {
  std::string cmd = "md5sum '" + p.string() + "'";
  FILE* f = ::popen(cmd.c_str(), "r");
  if (!f) return {};
  char buf[64] = {};
  std::size_t n = std::fread(buf, 1, 32, f);
  ::pclose(f);
  return std::string(buf, n);
}

/// Exercises the storage contract against `storage`, using `scratch` for
/// local files. Returns a description of every violated law.
inline std::vector<std::string> check_storage_laws(StorageClient& storage, const std::filesystem::path& scratch,
                                                   std::uint64_t seed) {
  namespace fs = std::filesystem;
  std::vector<std::string> bad;
  std::mt19937_64 rng(seed);
  auto random_bytes = [&](std::size_t n) {
    std::string s(n, '\0');
    for (auto& c : s) c = static_cast<char>(rng() & 0xff);
    return s;
  };
  auto write = [](const fs::path& p, const std::string& bytes) {
    fs::create_directories(p.parent_path());
    std::ofstream(p, std::ios::binary) << bytes;
  };
  auto expect_code = [&](const std::string& what, ErrorCode code, auto&& fn) {
    try {
      fn();
      bad.push_back(what + ": no error");
    } catch (const Error& e) {
      if (e.code() != code) bad.push_back(what + ": " + e.what());
    }
  };
  fs::create_directories(scratch);

  for (int round = 0; round < 20; ++round) {
    std::string key = "laws/r" + std::to_string(round) + "/obj";
    fs::path src = scratch / ("src" + std::to_string(round));
    fs::remove_all(src);
    bool as_dir = round % 2 == 1;
    if (as_dir) {
      int files = 1 + static_cast<int>(rng() % 6);
      for (int i = 0; i < files; ++i) {
        std::string rel = (rng() % 2 ? "sub/" : "") + std::string("f") + std::to_string(i);
        write(src / rel, random_bytes(rng() % 5000));
      }
    } else {
      write(src, random_bytes(rng() % 70000));
    }
    auto want = tree_of(src);
    storage.upload(src, key);
    if (!storage.exists(key)) bad.push_back(key + ": not present after upload");

    fs::path back = scratch / ("back" + std::to_string(round));
    fs::remove_all(back);
    storage.download(key, back);
    if (tree_of(back) != want) bad.push_back(key + ": download differs from upload");

    auto listed = storage.list(key);
    if (!std::is_sorted(listed.begin(), listed.end())) bad.push_back(key + ": list not sorted");
    if (listed.size() != want.size()) bad.push_back(key + ": list size " + std::to_string(listed.size()));

    if (!as_dir) {
      std::string md5 = storage.get_md5(key);
      if (md5 != md5sum_tool(src)) bad.push_back(key + ": md5 differs from md5sum");
    } else {
      expect_code(key + ": md5 of directory", ErrorCode::NotAFile, [&] { storage.get_md5(key); });
    }

    std::string copy_key = "laws/copies/c" + std::to_string(round);
    storage.copy(key, copy_key);
    fs::path copied = scratch / ("copy" + std::to_string(round));
    fs::remove_all(copied);
    storage.download(copy_key, copied);
    if (tree_of(copied) != want) bad.push_back(copy_key + ": copy differs");

    // Overwrite with a smaller tree: nothing of the old content survives.
    fs::path next = scratch / ("next" + std::to_string(round));
    fs::remove_all(next);
    write(next / "only", "replacement");
    storage.upload(next, key);
    fs::path again = scratch / ("again" + std::to_string(round));
    fs::remove_all(again);
    storage.download(key, again);
    if (tree_of(again) != tree_of(next)) bad.push_back(key + ": overwrite left stale content");
    fs::remove_all(copied);
    storage.download(copy_key, copied);
    if (tree_of(copied) != want) bad.push_back(copy_key + ": copy changed by source overwrite");

    storage.remove(key);
    if (storage.exists(key)) bad.push_back(key + ": present after remove");
    storage.remove(key);
  }

  for (const auto& [text, digest] : md5_vectors()) {
    if (md5_hex(text) != digest) bad.push_back("md5_hex('" + text + "')");
    fs::path p = scratch / "vector";
    write(p, text);
    storage.upload(p, "laws/vector");
    if (storage.get_md5("laws/vector") != digest) bad.push_back("get_md5('" + text + "')");
  }

  for (std::string k : {"", "/a", "a/", "a//b", "a/./b", "a/../b", ".."}) {
    expect_code("key '" + k + "'", ErrorCode::KeyInvalid, [&] { storage.exists(k); });
  }
  expect_code("download missing", ErrorCode::KeyMissing, [&] { storage.download("laws/none", scratch / "none"); });
  expect_code("copy missing", ErrorCode::KeyMissing, [&] { storage.copy("laws/none", "laws/x"); });
  expect_code("upload missing", ErrorCode::SourceMissing, [&] { storage.upload(scratch / "absent", "laws/x"); });
  return bad;
}

}  // namespace opflow::test_support
