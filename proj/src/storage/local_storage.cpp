#include "opflow/storage/local_storage.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <random>
#include <system_error>

#include <openssl/evp.h>

#include "opflow/error.hpp"

namespace fs = std::filesystem;

namespace opflow {

namespace {

constexpr std::string_view kStagingDir = ".staging";

std::string random_suffix() {
  static std::atomic<std::uint64_t> counter{0};
  thread_local std::mt19937_64 rng{std::random_device{}()};
  return std::to_string(rng()) + "-" + std::to_string(counter++);
}

void copy_tree(const fs::path& from, const fs::path& to) {
  std::error_code ec;
  if (fs::is_directory(from)) {
    fs::create_directories(to, ec);
    if (ec) throw Error(ErrorCode::Io, "mkdir " + to.string() + ": " + ec.message());
    fs::copy(from, to, fs::copy_options::recursive | fs::copy_options::overwrite_existing, ec);
  } else {
    if (to.has_parent_path()) fs::create_directories(to.parent_path(), ec);
    fs::copy_file(from, to, fs::copy_options::overwrite_existing, ec);
  }
  if (ec) throw Error(ErrorCode::Io, "copy " + from.string() + " -> " + to.string() + ": " + ec.message());
}

class Md5 {
 public:
  Md5() : ctx_(EVP_MD_CTX_new()) {
    if (ctx_ == nullptr || EVP_DigestInit_ex(ctx_, EVP_md5(), nullptr) != 1) {
      throw Error(ErrorCode::Unsupported, "MD5 digest unavailable");
    }
  }
  ~Md5() { EVP_MD_CTX_free(ctx_); }
  Md5(const Md5&) = delete;
  Md5& operator=(const Md5&) = delete;

  void update(const void* data, std::size_t size) { EVP_DigestUpdate(ctx_, data, size); }

  std::string hex() {
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx_, digest.data(), &len);
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
      out.push_back(kHex[digest[i] >> 4]);
      out.push_back(kHex[digest[i] & 0xf]);
    }
    return out;
  }

 private:
  EVP_MD_CTX* ctx_;
};

}  // namespace

void validate_storage_key(std::string_view key) {
  if (key.empty() || key.front() == '/') {
    throw Error(ErrorCode::KeyInvalid, "'" + std::string(key) + "'");
  }
  std::size_t start = 0;
  while (true) {
    auto end = key.find('/', start);
    auto segment = key.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
    if (segment.empty() || segment == "." || segment == ".." ||
        (start == 0 && segment == kStagingDir)) {
      throw Error(ErrorCode::KeyInvalid, "'" + std::string(key) + "'");
    }
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
}

std::string artifact_key(std::string_view workflow_id, std::string_view step_key,
                         std::string_view artifact_name) {
  std::string key = "workflows/";
  key += workflow_id;
  key += '/';
  key += step_key;
  key += '/';
  key += artifact_name;
  return key;
}

std::string md5_hex(std::string_view bytes) {
  Md5 md5;
  md5.update(bytes.data(), bytes.size());
  return md5.hex();
}

std::string md5_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string());
  Md5 md5;
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    md5.update(buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  return md5.hex();
}

LocalStorage::LocalStorage(fs::path root) : root_(std::move(root)) {
  fs::create_directories(root_ / kStagingDir);
}

fs::path LocalStorage::resolve(std::string_view key) const {
  validate_storage_key(key);
  return root_ / fs::path(std::string(key));
}

fs::path LocalStorage::staging_path() const { return root_ / kStagingDir / random_suffix(); }

void LocalStorage::publish(const fs::path& staged, const fs::path& target) {
  std::error_code ec;
  fs::create_directories(target.parent_path(), ec);
  // rename(2) cannot replace a non-empty directory or swap file/dir kinds:
  // move the old content aside and try again. A concurrent writer may land in
  // between, so loop until our rename wins.
  for (int attempt = 0;; ++attempt) {
    fs::rename(staged, target, ec);
    if (!ec) return;
    if (attempt == 1000) throw Error(ErrorCode::Io, "publish " + target.string() + ": " + ec.message());
    fs::path trash = staging_path();
    std::error_code aside;
    fs::rename(target, trash, aside);
    if (!aside) fs::remove_all(trash, aside);
  }
}

std::string LocalStorage::upload(const fs::path& path, std::string_view key) {
  fs::path target = resolve(key);
  if (!fs::exists(path)) throw Error(ErrorCode::SourceMissing, path.string());
  fs::path staged = staging_path();
  copy_tree(path, staged);
  publish(staged, target);
  return std::string(key);
}

void LocalStorage::download(std::string_view key, const fs::path& path) {
  fs::path source = resolve(key);
  if (!fs::exists(source)) throw Error(ErrorCode::KeyMissing, std::string(key));
  copy_tree(source, path);
}

std::vector<std::string> LocalStorage::list(std::string_view prefix) {
  // Walk only the deepest directory the prefix fully names.
  std::string dir_part(prefix.substr(0, prefix.rfind('/') == std::string_view::npos ? 0 : prefix.rfind('/')));
  fs::path start = dir_part.empty() ? root_ : root_ / dir_part;
  std::vector<std::string> keys;
  std::error_code ec;
  if (!fs::is_directory(start, ec)) return keys;
  for (auto it = fs::recursive_directory_iterator(start, ec); it != fs::recursive_directory_iterator();
       it.increment(ec)) {
    if (ec) break;
    auto rel = fs::relative(it->path(), root_).generic_string();
    if (rel.rfind(kStagingDir, 0) == 0 && (rel.size() == kStagingDir.size() || rel[kStagingDir.size()] == '/')) {
      it.disable_recursion_pending();
      continue;
    }
    if (!it->is_regular_file()) continue;
    if (rel.compare(0, prefix.size(), prefix) == 0) keys.push_back(std::move(rel));
  }
  std::sort(keys.begin(), keys.end());
  return keys;
}

std::string LocalStorage::copy(std::string_view src, std::string_view dst) {
  fs::path source = resolve(src);
  fs::path target = resolve(dst);
  if (!fs::exists(source)) throw Error(ErrorCode::KeyMissing, std::string(src));
  fs::path staged = staging_path();
  copy_tree(source, staged);
  publish(staged, target);
  return std::string(dst);
}

std::string LocalStorage::get_md5(std::string_view key) {
  fs::path source = resolve(key);
  if (!fs::exists(source)) throw Error(ErrorCode::KeyMissing, std::string(key));
  if (!fs::is_regular_file(source)) throw Error(ErrorCode::NotAFile, std::string(key));
  return md5_file(source);
}

bool LocalStorage::exists(std::string_view key) {
  return fs::exists(resolve(key));
}

void LocalStorage::remove(std::string_view key) {
  std::error_code ec;
  fs::remove_all(resolve(key), ec);
}

}  // namespace opflow
