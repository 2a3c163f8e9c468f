#pragma once

#include <filesystem>

#include "opflow/storage/storage_client.hpp"

namespace opflow {

/// Filesystem backend: content for `key` lives at `<root>/<key>`, directory
/// trees mirrored verbatim. Publishing goes through a staging directory and a
/// rename, so readers never see partial content and concurrent writers to one
/// key resolve as last-publish-wins.
class LocalStorage final : public StorageClient {
 public:
  explicit LocalStorage(std::filesystem::path root);

  std::string upload(const std::filesystem::path& path, std::string_view key) override;
  void download(std::string_view key, const std::filesystem::path& path) override;
  std::vector<std::string> list(std::string_view prefix) override;
  std::string copy(std::string_view src, std::string_view dst) override;
  std::string get_md5(std::string_view key) override;
  bool exists(std::string_view key) override;
  void remove(std::string_view key) override;

  const std::filesystem::path& root() const { return root_; }

 private:
  std::filesystem::path resolve(std::string_view key) const;
  void publish(const std::filesystem::path& staged, const std::filesystem::path& target);
  std::filesystem::path staging_path() const;

  std::filesystem::path root_;
};

/// Lowercase hex MD5 digest of a byte string / file.
std::string md5_hex(std::string_view bytes);
std::string md5_file(const std::filesystem::path& path);

}  // namespace opflow
