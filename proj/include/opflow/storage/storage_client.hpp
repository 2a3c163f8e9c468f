#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace opflow {

/// Artifact storage contract. Keys are '/'-separated, with no empty, "." or
/// ".." segments. A key may name a single file or a directory tree.
class StorageClient {
 public:
  virtual ~StorageClient() = default;

  /// Stores the file or directory at `path` under `key`, replacing any
  /// previous content. Returns the key.
  virtual std::string upload(const std::filesystem::path& path, std::string_view key) = 0;

  /// Materializes `key` at `path` (a file, or a directory tree).
  virtual void download(std::string_view key, const std::filesystem::path& path) = 0;

  /// File keys starting with `prefix`, lexicographically sorted.
  virtual std::vector<std::string> list(std::string_view prefix) = 0;

  /// Server-side copy; an existing `dst` is overwritten. Returns `dst`.
  virtual std::string copy(std::string_view src, std::string_view dst) = 0;

  /// Lowercase hex MD5 of the file at `key`. Optional capability: backends
  /// without it throw Error(Unsupported).
  virtual std::string get_md5(std::string_view key) = 0;

  virtual bool supports_md5() const { return true; }

  /// True if `key` names a stored file or directory.
  virtual bool exists(std::string_view key) = 0;

  /// Removes `key` and everything below it; no-op when absent.
  virtual void remove(std::string_view key) = 0;
};

/// Throws Error(KeyInvalid) unless `key` is a well-formed storage key.
void validate_storage_key(std::string_view key);

/// `workflows/<wf-id>/<step-key>/<artifact-name>`
std::string artifact_key(std::string_view workflow_id, std::string_view step_key,
                         std::string_view artifact_name);

}  // namespace opflow
