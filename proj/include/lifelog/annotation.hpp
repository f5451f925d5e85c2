#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "lifelog/dataset.hpp"
#include "lifelog/image.hpp"

namespace lifelog {

class ImageSource;

struct ImageDescriptor {
  std::string id;
  Timestamp timestamp;
  std::optional<std::string> label;
  std::string thumbnail;  // "/thumbs/<id>"
};

// One of the three ways to pick a chunk. Endpoints are inclusive and may be
// given in either order.
struct ChunkSelection {
  std::vector<std::string> ids;  // must form a contiguous chronological run
  std::optional<std::string> first_id;
  std::optional<std::string> last_id;
  std::optional<Timestamp> start;
  std::optional<Timestamp> end;
};

enum class DeleteStatus { deleted, already_deleted, unknown };
std::string_view to_string(DeleteStatus status);

struct DeleteOutcome {
  std::string id;
  DeleteStatus status = DeleteStatus::unknown;
};

struct AuditEntry {
  std::string time;  // UTC, YYYY-MM-DDTHH:MM:SSZ
  std::string action;
  std::string label;
  std::vector<std::string> ids;
};

// Mutable working copy of a manifest. Reads share a lock; every mutation takes
// the exclusive lock, so concurrent label writes are last-write-wins per record.
class AnnotationSession {
 public:
  explicit AnnotationSession(Dataset dataset);
  static std::unique_ptr<AnnotationSession> open(const std::filesystem::path& manifest);

  const ActivityLabelSet& labels() const { return label_set_; }
  std::vector<Date> days() const;
  // Unknown dates give an empty list.
  std::vector<ImageDescriptor> list_day(const Date& date) const;
  std::optional<ImageRecord> record(std::string_view id) const;  // nullopt when unknown or deleted

  // Atomic: on any error nothing changes. Returns the number of records labelled.
  std::size_t label_chunk(const ChunkSelection& selection, const std::string& label);
  std::vector<DeleteOutcome> delete_images(std::span<const std::string> ids);

  // Consistent snapshot without the deleted records.
  Dataset snapshot() const;
  void export_manifest(const std::filesystem::path& path) const;
  std::vector<AuditEntry> audit_log() const;

 private:
  std::vector<std::size_t> resolve(const ChunkSelection& selection) const;
  void audit(std::string action, std::string label, std::vector<std::string> ids);

  ActivityLabelSet label_set_;
  std::string user_id_;
  mutable std::shared_mutex mutex_;
  std::vector<ImageRecord> records_;  // chronological
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<AuditEntry> audit_;
};

struct ServerOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  int thumbnail_size = 96;
};

// JSON-over-HTTP front end for an AnnotationSession.
class AnnotationServer {
 public:
  AnnotationServer(AnnotationSession& session, const ImageSource& images, ServerOptions options = {});
  ~AnnotationServer();
  AnnotationServer(const AnnotationServer&) = delete;
  AnnotationServer& operator=(const AnnotationServer&) = delete;

  // Binds and returns the port; serve() then blocks until stop().
  int bind();
  void serve();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace lifelog
