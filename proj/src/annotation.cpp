#include "lifelog/annotation.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <set>

#include <httplib.h>
#include <json.hpp>

#include "lifelog/error.hpp"
#include "lifelog/pipeline.hpp"
#include "lifelog/text_io.hpp"

namespace lifelog {

using nlohmann::json;

namespace {

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

std::string_view to_string(DeleteStatus status) {
  switch (status) {
    case DeleteStatus::deleted: return "deleted";
    case DeleteStatus::already_deleted: return "already deleted";
    case DeleteStatus::unknown: return "unknown id";
  }
  return "?";
}

AnnotationSession::AnnotationSession(Dataset dataset)
    : label_set_(dataset.label_set), user_id_(dataset.user_id) {
  dataset.sort_chronologically();
  records_ = std::move(dataset.records);
  for (std::size_t i = 0; i < records_.size(); ++i) index_.emplace(records_[i].id, i);
}

std::unique_ptr<AnnotationSession> AnnotationSession::open(const std::filesystem::path& manifest) {
  return std::make_unique<AnnotationSession>(load_manifest(manifest));
}

std::vector<Date> AnnotationSession::days() const {
  std::shared_lock lock(mutex_);
  std::set<Date> out;
  for (const auto& r : records_)
    if (!r.deleted) out.insert(r.timestamp.date);
  return {out.begin(), out.end()};
}

std::vector<ImageDescriptor> AnnotationSession::list_day(const Date& date) const {
  std::shared_lock lock(mutex_);
  std::vector<ImageDescriptor> out;
  for (const auto& r : records_) {
    if (r.deleted || r.timestamp.date != date) continue;
    out.push_back({r.id, r.timestamp, r.label, "/thumbs/" + r.id});
  }
  return out;
}

std::optional<ImageRecord> AnnotationSession::record(std::string_view id) const {
  std::shared_lock lock(mutex_);
  const auto it = index_.find(std::string(id));
  if (it == index_.end() || records_[it->second].deleted) return std::nullopt;
  return records_[it->second];
}

std::vector<std::size_t> AnnotationSession::resolve(const ChunkSelection& sel) const {
  const int modes = (!sel.ids.empty()) + (sel.first_id || sel.last_id) + (sel.start || sel.end);
  if (modes == 0) throw ValidationError("empty selection");
  if (modes > 1) throw ValidationError("select by ids, by first/last id or by timestamps, not several");

  // Positions of the live records in chronological order.
  std::vector<std::size_t> live;
  std::unordered_map<std::size_t, std::size_t> rank;
  for (std::size_t i = 0; i < records_.size(); ++i) {
    if (records_[i].deleted) continue;
    rank.emplace(i, live.size());
    live.push_back(i);
  }
  auto live_rank = [&](const std::string& id) {
    const auto it = index_.find(id);
    if (it == index_.end()) throw ValidationError("unknown id '" + id + "'");
    const auto r = rank.find(it->second);
    if (r == rank.end()) throw ValidationError("id '" + id + "' is deleted");
    return r->second;
  };

  std::vector<std::size_t> out;
  if (!sel.ids.empty()) {
    std::vector<std::size_t> ranks;
    for (const auto& id : sel.ids) ranks.push_back(live_rank(id));
    std::sort(ranks.begin(), ranks.end());
    for (std::size_t i = 1; i < ranks.size(); ++i) {
      if (ranks[i] == ranks[i - 1]) throw ValidationError("selection lists an id twice");
      if (ranks[i] != ranks[i - 1] + 1)
        throw ValidationError("selection is not contiguous: '" + records_[live[ranks[i - 1]]].id + "' and '" +
                              records_[live[ranks[i]]].id + "' are not neighbours");
    }
    for (auto r : ranks) out.push_back(live[r]);
  } else if (sel.first_id || sel.last_id) {
    if (!sel.first_id || !sel.last_id) throw ValidationError("a range needs both first and last id");
    auto a = live_rank(*sel.first_id);
    auto b = live_rank(*sel.last_id);
    if (a > b) std::swap(a, b);
    for (auto r = a; r <= b; ++r) out.push_back(live[r]);
  } else {
    if (!sel.start || !sel.end) throw ValidationError("a time range needs both start and end");
    auto lo = *sel.start;
    auto hi = *sel.end;
    if (hi < lo) std::swap(lo, hi);
    for (auto i : live) {
      if (records_[i].timestamp >= lo && records_[i].timestamp <= hi) out.push_back(i);
    }
    if (out.empty()) throw ValidationError("no images between " + lo.to_string() + " and " + hi.to_string());
  }
  return out;
}

void AnnotationSession::audit(std::string action, std::string label, std::vector<std::string> ids) {
  audit_.push_back({utc_now(), std::move(action), std::move(label), std::move(ids)});
}

std::size_t AnnotationSession::label_chunk(const ChunkSelection& selection, const std::string& label) {
  if (!label_set_.contains(label)) throw ValidationError("unknown label '" + label + "'");
  std::unique_lock lock(mutex_);
  const auto rows = resolve(selection);
  std::vector<std::string> ids;
  for (auto i : rows) {
    records_[i].label = label;
    ids.push_back(records_[i].id);
  }
  audit("label", label, std::move(ids));
  return rows.size();
}

std::vector<DeleteOutcome> AnnotationSession::delete_images(std::span<const std::string> ids) {
  if (ids.empty()) throw ValidationError("no ids to delete");
  std::unique_lock lock(mutex_);
  std::vector<DeleteOutcome> out;
  std::vector<std::string> changed;
  for (const auto& id : ids) {
    const auto it = index_.find(id);
    if (it == index_.end()) {
      out.push_back({id, DeleteStatus::unknown});
    } else if (records_[it->second].deleted) {
      out.push_back({id, DeleteStatus::already_deleted});
    } else {
      records_[it->second].deleted = true;
      changed.push_back(id);
      out.push_back({id, DeleteStatus::deleted});
    }
  }
  audit("delete", "", std::move(changed));
  return out;
}

Dataset AnnotationSession::snapshot() const {
  std::shared_lock lock(mutex_);
  Dataset d;
  d.label_set = label_set_;
  d.user_id = user_id_;
  for (const auto& r : records_)
    if (!r.deleted) d.records.push_back(r);
  return d;
}

void AnnotationSession::export_manifest(const std::filesystem::path& path) const {
  const Dataset d = snapshot();
  try {
    save_manifest(d, path);
  } catch (const std::filesystem::filesystem_error& e) {
    throw RuntimeFailure(std::string("cannot export manifest: ") + e.what());
  }
}

std::vector<AuditEntry> AnnotationSession::audit_log() const {
  std::shared_lock lock(mutex_);
  return audit_;
}

// --- HTTP -------------------------------------------------------------------------

struct AnnotationServer::Impl {
  AnnotationSession& session;
  const ImageSource& images;
  ServerOptions options;
  httplib::Server server;
  std::mutex thumb_mutex;
  std::map<std::string, std::string> thumbs;

  Impl(AnnotationSession& s, const ImageSource& i, ServerOptions o)
      : session(s), images(i), options(std::move(o)) {}

  static void reply(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }
  static void fail(httplib::Response& res, int status, const std::string& message) {
    reply(res, status, json{{"error", message}});
  }

  static std::vector<std::string> string_list(const json& v, const char* field) {
    if (!v.is_array()) throw ValidationError(std::string(field) + " must be an array of strings");
    std::vector<std::string> out;
    for (const auto& e : v) {
      if (!e.is_string()) throw ValidationError(std::string(field) + " must be an array of strings");
      out.push_back(e.get<std::string>());
    }
    return out;
  }

  static std::string string_field(const json& obj, const char* field) {
    if (!obj.contains(field) || !obj[field].is_string())
      throw ValidationError(std::string("missing string field '") + field + "'");
    return obj[field].get<std::string>();
  }

  static json parse_body(const httplib::Request& req) {
    json body = json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.is_object()) throw ValidationError("request body must be a JSON object");
    return body;
  }

  // Runs a handler, mapping library errors onto status codes.
  template <class Fn>
  static void guarded(httplib::Response& res, Fn fn) {
    try {
      fn();
    } catch (const ValidationError& e) {
      fail(res, 400, e.what());
    } catch (const RuntimeFailure& e) {
      fail(res, 500, e.what());
    } catch (const std::exception& e) {
      fail(res, 500, e.what());
    }
  }

  std::string thumbnail(const ImageRecord& r) {
    {
      std::lock_guard lock(thumb_mutex);
      if (auto it = thumbs.find(r.id); it != thumbs.end()) return it->second;
    }
    const RgbImage full = images.load(r);
    const int s = options.thumbnail_size;
    const int w = full.width >= full.height ? s : std::max(1, s * full.width / full.height);
    const int h = full.width >= full.height ? std::max(1, s * full.height / full.width) : s;
    std::string bmp = encode_bmp(to_rgb(resample_area(to_planar(full), w, h)));
    std::lock_guard lock(thumb_mutex);
    return thumbs.emplace(r.id, std::move(bmp)).first->second;
  }

  void routes() {
    server.Get("/labels", [this](const httplib::Request&, httplib::Response& res) {
      reply(res, 200, json{{"labels", session.labels().names()}});
    });

    server.Get("/days", [this](const httplib::Request&, httplib::Response& res) {
      json days = json::array();
      for (const auto& d : session.days()) days.push_back(d.to_string());
      reply(res, 200, json{{"days", days}});
    });

    server.Get(R"(/days/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const Date date = Date::parse(req.matches[1].str());
        json list = json::array();
        for (const auto& d : session.list_day(date)) {
          list.push_back({{"id", d.id},
                          {"timestamp", d.timestamp.to_string()},
                          {"label", d.label ? json(*d.label) : json(nullptr)},
                          {"thumbnail", d.thumbnail},
                          {"image", "/images/" + d.id}});
        }
        reply(res, 200, json{{"date", date.to_string()}, {"images", list}});
      });
    });

    server.Get(R"(/images/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const auto r = session.record(req.matches[1].str());
        if (!r) return fail(res, 404, "unknown image id '" + req.matches[1].str() + "'");
        res.set_content(encode_bmp(images.load(*r)), "image/bmp");
      });
    });

    server.Get(R"(/thumbs/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const auto r = session.record(req.matches[1].str());
        if (!r) return fail(res, 404, "unknown image id '" + req.matches[1].str() + "'");
        res.set_content(thumbnail(*r), "image/bmp");
      });
    });

    server.Post("/label", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const json body = parse_body(req);
        const std::string label = string_field(body, "label");
        ChunkSelection sel;
        if (body.contains("ids")) sel.ids = string_list(body["ids"], "ids");
        if (body.contains("range")) {
          const json& r = body["range"];
          if (!r.is_object()) throw ValidationError("range must be an object");
          if (r.contains("first_id") || r.contains("last_id")) {
            sel.first_id = string_field(r, "first_id");
            sel.last_id = string_field(r, "last_id");
          }
          if (r.contains("start") || r.contains("end")) {
            sel.start = Timestamp::parse(string_field(r, "start"));
            sel.end = Timestamp::parse(string_field(r, "end"));
          }
        }
        const std::size_t n = session.label_chunk(sel, label);
        reply(res, 200, json{{"updated", n}, {"label", label}});
      });
    });

    server.Post("/delete", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const json body = parse_body(req);
        if (!body.contains("ids")) throw ValidationError("missing field 'ids'");
        const auto ids = string_list(body["ids"], "ids");
        const auto outcomes = session.delete_images(ids);
        json results = json::array();
        std::size_t deleted = 0;
        for (const auto& o : outcomes) {
          deleted += o.status == DeleteStatus::deleted;
          results.push_back({{"id", o.id}, {"status", std::string(to_string(o.status))}});
        }
        reply(res, 200, json{{"deleted", deleted}, {"results", results}});
      });
    });

    server.Post("/export", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const json body = parse_body(req);
        const std::filesystem::path path = string_field(body, "path");
        if (path.empty()) throw ValidationError("export path is empty");
        session.export_manifest(path);
        reply(res, 200, json{{"path", path.string()}, {"records", session.snapshot().records.size()}});
      });
    });

    server.Get("/audit", [this](const httplib::Request&, httplib::Response& res) {
      json log = json::array();
      for (const auto& e : session.audit_log())
        log.push_back({{"time", e.time}, {"action", e.action}, {"label", e.label}, {"ids", e.ids}});
      reply(res, 200, json{{"audit", log}});
    });
  }
};

AnnotationServer::AnnotationServer(AnnotationSession& session, const ImageSource& images, ServerOptions options)
    : impl_(std::make_unique<Impl>(session, images, std::move(options))) {
  if (impl_->options.thumbnail_size < 1) throw ValidationError("thumbnail size must be >= 1");
  impl_->routes();
}

AnnotationServer::~AnnotationServer() { stop(); }

int AnnotationServer::bind() {
  auto& o = impl_->options;
  if (o.port == 0) {
    o.port = impl_->server.bind_to_any_port(o.host);
  } else if (!impl_->server.bind_to_port(o.host, o.port)) {
    o.port = -1;
  }
  if (o.port < 0) throw RuntimeFailure("cannot bind " + o.host);
  return o.port;
}

void AnnotationServer::serve() { impl_->server.listen_after_bind(); }

void AnnotationServer::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace lifelog
