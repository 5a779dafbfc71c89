#pragma once

// Local HTTP API over one trace. Handlers return a status and a JSON body so
// they can be exercised without a socket; bind() wires them to httplib.

#include <charconv>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "tracelens/doc_generator.hpp"
#include "tracelens/line_annotator.hpp"
#include "tracelens/search_engine.hpp"
#include "tracelens/trace_model.hpp"

namespace tracelens {

struct ServeConfig {
  std::filesystem::path trace_path;
  std::filesystem::path source_root = ".";
  std::optional<std::filesystem::path> source_map;
  std::optional<std::filesystem::path> ui_dir;
  int port = 8377;
  bool allow_stale = false;
  // Mark the store stale when a traced source file is newer than the trace.
  bool check_edits = false;
  std::chrono::seconds session_idle{600};

  void validate() const {
    if (port < 1 || port > 65535) throw error(fmt::format("port {} out of range", port));
    if (!std::filesystem::exists(trace_path)) throw error(fmt::format("trace '{}' does not exist", trace_path.string()));
  }
};

// TRACELENS_PORT, when set, wins over the configured port.
inline int effective_port(int configured) {
  const char* env = std::getenv("TRACELENS_PORT");
  if (env == nullptr || *env == '\0') return configured;
  int port = 0;
  std::string_view text(env);
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), port);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw error(fmt::format("TRACELENS_PORT '{}' is not a number", env));
  }
  return port;
}

// Resolves a trace-relative path under root; nullopt if it escapes root.
inline std::optional<std::filesystem::path> resolve_under(const std::filesystem::path& root, const std::string& relative) {
  namespace fs = std::filesystem;
  fs::path rel(relative);
  if (relative.empty() || rel.is_absolute()) return std::nullopt;
  auto base = fs::weakly_canonical(root);
  auto full = fs::weakly_canonical(base / rel);
  auto [base_end, full_it] = std::mismatch(base.begin(), base.end(), full.begin(), full.end());
  if (base_end != base.end()) return std::nullopt;
  return full;
}

// Marks the store stale if any traced file under root was modified after the
// trace was written. Returns whether an edit was found.
inline bool detect_edits(const TraceStore& store, const std::filesystem::path& trace_path,
                         const std::filesystem::path& source_root) {
  namespace fs = std::filesystem;
  std::error_code ec;
  auto recorded = fs::last_write_time(trace_path, ec);
  if (ec) return false;
  std::set<std::string> files;
  for (const auto& event : store.events()) files.insert(event.loc.file);
  for (const auto& file : files) {
    auto path = resolve_under(source_root, file);
    if (!path) continue;
    auto modified = fs::last_write_time(*path, ec);
    if (!ec && modified > recorded) {
      on_edit(store, file);
      return true;
    }
  }
  return false;
}

inline std::shared_ptr<TraceStore> load_store(const std::filesystem::path& trace_path) {
  return std::make_shared<TraceStore>(ingest_file(trace_path.string()));
}

inline std::optional<std::string> read_text_file(const std::filesystem::path& path) {
  std::ifstream input(path, std::ios::binary);
  if (!input) return std::nullopt;
  std::ostringstream buffer;
  buffer << input.rdbuf();
  return buffer.str();
}

class Service {
 public:
  using Clock = std::chrono::steady_clock;
  using Params = std::multimap<std::string, std::string>;

  struct Response {
    int status = 200;
    nlohmann::ordered_json body;
  };

  explicit Service(ServeConfig config, std::function<Clock::time_point()> now = Clock::now)
      : config_(std::move(config)), now_(std::move(now)) {
    config_.validate();
    reload();
  }

  std::shared_ptr<const TraceStore> store() const {
    std::lock_guard lock(store_mutex_);
    return store_;
  }

  const ServeConfig& config() const noexcept { return config_; }

  Response reload() {
    auto fresh = load_store(config_.trace_path);
    if (config_.check_edits) detect_edits(*fresh, config_.trace_path, config_.source_root);
    std::lock_guard lock(store_mutex_);
    store_ = std::move(fresh);
    return ok(*store_, {});
  }

  Response files() const {
    auto snapshot = store();
    auto list = nlohmann::ordered_json::array();
    for (const auto& [file, lines] : snapshot->line_index()) list.push_back(file);
    return ok(*snapshot, {{"files", std::move(list)}});
  }

  Response source(const Params& params) const {
    auto snapshot = store();
    auto file = param(params, "file");
    if (!file) return fail(400, *snapshot, "missing parameter 'file'");
    auto path = resolve_under(config_.source_root, *file);
    if (!path) return fail(400, *snapshot, "path escapes the source root");
    auto text = read_text_file(*path);
    if (!text) return fail(404, *snapshot, fmt::format("unknown file '{}'", *file));
    return ok(*snapshot, {{"file", *file}, {"text", *text}});
  }

  Response annotations(const Params& params) const {
    auto snapshot = store();
    auto file = param(params, "file");
    if (!file) return fail(400, *snapshot, "missing parameter 'file'");
    auto cursor = param(params, "cursor");
    std::int64_t cursor_line = 0;
    if (!cursor || !parse_int(*cursor, cursor_line) || cursor_line < 1) {
      return fail(400, *snapshot, "parameter 'cursor' must be a positive integer");
    }
    bool allow_stale = config_.allow_stale;
    if (auto flag = param(params, "allow_stale")) {
      if (!parse_bool(*flag, allow_stale)) return fail(400, *snapshot, "parameter 'allow_stale' must be a boolean");
    }
    if (!resolve_under(config_.source_root, *file)) return fail(400, *snapshot, "path escapes the source root");
    if (!snapshot->line_index().contains(*file) && !known_on_disk(*file)) {
      return fail(404, *snapshot, fmt::format("unknown file '{}'", *file));
    }
    try {
      auto result = annotate_file(*snapshot, {*file, cursor_line}, allow_stale);
      return ok(*snapshot, {{"annotations", annotations_to_json(result)}});
    } catch (const stale_trace& e) {
      return fail(409, *snapshot, e.what());
    }
  }

  // Body: {"query": {"needle", "case_sensitive"?}, "scope"?: {"method_prefixes", "file_globs"},
  //        "include_exception_text"?}
  Response create_session(const std::string& body) {
    auto snapshot = store();
    SearchQuery query;
    SearchScope scope;
    try {
      auto request = nlohmann::json::parse(body.empty() ? "{}" : body);
      const auto& q = request.at("query");
      query.needle = q.at("needle").get<std::string>();
      query.case_sensitive = q.value("case_sensitive", true);
      query.include_exception_text = request.value("include_exception_text", true);
      if (auto it = request.find("scope"); it != request.end()) {
        scope.method_prefixes = it->value("method_prefixes", std::vector<std::string>{});
        scope.file_globs = it->value("file_globs", std::vector<std::string>{});
      }
    } catch (const nlohmann::json::exception& e) {
      return fail(400, *snapshot, fmt::format("bad search request: {}", e.what()));
    }
    try {
      auto slot = std::make_shared<SessionSlot>(open_session(snapshot, std::move(query), std::move(scope)), now_());
      std::lock_guard lock(sessions_mutex_);
      expire_idle();
      auto id = fmt::format("s{}", ++session_counter_);
      sessions_.emplace(id, std::move(slot));
      return ok(*snapshot, {{"id", id}});
    } catch (const empty_needle& e) {
      return fail(400, *snapshot, e.what());
    }
  }

  Response next(const std::string& id) {
    std::shared_ptr<SessionSlot> slot;
    {
      std::lock_guard lock(sessions_mutex_);
      expire_idle();
      auto it = sessions_.find(id);
      if (it != sessions_.end()) slot = it->second;
    }
    if (!slot) return fail(404, *store(), fmt::format("unknown session '{}'", id));

    std::lock_guard session_lock(slot->mutex);
    slot->last_used = now_();
    auto match = slot->session.find_next();
    const auto& searched = slot->session.store();
    if (!match) return ok(searched, {{"exhausted", true}});
    return ok(searched, {{"exhausted", false}, {"match", match_to_json(*match)}});
  }

  Response docs(const Params& params) const {
    auto snapshot = store();
    DocOptions options;
    options.method_prefix = param(params, "prefix").value_or("");
    if (auto k = param(params, "k")) {
      std::int64_t value = 0;
      if (!parse_int(*k, value) || value < 1) return fail(400, *snapshot, "parameter 'k' must be a positive integer");
      options.max_sentences = static_cast<std::size_t>(value);
    }
    auto docs = generate_docs(*snapshot, options);
    auto body = docs_to_json(docs);
    if (config_.source_map) {
      try {
        auto report = succinctness_report(docs, SourceMap::load(*config_.source_map), config_.source_root);
        for (std::size_t i = 0; i < docs.size(); ++i) {
          const auto& ratio = report.rows[i].ratio;
          body[i]["succinctness"] = ratio ? nlohmann::ordered_json(*ratio) : nlohmann::ordered_json(nullptr);
        }
      } catch (const error& e) {
        return fail(500, *snapshot, e.what());
      }
    }
    return ok(*snapshot, {{"docs", std::move(body)}});
  }

  // Body may name the edited file; invalidation is store-wide either way.
  Response invalidate(const std::string& body) {
    auto snapshot = store();
    std::string file;
    if (!body.empty()) {
      try {
        auto request = nlohmann::json::parse(body);
        if (request.is_object()) file = request.value("file", "");
      } catch (const nlohmann::json::exception& e) {
        return fail(400, *snapshot, fmt::format("bad invalidate request: {}", e.what()));
      }
    }
    on_edit(*snapshot, file);
    return ok(*snapshot, {});
  }

  std::size_t session_count() {
    std::lock_guard lock(sessions_mutex_);
    expire_idle();
    return sessions_.size();
  }

  void bind(httplib::Server& server) {
    auto send = [](httplib::Response& res, const Response& out) {
      res.status = out.status;
      res.set_content(out.body.dump(), "application/json");
    };
    auto params_of = [](const httplib::Request& req) { return Params(req.params.begin(), req.params.end()); };

    server.Get("/api/files", [=, this](const httplib::Request&, httplib::Response& res) { send(res, files()); });
    server.Get("/api/source", [=, this](const httplib::Request& req, httplib::Response& res) {
      send(res, source(params_of(req)));
    });
    server.Get("/api/annotations", [=, this](const httplib::Request& req, httplib::Response& res) {
      send(res, annotations(params_of(req)));
    });
    server.Post("/api/search/sessions", [=, this](const httplib::Request& req, httplib::Response& res) {
      send(res, create_session(req.body));
    });
    server.Post(R"(/api/search/sessions/([^/]+)/next)", [=, this](const httplib::Request& req, httplib::Response& res) {
      send(res, next(req.matches[1].str()));
    });
    server.Get("/api/docs", [=, this](const httplib::Request& req, httplib::Response& res) {
      send(res, docs(params_of(req)));
    });
    server.Post("/api/invalidate", [=, this](const httplib::Request& req, httplib::Response& res) {
      send(res, invalidate(req.body));
    });
    server.Post("/api/reload", [=, this](const httplib::Request&, httplib::Response& res) {
      try {
        send(res, reload());
      } catch (const error& e) {
        send(res, fail(500, *store(), e.what()));
      }
    });
    if (config_.ui_dir) server.set_mount_point("/", config_.ui_dir->string());
  }

 private:
  struct SessionSlot {
    SessionSlot(SearchSession s, Clock::time_point t) : session(std::move(s)), last_used(t) {}
    std::mutex mutex;
    SearchSession session;
    Clock::time_point last_used;
  };

  static std::optional<std::string> param(const Params& params, const std::string& key) {
    auto it = params.find(key);
    return it == params.end() ? std::nullopt : std::optional(it->second);
  }

  static bool parse_int(const std::string& text, std::int64_t& out) {
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
    return ec == std::errc{} && ptr == text.data() + text.size();
  }

  static bool parse_bool(const std::string& text, bool& out) {
    if (text == "true" || text == "1") {
      out = true;
    } else if (text == "false" || text == "0") {
      out = false;
    } else {
      return false;
    }
    return true;
  }

  bool known_on_disk(const std::string& file) const {
    auto path = resolve_under(config_.source_root, file);
    return path && std::filesystem::is_regular_file(*path);
  }

  static Response ok(const TraceStore& store, nlohmann::ordered_json body) {
    body["stale"] = store.stale();
    return {200, std::move(body)};
  }

  static Response fail(int status, const TraceStore& store, const std::string& message) {
    return {status, {{"error", message}, {"stale", store.stale()}}};
  }

  // Caller holds sessions_mutex_.
  void expire_idle() {
    auto now = now_();
    std::erase_if(sessions_, [&](const auto& entry) {
      std::unique_lock slot_lock(entry.second->mutex, std::try_to_lock);
      return slot_lock.owns_lock() && now - entry.second->last_used > config_.session_idle;
    });
  }

  ServeConfig config_;
  std::function<Clock::time_point()> now_;
  mutable std::mutex store_mutex_;
  std::shared_ptr<TraceStore> store_;
  std::mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<SessionSlot>> sessions_;
  std::size_t session_counter_ = 0;
};

}  // namespace tracelens
