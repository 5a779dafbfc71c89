#pragma once

// Event vocabulary, the JSONL trace format and the indexed trace store.

#include <algorithm>
#include <atomic>
#include <compare>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include <json.hpp>

#include "tracelens/error.hpp"

namespace tracelens {

using Seq = std::int64_t;
using ActId = std::int64_t;

struct SourceLoc {
  std::string file;
  std::int64_t line = 1;

  friend auto operator<=>(const SourceLoc&, const SourceLoc&) = default;
};

// Order matches the alternatives of Payload.
enum class EventKind { call, ret, exception, line, bind };

enum class Access { read, write };

struct ArgValue {
  std::string name;
  std::string repr;
  bool is_string = false;

  friend bool operator==(const ArgValue&, const ArgValue&) = default;
};

struct ReturnValue {
  std::string repr;
  bool is_string = false;

  friend bool operator==(const ReturnValue&, const ReturnValue&) = default;
};

struct CallPayload {
  std::vector<ArgValue> args;
  std::optional<std::string> recv_before;

  friend bool operator==(const CallPayload&, const CallPayload&) = default;
};

struct ReturnPayload {
  std::optional<ReturnValue> ret;
  std::optional<std::string> recv_after;

  friend bool operator==(const ReturnPayload&, const ReturnPayload&) = default;
};

struct ExceptionPayload {
  std::string exc_type;
  std::string msg;

  friend bool operator==(const ExceptionPayload&, const ExceptionPayload&) = default;
};

struct LinePayload {
  friend bool operator==(const LinePayload&, const LinePayload&) = default;
};

struct BindPayload {
  std::string var;
  std::string repr;
  bool is_string = false;
  Access access = Access::read;

  friend bool operator==(const BindPayload&, const BindPayload&) = default;
};

using Payload = std::variant<CallPayload, ReturnPayload, ExceptionPayload, LinePayload, BindPayload>;

struct TraceEvent {
  Seq seq = 0;
  std::string thread;
  ActId act = 0;
  SourceLoc loc;
  std::optional<std::string> method;
  Payload payload;

  EventKind kind() const noexcept { return static_cast<EventKind>(payload.index()); }

  template <typename T>
  const T* as() const noexcept {
    return std::get_if<T>(&payload);
  }

  friend bool operator==(const TraceEvent&, const TraceEvent&) = default;
};

inline std::string_view to_string(EventKind kind) {
  switch (kind) {
    case EventKind::call: return "call";
    case EventKind::ret: return "return";
    case EventKind::exception: return "exception";
    case EventKind::line: return "line";
    case EventKind::bind: return "bind";
  }
  return "?";
}

inline std::string_view to_string(Access access) {
  return access == Access::write ? "write" : "read";
}

namespace detail {

using json = nlohmann::json;

// Byte offset of a key in the raw record, or 0 when it does not occur.
inline std::size_t key_offset(std::string_view text, std::string_view key) {
  std::string quoted = "\"" + std::string(key) + "\"";
  auto pos = text.find(quoted);
  return pos == std::string_view::npos ? 0 : pos;
}

class RecordReader {
 public:
  RecordReader(std::string_view text, const json& object, std::string prefix = {})
      : text_(text), object_(object), prefix_(std::move(prefix)) {}

  [[noreturn]] void fail(std::string_view key, std::string detail) const {
    throw malformed_record(prefix_ + std::string(key), key_offset(text_, key), std::move(detail));
  }

  const json& required(std::string_view key) const {
    auto it = object_.find(key);
    if (it == object_.end()) fail(key, "missing field");
    return *it;
  }

  bool has(std::string_view key) const { return object_.contains(key); }

  std::string string(std::string_view key) const {
    const auto& value = required(key);
    if (!value.is_string()) fail(key, "expected string");
    return value.get<std::string>();
  }

  std::optional<std::string> nullable_string(std::string_view key) const {
    const auto& value = required(key);
    if (value.is_null()) return std::nullopt;
    if (!value.is_string()) fail(key, "expected string or null");
    return value.get<std::string>();
  }

  std::optional<std::string> optional_string(std::string_view key) const {
    auto it = object_.find(key);
    if (it == object_.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) fail(key, "expected string");
    return it->get<std::string>();
  }

  std::int64_t positive_int(std::string_view key) const {
    const auto& value = required(key);
    if (!value.is_number_integer()) fail(key, "expected integer");
    auto number = value.get<std::int64_t>();
    if (number <= 0) fail(key, "must be positive");
    return number;
  }

  bool boolean(std::string_view key) const {
    const auto& value = required(key);
    if (!value.is_boolean()) fail(key, "expected boolean");
    return value.get<bool>();
  }

  RecordReader object(std::string_view key) const {
    const auto& value = required(key);
    if (!value.is_object()) fail(key, "expected object");
    return RecordReader(text_, value, prefix_ + std::string(key) + ".");
  }

  const json& raw() const { return object_; }
  std::string_view text() const { return text_; }

 private:
  std::string_view text_;
  const json& object_;
  std::string prefix_;
};

inline std::string fnv_hex(std::string_view data, std::uint64_t hash = 1469598103934665603ULL) {
  for (unsigned char c : data) {
    hash ^= c;
    hash *= 1099511628211ULL;
  }
  return fmt::format("{:016x}", hash);
}

}  // namespace detail

inline TraceEvent parse_event(std::string_view line) {
  using detail::json;
  json object;
  try {
    object = json::parse(line);
  } catch (const json::parse_error& e) {
    throw malformed_record("<syntax>", e.byte > 0 ? e.byte - 1 : 0, "invalid JSON");
  }
  if (!object.is_object()) throw malformed_record("<record>", 0, "record must be a JSON object");

  detail::RecordReader reader(line, object);
  TraceEvent event;
  event.seq = reader.positive_int("seq");
  auto kind = reader.string("kind");
  event.thread = reader.string("thread");
  event.act = reader.positive_int("act");

  auto loc = reader.object("loc");
  event.loc.file = loc.string("file");
  if (event.loc.file.empty()) loc.fail("file", "must not be empty");
  if (event.loc.file.find('\\') != std::string::npos) loc.fail("file", "must use forward slashes");
  event.loc.line = loc.positive_int("line");

  bool method_required = kind == "call" || kind == "return" || kind == "exception";
  event.method = method_required ? std::optional(reader.string("method")) : reader.optional_string("method");

  if (kind == "call") {
    CallPayload call;
    const auto& args = reader.required("args");
    if (!args.is_array()) reader.fail("args", "expected array");
    for (const auto& arg : args) {
      if (!arg.is_object()) reader.fail("args", "expected array of objects");
      detail::RecordReader arg_reader(line, arg, "args[].");
      call.args.push_back({arg_reader.string("name"), arg_reader.string("repr"), arg_reader.boolean("is_string")});
    }
    call.recv_before = reader.nullable_string("recv_before");
    event.payload = std::move(call);
  } else if (kind == "return") {
    ReturnPayload ret;
    const auto& value = reader.required("ret");
    if (!value.is_null()) {
      if (!value.is_object()) reader.fail("ret", "expected object or null");
      auto ret_reader = reader.object("ret");
      ret.ret = ReturnValue{ret_reader.string("repr"), ret_reader.boolean("is_string")};
    }
    ret.recv_after = reader.nullable_string("recv_after");
    event.payload = std::move(ret);
  } else if (kind == "exception") {
    event.payload = ExceptionPayload{reader.string("exc_type"), reader.string("msg")};
  } else if (kind == "line") {
    event.payload = LinePayload{};
  } else if (kind == "bind") {
    BindPayload bind{reader.string("var"), reader.string("repr"), reader.boolean("is_string"), Access::read};
    auto access = reader.string("access");
    if (access == "write") {
      bind.access = Access::write;
    } else if (access != "read") {
      reader.fail("access", "expected \"read\" or \"write\"");
    }
    event.payload = std::move(bind);
  } else {
    reader.fail("kind", "unknown kind '" + kind + "'");
  }
  return event;
}

// Canonical single-line encoding; parse_event(serialize_event(e)) == e.
inline std::string serialize_event(const TraceEvent& event) {
  nlohmann::ordered_json out;
  out["seq"] = event.seq;
  out["kind"] = std::string(to_string(event.kind()));
  out["thread"] = event.thread;
  out["act"] = event.act;
  out["loc"] = {{"file", event.loc.file}, {"line", event.loc.line}};
  if (event.method) out["method"] = *event.method;

  auto nullable = [](const std::optional<std::string>& value) {
    return value ? nlohmann::ordered_json(*value) : nlohmann::ordered_json(nullptr);
  };
  std::visit(
      [&](const auto& payload) {
        using T = std::decay_t<decltype(payload)>;
        if constexpr (std::is_same_v<T, CallPayload>) {
          auto args = nlohmann::ordered_json::array();
          for (const auto& arg : payload.args) {
            args.push_back({{"name", arg.name}, {"repr", arg.repr}, {"is_string", arg.is_string}});
          }
          out["args"] = std::move(args);
          out["recv_before"] = nullable(payload.recv_before);
        } else if constexpr (std::is_same_v<T, ReturnPayload>) {
          out["ret"] = payload.ret ? nlohmann::ordered_json{{"repr", payload.ret->repr},
                                                            {"is_string", payload.ret->is_string}}
                                   : nlohmann::ordered_json(nullptr);
          out["recv_after"] = nullable(payload.recv_after);
        } else if constexpr (std::is_same_v<T, ExceptionPayload>) {
          out["exc_type"] = payload.exc_type;
          out["msg"] = payload.msg;
        } else if constexpr (std::is_same_v<T, BindPayload>) {
          out["var"] = payload.var;
          out["repr"] = payload.repr;
          out["is_string"] = payload.is_string;
          out["access"] = std::string(to_string(payload.access));
        }
      },
      event.payload);
  return out.dump();
}

// Settings a tracer declares in `# tracelens key=value ...` header lines.
struct TraceHeader {
  std::string constructor_marker = "<init>";

  friend bool operator==(const TraceHeader&, const TraceHeader&) = default;
};

struct Activation {
  ActId act = 0;
  std::string method;
  std::string thread;
  std::string file;
  Seq call_seq = 0;
  std::optional<Seq> close_seq;
  bool closed_by_exception = false;
  // Own Line and Bind events in seq order; nested activations excluded.
  std::vector<Seq> own_events;

  bool truncated() const noexcept { return !close_seq.has_value(); }

  friend bool operator==(const Activation&, const Activation&) = default;
};

class TraceStore {
 public:
  TraceStore() = default;
  TraceStore(const TraceStore&) = delete;
  TraceStore& operator=(const TraceStore&) = delete;
  TraceStore(TraceStore&& other) noexcept
      : header_(std::move(other.header_)),
        events_(std::move(other.events_)),
        activations_(std::move(other.activations_)),
        line_index_(std::move(other.line_index_)),
        stale_(other.stale_.load()) {}
  TraceStore& operator=(TraceStore&& other) noexcept {
    header_ = std::move(other.header_);
    events_ = std::move(other.events_);
    activations_ = std::move(other.activations_);
    line_index_ = std::move(other.line_index_);
    stale_.store(other.stale_.load());
    return *this;
  }

  const TraceHeader& header() const noexcept { return header_; }
  const std::vector<TraceEvent>& events() const noexcept { return events_; }
  const std::map<ActId, Activation>& activations() const noexcept { return activations_; }

  // file -> line -> seqs of Line events executed there.
  const std::map<std::string, std::map<std::int64_t, std::vector<Seq>>>& line_index() const noexcept {
    return line_index_;
  }

  const TraceEvent* find(Seq seq) const noexcept {
    auto it = std::lower_bound(events_.begin(), events_.end(), seq,
                               [](const TraceEvent& e, Seq s) { return e.seq < s; });
    return it != events_.end() && it->seq == seq ? &*it : nullptr;
  }

  const TraceEvent& at(Seq seq) const {
    const auto* event = find(seq);
    if (event == nullptr) throw error(fmt::format("no event with seq {}", seq));
    return *event;
  }

  const Activation* activation(ActId act) const noexcept {
    auto it = activations_.find(act);
    return it == activations_.end() ? nullptr : &it->second;
  }

  // Method of an event, falling back to its activation's method.
  std::string_view method_of(const TraceEvent& event) const noexcept {
    if (event.method) return *event.method;
    const auto* owner = activation(event.act);
    return owner ? std::string_view(owner->method) : std::string_view{};
  }

  bool stale() const noexcept { return stale_.load(std::memory_order_acquire); }

  // The only mutation after ingestion; monotonic and safe alongside readers.
  void mark_stale() const noexcept { stale_.store(true, std::memory_order_release); }

  // Stable fingerprint of the ingested content.
  std::string digest() const {
    std::string canonical;
    canonical += "constructor=" + header_.constructor_marker + "\n";
    for (const auto& event : events_) canonical += serialize_event(event) + "\n";
    for (const auto& [id, a] : activations_) {
      canonical += fmt::format("act {} {} {} {} {} {} {}", id, a.method, a.thread, a.file, a.call_seq,
                               a.close_seq.value_or(0), a.closed_by_exception);
      for (auto seq : a.own_events) canonical += fmt::format(" {}", seq);
      canonical += "\n";
    }
    return detail::fnv_hex(canonical);
  }

 private:
  friend class StoreBuilder;

  TraceHeader header_;
  std::vector<TraceEvent> events_;
  std::map<ActId, Activation> activations_;
  std::map<std::string, std::map<std::int64_t, std::vector<Seq>>> line_index_;
  mutable std::atomic<bool> stale_{false};
};

inline void mark_stale(const TraceStore& store) noexcept { store.mark_stale(); }

// Incremental ingestion; used by ingest() and by anything that receives
// records one at a time.
class StoreBuilder {
 public:
  // Feeds one physical line of the trace file.
  void add_line(std::string_view text) {
    ++line_number_;
    if (!text.empty() && text.back() == '\r') text.remove_suffix(1);
    if (text.find_first_not_of(" \t") == std::string_view::npos) return;
    if (text.front() == '#') {
      read_header(text);
      return;
    }
    TraceEvent event;
    try {
      event = parse_event(text);
    } catch (const malformed_record& e) {
      throw e.at_line(line_number_);
    }
    add_event(std::move(event), text);
  }

  TraceStore finish() && {
    for (const auto& event : store_.events_) {
      if (event.kind() == EventKind::line) {
        store_.line_index_[event.loc.file][event.loc.line].push_back(event.seq);
      }
    }
    return std::move(store_);
  }

 private:
  void read_header(std::string_view text) {
    std::istringstream tokens{std::string(text.substr(1))};
    std::string token;
    tokens >> token;
    if (token != "tracelens") return;  // plain comment
    while (tokens >> token) {
      auto eq = token.find('=');
      if (eq == std::string::npos) continue;
      auto key = token.substr(0, eq);
      if (key == "constructor") store_.header_.constructor_marker = token.substr(eq + 1);
    }
  }

  void add_event(TraceEvent event, std::string_view text) {
    if (!store_.events_.empty() && event.seq <= store_.events_.back().seq) {
      throw non_monotonic_seq(line_number_, store_.events_.back().seq, event.seq);
    }
    auto& stack = open_[event.thread];

    if (event.kind() == EventKind::call) {
      if (store_.activations_.contains(event.act)) {
        throw malformed_record("act", detail::key_offset(text, "act"), "duplicate activation id",
                               line_number_);
      }
      Activation activation;
      activation.act = event.act;
      activation.method = *event.method;
      activation.thread = event.thread;
      activation.file = event.loc.file;
      activation.call_seq = event.seq;
      store_.activations_.emplace(event.act, std::move(activation));
      stack.push_back(event.act);
      store_.events_.push_back(std::move(event));
      return;
    }

    if (stack.empty() || stack.back() != event.act) {
      auto known = store_.activations_.find(event.act);
      std::string why = known == store_.activations_.end()
                            ? fmt::format("activation {} has no prior call", event.act)
                            : fmt::format("activation {} is not the innermost open activation on thread '{}'",
                                          event.act, event.thread);
      throw orphan_event(line_number_, event.seq, why);
    }
    auto& activation = store_.activations_.at(event.act);

    switch (event.kind()) {
      case EventKind::ret:
      case EventKind::exception:
        if (*event.method != activation.method) {
          throw malformed_record("method", detail::key_offset(text, "method"),
                                 fmt::format("closing event names '{}' but activation {} is '{}'",
                                             *event.method, event.act, activation.method),
                                 line_number_);
        }
        activation.close_seq = event.seq;
        activation.closed_by_exception = event.kind() == EventKind::exception;
        stack.pop_back();
        break;
      case EventKind::line:
        if (event.loc.file != activation.file) {
          throw malformed_record("loc.file", detail::key_offset(text, "file"),
                                 fmt::format("line event in '{}' but activation {} runs in '{}'",
                                             event.loc.file, event.act, activation.file),
                                 line_number_);
        }
        [[fallthrough]];
      case EventKind::bind:
        activation.own_events.push_back(event.seq);
        break;
      case EventKind::call:
        break;
    }
    store_.events_.push_back(std::move(event));
  }

  TraceStore store_;
  std::unordered_map<std::string, std::vector<ActId>> open_;
  std::size_t line_number_ = 0;
};

inline TraceStore ingest(std::istream& input) {
  StoreBuilder builder;
  std::string line;
  while (std::getline(input, line)) builder.add_line(line);
  return std::move(builder).finish();
}

inline TraceStore ingest_text(std::string_view text) {
  std::istringstream input{std::string(text)};
  return ingest(input);
}

inline TraceStore ingest_file(const std::string& path) {
  std::ifstream input(path, std::ios::binary);
  if (!input) throw error(fmt::format("cannot open trace '{}'", path));
  return ingest(input);
}

// Activations whose own Line events touch file, ordered by call seq.
inline std::vector<const Activation*> activations_for_file(const TraceStore& store, std::string_view file) {
  std::vector<const Activation*> result;
  for (const auto& [id, activation] : store.activations()) {
    if (activation.file != file) continue;
    bool has_line = std::any_of(activation.own_events.begin(), activation.own_events.end(),
                                [&](Seq seq) { return store.at(seq).kind() == EventKind::line; });
    if (has_line) result.push_back(&activation);
  }
  std::sort(result.begin(), result.end(),
            [](const Activation* a, const Activation* b) { return a->call_seq < b->call_seq; });
  return result;
}

}  // namespace tracelens
