#pragma once

// Runtime string search: substring matching over every string value the
// trace observed, with a resumable cursor ("find next").

#include <fnmatch.h>

#include <algorithm>
#include <cctype>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tracelens/error.hpp"
#include "tracelens/trace_model.hpp"

namespace tracelens {

enum class CandidateOrigin { bind_var, call_arg, return_value, exception_message };

inline std::string_view to_string(CandidateOrigin origin) {
  switch (origin) {
    case CandidateOrigin::bind_var: return "bind_var";
    case CandidateOrigin::call_arg: return "call_arg";
    case CandidateOrigin::return_value: return "return_value";
    case CandidateOrigin::exception_message: return "exception_message";
  }
  return "?";
}

struct Candidate {
  Seq seq = 0;
  // Position among the candidates of the same event.
  std::size_t index = 0;
  CandidateOrigin origin = CandidateOrigin::bind_var;
  // Variable name, argument name, method name or exception type.
  std::string label;
  std::string text;

  friend bool operator==(const Candidate&, const Candidate&) = default;
};

// Searchable string values of one event, in within-event order.
inline std::vector<Candidate> candidates_of(const TraceEvent& event, bool include_exception_text = true) {
  std::vector<Candidate> out;
  auto add = [&](CandidateOrigin origin, std::string label, std::string text) {
    out.push_back({event.seq, out.size(), origin, std::move(label), std::move(text)});
  };
  switch (event.kind()) {
    case EventKind::call:
      for (const auto& arg : event.as<CallPayload>()->args) {
        if (arg.is_string) add(CandidateOrigin::call_arg, arg.name, arg.repr);
      }
      break;
    case EventKind::ret: {
      const auto& ret = event.as<ReturnPayload>()->ret;
      if (ret && ret->is_string) add(CandidateOrigin::return_value, event.method.value_or(""), ret->repr);
      break;
    }
    case EventKind::exception:
      if (include_exception_text) {
        const auto* exc = event.as<ExceptionPayload>();
        add(CandidateOrigin::exception_message, exc->exc_type, exc->msg);
      }
      break;
    case EventKind::bind: {
      const auto* bind = event.as<BindPayload>();
      if (bind->is_string) add(CandidateOrigin::bind_var, bind->var, bind->repr);
      break;
    }
    case EventKind::line:
      break;
  }
  return out;
}

struct SearchScope {
  std::vector<std::string> method_prefixes;
  std::vector<std::string> file_globs;

  bool contains(std::string_view method, const std::string& file) const {
    bool method_ok = method_prefixes.empty() ||
                     std::any_of(method_prefixes.begin(), method_prefixes.end(),
                                 [&](const std::string& prefix) { return method.starts_with(prefix); });
    if (!method_ok) return false;
    return file_globs.empty() ||
           std::any_of(file_globs.begin(), file_globs.end(), [&](const std::string& glob) {
             return ::fnmatch(glob.c_str(), file.c_str(), 0) == 0;
           });
  }
};

struct SearchQuery {
  std::string needle;
  bool case_sensitive = true;
  bool include_exception_text = true;

  // Case folding is ASCII-only.
  bool matches(std::string_view text) const {
    if (case_sensitive) return text.find(needle) != std::string_view::npos;
    auto fold = [](unsigned char c) { return static_cast<char>(std::tolower(c)); };
    std::string folded_text(text.size(), '\0');
    std::transform(text.begin(), text.end(), folded_text.begin(), fold);
    std::string folded_needle(needle.size(), '\0');
    std::transform(needle.begin(), needle.end(), folded_needle.begin(), fold);
    return folded_text.find(folded_needle) != std::string::npos;
  }
};

struct LocalValue {
  std::string var;
  std::string repr;

  friend bool operator==(const LocalValue&, const LocalValue&) = default;
};

// Latest value of every variable bound in act's own events up to seq,
// sorted by variable name.
inline std::vector<LocalValue> frame_locals_at(const TraceStore& store, ActId act, Seq seq) {
  const auto* activation = store.activation(act);
  if (activation == nullptr) throw unknown_activation(act);
  std::map<std::string, std::string> latest;
  for (Seq own : activation->own_events) {
    if (own > seq) break;
    if (const auto* bind = store.at(own).as<BindPayload>()) latest[bind->var] = bind->repr;
  }
  std::vector<LocalValue> out;
  out.reserve(latest.size());
  for (auto& [var, repr] : latest) out.push_back({var, std::move(repr)});
  return out;
}

struct SearchMatch {
  Candidate candidate;
  SourceLoc loc;
  std::string method;
  ActId act = 0;
  std::string thread;
  std::vector<LocalValue> frame_locals;
  bool stale = false;
};

// Single-owner cursor over a shared store. Matches come back ordered by
// (seq, within-event index).
class SearchSession {
 public:
  SearchSession(std::shared_ptr<const TraceStore> store, SearchQuery query, SearchScope scope)
      : store_(std::move(store)), query_(std::move(query)), scope_(std::move(scope)) {
    if (query_.needle.empty()) throw empty_needle();
  }

  const SearchQuery& query() const noexcept { return query_; }
  const SearchScope& scope() const noexcept { return scope_; }
  const TraceStore& store() const noexcept { return *store_; }

  // seq of the last returned match, 0 before the first.
  Seq cursor() const noexcept { return cursor_seq_; }

  // Narrowing or widening the scope keeps the cursor position.
  void set_scope(SearchScope scope) { scope_ = std::move(scope); }

  std::optional<SearchMatch> find_next() {
    const auto& events = store_->events();
    for (; event_pos_ < events.size(); ++event_pos_, candidate_pos_ = 0) {
      const auto& event = events[event_pos_];
      auto method = store_->method_of(event);
      if (!scope_.contains(method, event.loc.file)) continue;
      auto candidates = candidates_of(event, query_.include_exception_text);
      for (; candidate_pos_ < candidates.size(); ++candidate_pos_) {
        auto& candidate = candidates[candidate_pos_];
        if (!query_.matches(candidate.text)) continue;
        ++candidate_pos_;
        cursor_seq_ = event.seq;
        SearchMatch match;
        match.candidate = std::move(candidate);
        match.loc = event.loc;
        match.method = std::string(method);
        match.act = event.act;
        match.thread = event.thread;
        match.frame_locals = frame_locals_at(*store_, event.act, event.seq);
        match.stale = store_->stale();
        return match;
      }
    }
    return std::nullopt;
  }

 private:
  std::shared_ptr<const TraceStore> store_;
  SearchQuery query_;
  SearchScope scope_;
  Seq cursor_seq_ = 0;
  std::size_t event_pos_ = 0;
  std::size_t candidate_pos_ = 0;
};

// Shared by the CLI and the HTTP API so both report identical fields.
inline nlohmann::ordered_json match_to_json(const SearchMatch& match) {
  auto locals = nlohmann::ordered_json::array();
  for (const auto& local : match.frame_locals) locals.push_back({{"var", local.var}, {"repr", local.repr}});
  return {{"seq", match.candidate.seq},
          {"index", match.candidate.index},
          {"origin", std::string(to_string(match.candidate.origin))},
          {"label", match.candidate.label},
          {"text", match.candidate.text},
          {"method", match.method},
          {"act", match.act},
          {"thread", match.thread},
          {"loc", {{"file", match.loc.file}, {"line", match.loc.line}}},
          {"frame_locals", std::move(locals)}};
}

// seq, origin, method, file:line, matched text; tab separated.
inline std::string match_to_line(const SearchMatch& match) {
  return fmt::format("{}\t{}\t{}\t{}:{}\t{}", match.candidate.seq, to_string(match.candidate.origin), match.method,
                     match.loc.file, match.loc.line, match.candidate.text);
}

inline SearchSession open_session(std::shared_ptr<const TraceStore> store, SearchQuery query,
                                  SearchScope scope = {}) {
  return SearchSession(std::move(store), std::move(query), std::move(scope));
}

}  // namespace tracelens
