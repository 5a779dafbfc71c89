#pragma once

// Per-line sample values: iteration segmentation, cursor-driven iteration
// choice, redundancy filtering and invalidation.

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tracelens/error.hpp"
#include "tracelens/trace_model.hpp"

namespace tracelens {

// A forward-only run of Line events inside one activation.
struct Iteration {
  ActId act = 0;
  std::size_t index = 1;  // 1-based within the activation
  std::vector<Seq> line_events;
  std::set<std::int64_t> covered_lines;
  Seq first_seq = 0;
  // Binds emitted while this iteration was current.
  std::vector<Seq> bind_events;

  bool covers(std::int64_t line) const { return covered_lines.contains(line); }

  friend bool operator==(const Iteration&, const Iteration&) = default;
};

// Splits the activation's own Line events wherever the line number does not
// increase; a repeated line (single-line loop) also starts a new iteration.
// Binds belong to the iteration of the latest preceding Line event; binds
// seen before any Line event go to the first iteration.
inline std::vector<Iteration> segment_iterations(const TraceStore& store, const Activation& activation) {
  std::vector<Iteration> iterations;
  std::vector<Seq> early_binds;
  std::int64_t previous_line = 0;
  for (Seq seq : activation.own_events) {
    const auto& event = store.at(seq);
    if (event.kind() == EventKind::bind) {
      (iterations.empty() ? early_binds : iterations.back().bind_events).push_back(seq);
      continue;
    }
    if (iterations.empty() || event.loc.line <= previous_line) {
      Iteration next;
      next.act = activation.act;
      next.index = iterations.size() + 1;
      next.first_seq = seq;
      iterations.push_back(std::move(next));
    }
    iterations.back().line_events.push_back(seq);
    iterations.back().covered_lines.insert(event.loc.line);
    previous_line = event.loc.line;
  }
  if (!iterations.empty() && !early_binds.empty()) {
    auto& binds = iterations.front().bind_events;
    binds.insert(binds.begin(), early_binds.begin(), early_binds.end());
  }
  return iterations;
}

struct CursorContext {
  std::string file;
  std::int64_t cursor_line = 1;
};

inline void require_fresh(const TraceStore& store, bool allow_stale) {
  if (store.stale() && !allow_stale) throw stale_trace();
}

namespace detail {

inline std::vector<Iteration> iterations_in_file(const TraceStore& store, std::string_view file) {
  std::vector<Iteration> all;
  for (const auto* activation : activations_for_file(store, file)) {
    auto iterations = segment_iterations(store, *activation);
    std::move(iterations.begin(), iterations.end(), std::back_inserter(all));
  }
  return all;
}

// Earliest iteration covering line, or nullptr.
inline const Iteration* earliest_covering(const std::vector<Iteration>& iterations, std::int64_t line) {
  const Iteration* best = nullptr;
  for (const auto& iteration : iterations) {
    if (iteration.covers(line) && (best == nullptr || iteration.first_seq < best->first_seq)) best = &iteration;
  }
  return best;
}

}  // namespace detail

// First iteration (by first_seq) in ctx.file covering the cursor line.
inline std::optional<Iteration> select_iteration(const TraceStore& store, const CursorContext& ctx,
                                                 bool allow_stale = false) {
  require_fresh(store, allow_stale);
  auto iterations = detail::iterations_in_file(store, ctx.file);
  const auto* chosen = detail::earliest_covering(iterations, ctx.cursor_line);
  return chosen ? std::optional(*chosen) : std::nullopt;
}

struct AnnotationEntry {
  std::string var;
  std::string repr;
  Access access = Access::read;

  friend bool operator==(const AnnotationEntry&, const AnnotationEntry&) = default;
};

struct IterationRef {
  ActId act = 0;
  std::size_t index = 0;

  friend auto operator<=>(const IterationRef&, const IterationRef&) = default;
};

struct LineAnnotation {
  SourceLoc loc;
  std::vector<AnnotationEntry> entries;
  IterationRef iteration;

  friend bool operator==(const LineAnnotation&, const LineAnnotation&) = default;
};

// Within each iteration, a read of a (var, repr) pair already shown on an
// earlier line is dropped. Writes are always kept.
inline std::vector<LineAnnotation> redundancy_filter(std::vector<LineAnnotation> annotations) {
  std::vector<std::size_t> order(annotations.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return annotations[a].loc.line < annotations[b].loc.line;
  });

  std::map<IterationRef, std::set<std::pair<std::string, std::string>>> shown;
  for (auto i : order) {
    auto& annotation = annotations[i];
    auto& seen = shown[annotation.iteration];
    std::vector<AnnotationEntry> kept;
    for (auto& entry : annotation.entries) {
      std::pair<std::string, std::string> key{entry.var, entry.repr};
      if (entry.access == Access::read && seen.contains(key)) continue;
      seen.insert(std::move(key));
      kept.push_back(std::move(entry));
    }
    annotation.entries = std::move(kept);
  }
  return annotations;
}

// One annotation per executed line of ctx.file, sorted by line. Lines covered
// by the cursor's iteration take their values from it; other lines from
// their earliest covering iteration.
inline std::vector<LineAnnotation> annotate_file(const TraceStore& store, const CursorContext& ctx,
                                                 bool allow_stale = false) {
  require_fresh(store, allow_stale);
  if (ctx.cursor_line < 1) throw error("cursor line must be at least 1");

  auto file_index = store.line_index().find(ctx.file);
  if (file_index == store.line_index().end()) return {};

  auto iterations = detail::iterations_in_file(store, ctx.file);
  const auto* focused = detail::earliest_covering(iterations, ctx.cursor_line);

  std::vector<LineAnnotation> annotations;
  for (const auto& [line, seqs] : file_index->second) {
    const auto* source = focused && focused->covers(line) ? focused : detail::earliest_covering(iterations, line);
    if (source == nullptr) continue;

    LineAnnotation annotation;
    annotation.loc = {ctx.file, line};
    annotation.iteration = {source->act, source->index};
    // Position by first bind, value by last bind, write if any bind wrote.
    std::map<std::string, std::size_t> slot;
    for (Seq seq : source->bind_events) {
      const auto& event = store.at(seq);
      if (event.loc.line != line || event.loc.file != ctx.file) continue;
      const auto* bind = event.as<BindPayload>();
      auto [it, inserted] = slot.try_emplace(bind->var, annotation.entries.size());
      if (inserted) {
        annotation.entries.push_back({bind->var, bind->repr, bind->access});
      } else {
        auto& entry = annotation.entries[it->second];
        entry.repr = bind->repr;
        if (bind->access == Access::write) entry.access = Access::write;
      }
    }
    annotations.push_back(std::move(annotation));
  }
  return redundancy_filter(std::move(annotations));
}

// Any edit invalidates the whole store.
inline void on_edit(const TraceStore& store, std::string_view /*file*/) { store.mark_stale(); }

inline nlohmann::ordered_json annotations_to_json(const std::vector<LineAnnotation>& annotations) {
  auto out = nlohmann::ordered_json::array();
  for (const auto& annotation : annotations) {
    auto entries = nlohmann::ordered_json::array();
    for (const auto& entry : annotation.entries) {
      entries.push_back({{"var", entry.var}, {"repr", entry.repr}, {"access", std::string(to_string(entry.access))}});
    }
    out.push_back({{"file", annotation.loc.file},
                   {"line", annotation.loc.line},
                   {"iteration", {{"act", annotation.iteration.act}, {"index", annotation.iteration.index}}},
                   {"entries", std::move(entries)}});
  }
  return out;
}

inline std::string annotation_suffix(const LineAnnotation& annotation) {
  if (annotation.entries.empty()) return {};
  std::string out = "  // ";
  for (std::size_t i = 0; i < annotation.entries.size(); ++i) {
    if (i > 0) out += ", ";
    out += annotation.entries[i].var + " = " + annotation.entries[i].repr;
  }
  return out;
}

// Echoes source with `  // var = repr` suffixes on annotated lines.
inline std::string render_annotated_source(std::string_view source, const std::vector<LineAnnotation>& annotations) {
  std::map<std::int64_t, const LineAnnotation*> by_line;
  for (const auto& annotation : annotations) by_line[annotation.loc.line] = &annotation;
  std::string out;
  std::int64_t number = 0;
  std::size_t start = 0;
  while (start < source.size()) {
    auto end = source.find('\n', start);
    auto line = source.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
    ++number;
    out += line;
    if (auto it = by_line.find(number); it != by_line.end()) out += annotation_suffix(*it->second);
    out += '\n';
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return out;
}

}  // namespace tracelens
