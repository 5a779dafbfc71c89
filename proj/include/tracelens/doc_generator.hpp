#pragma once

// Example-based method documentation built from observed calls.

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tracelens/error.hpp"
#include "tracelens/trace_model.hpp"

namespace tracelens {

struct MethodCallRecord {
  std::string method;
  // (name, repr) in declaration order.
  std::vector<std::pair<std::string, std::string>> args;
  std::optional<std::string> recv_before;
  std::optional<std::string> recv_after;
  std::optional<std::string> ret;
  std::optional<std::string> exc_type;
  ActId act = 0;

  friend bool operator==(const MethodCallRecord&, const MethodCallRecord&) = default;
};

enum class TemplateKind { threw, returned_and_changed, changed_only, returned_only, no_effect, constructed };

inline std::string_view to_string(TemplateKind kind) {
  switch (kind) {
    case TemplateKind::threw: return "threw";
    case TemplateKind::returned_and_changed: return "returned_and_changed";
    case TemplateKind::changed_only: return "changed_only";
    case TemplateKind::returned_only: return "returned_only";
    case TemplateKind::no_effect: return "no_effect";
    case TemplateKind::constructed: return "constructed";
  }
  return "?";
}

// One record per closed activation, in call order. Truncated activations
// have nothing to document and are skipped.
inline std::vector<MethodCallRecord> collect_records(const TraceStore& store) {
  std::vector<const Activation*> closed;
  for (const auto& [id, activation] : store.activations()) {
    if (!activation.truncated()) closed.push_back(&activation);
  }
  std::sort(closed.begin(), closed.end(),
            [](const Activation* a, const Activation* b) { return a->call_seq < b->call_seq; });

  std::vector<MethodCallRecord> records;
  records.reserve(closed.size());
  for (const auto* activation : closed) {
    MethodCallRecord record;
    record.method = activation->method;
    record.act = activation->act;
    const auto* call = store.at(activation->call_seq).as<CallPayload>();
    for (const auto& arg : call->args) record.args.emplace_back(arg.name, arg.repr);
    record.recv_before = call->recv_before;

    const auto& close = store.at(*activation->close_seq);
    if (const auto* exc = close.as<ExceptionPayload>()) {
      record.exc_type = exc->exc_type;
    } else if (const auto* ret = close.as<ReturnPayload>()) {
      if (ret->ret) record.ret = ret->ret->repr;
      record.recv_after = ret->recv_after;
    }
    records.push_back(std::move(record));
  }
  return records;
}

inline std::string_view final_name_segment(std::string_view method) {
  auto dot = method.rfind('.');
  return dot == std::string_view::npos ? method : method.substr(dot + 1);
}

// A constructor call without an observed resulting object has nothing to
// show as "became", so it is classified like any other method.
inline TemplateKind classify(const MethodCallRecord& record, std::string_view constructor_marker = "<init>") {
  if (record.exc_type) return TemplateKind::threw;
  if (final_name_segment(record.method) == constructor_marker && record.recv_after) {
    return TemplateKind::constructed;
  }
  bool changed = record.recv_before && record.recv_after && *record.recv_before != *record.recv_after;
  bool returned = record.ret.has_value();
  if (changed && returned) return TemplateKind::returned_and_changed;
  if (changed) return TemplateKind::changed_only;
  if (returned) return TemplateKind::returned_only;
  return TemplateKind::no_effect;
}

inline std::string render_sentence(const MethodCallRecord& record, std::string_view constructor_marker = "<init>") {
  std::string args_clause;
  if (!record.args.empty()) {
    args_clause = " with arguments (";
    for (std::size_t i = 0; i < record.args.size(); ++i) {
      if (i > 0) args_clause += ", ";
      args_clause += record.args[i].second;
    }
    args_clause += ")";
  }

  auto kind = classify(record, constructor_marker);
  if (kind == TemplateKind::constructed) {
    return "When constructed" + args_clause + ", the object became " + *record.recv_after + ".";
  }

  std::string sentence = "When called";
  if (record.recv_before) sentence += " on " + *record.recv_before;
  sentence += args_clause + ", ";
  switch (kind) {
    case TemplateKind::threw:
      sentence += "the method threw " + *record.exc_type;
      break;
    case TemplateKind::returned_and_changed:
      sentence += "the method returned " + *record.ret + " and the object changed to " + *record.recv_after;
      break;
    case TemplateKind::changed_only:
      sentence += "the object changed to " + *record.recv_after;
      break;
    case TemplateKind::returned_only:
      sentence += "the method returned " + *record.ret;
      break;
    case TemplateKind::no_effect:
      sentence += "the method completed with no observable effect";
      break;
    case TemplateKind::constructed:
      break;
  }
  return sentence + ".";
}

struct DocEntry {
  std::string method;
  std::vector<std::string> sentences;
  std::size_t example_count = 0;
  std::size_t distinct_count = 0;

  friend bool operator==(const DocEntry&, const DocEntry&) = default;
};

struct DocOptions {
  std::string method_prefix;
  std::size_t max_sentences = 3;
  // Overrides the marker declared in the trace header.
  std::optional<std::string> constructor_marker;
};

namespace detail {

struct RenderedSentence {
  std::string text;
  TemplateKind kind;
};

// Keeps at most k sentences: the first sentence of every template kind (in
// order of first appearance) before any same-kind variant. Output keeps
// first-occurrence order.
inline std::vector<std::string> select_sentences(const std::vector<RenderedSentence>& distinct, std::size_t k) {
  std::vector<bool> keep(distinct.size(), false);
  std::size_t kept = 0;
  std::set<TemplateKind> covered;
  for (std::size_t i = 0; i < distinct.size() && kept < k; ++i) {
    if (covered.insert(distinct[i].kind).second) {
      keep[i] = true;
      ++kept;
    }
  }
  for (std::size_t i = 0; i < distinct.size() && kept < k; ++i) {
    if (!keep[i]) {
      keep[i] = true;
      ++kept;
    }
  }
  std::vector<std::string> out;
  for (std::size_t i = 0; i < distinct.size(); ++i) {
    if (keep[i]) out.push_back(distinct[i].text);
  }
  return out;
}

}  // namespace detail

inline std::vector<DocEntry> generate_docs(const TraceStore& store, const DocOptions& options = {}) {
  if (options.max_sentences < 1) throw error("sentence cap must be at least 1");
  std::string marker = options.constructor_marker.value_or(store.header().constructor_marker);

  struct Group {
    std::size_t examples = 0;
    std::vector<detail::RenderedSentence> distinct;
    std::set<std::string> seen;
  };
  std::map<std::string, Group> groups;
  for (const auto& record : collect_records(store)) {
    if (!std::string_view(record.method).starts_with(options.method_prefix)) continue;
    auto& group = groups[record.method];
    ++group.examples;
    auto sentence = render_sentence(record, marker);
    if (group.seen.insert(sentence).second) {
      group.distinct.push_back({std::move(sentence), classify(record, marker)});
    }
  }

  std::vector<DocEntry> docs;
  docs.reserve(groups.size());
  for (const auto& [method, group] : groups) {
    docs.push_back({method, detail::select_sentences(group.distinct, options.max_sentences), group.examples,
                    group.distinct.size()});
  }
  return docs;
}

inline std::string docs_to_text(const std::vector<DocEntry>& docs) {
  std::string out;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    if (i > 0) out += "\n";
    out += docs[i].method + "\n";
    for (const auto& sentence : docs[i].sentences) out += "  " + sentence + "\n";
  }
  return out;
}

inline nlohmann::ordered_json docs_to_json(const std::vector<DocEntry>& docs) {
  auto out = nlohmann::ordered_json::array();
  for (const auto& entry : docs) {
    out.push_back({{"method", entry.method},
                   {"sentences", entry.sentences},
                   {"example_count", entry.example_count},
                   {"distinct_count", entry.distinct_count}});
  }
  return out;
}

inline std::vector<DocEntry> docs_from_json(const nlohmann::json& value) {
  std::vector<DocEntry> docs;
  for (const auto& item : value) {
    docs.push_back({item.at("method").get<std::string>(), item.at("sentences").get<std::vector<std::string>>(),
                    item.at("example_count").get<std::size_t>(), item.at("distinct_count").get<std::size_t>()});
  }
  return docs;
}

// Where each method's source lives; lines are 1-based and inclusive.
class SourceMap {
 public:
  struct Span {
    std::string file;
    std::int64_t start_line = 1;
    std::int64_t end_line = 1;
  };

  SourceMap() = default;

  // Accepts [{"method": ..., "file": ..., "start": n, "end": m}, ...].
  static SourceMap from_json(const nlohmann::json& value) {
    if (!value.is_array()) throw error("source map must be a JSON array");
    SourceMap map;
    for (const auto& item : value) {
      Span span{item.at("file").get<std::string>(), item.at("start").get<std::int64_t>(),
                item.at("end").get<std::int64_t>()};
      if (span.start_line < 1 || span.end_line < span.start_line) {
        throw error(fmt::format("bad line range for '{}'", item.at("method").get<std::string>()));
      }
      map.spans_[item.at("method").get<std::string>()] = std::move(span);
    }
    return map;
  }

  static SourceMap load(const std::filesystem::path& path) {
    std::ifstream input(path);
    if (!input) throw error(fmt::format("cannot open source map '{}'", path.string()));
    try {
      return from_json(nlohmann::json::parse(input));
    } catch (const nlohmann::json::exception& e) {
      throw error(fmt::format("invalid source map '{}': {}", path.string(), e.what()));
    }
  }

  void add(std::string method, Span span) { spans_[std::move(method)] = std::move(span); }

  const Span* find(const std::string& method) const {
    auto it = spans_.find(method);
    return it == spans_.end() ? nullptr : &it->second;
  }

 private:
  std::map<std::string, Span> spans_;
};

// Number of UTF-8 code points.
inline std::size_t char_length(std::string_view text) {
  return static_cast<std::size_t>(
      std::count_if(text.begin(), text.end(), [](char c) { return (static_cast<unsigned char>(c) & 0xC0) != 0x80; }));
}

// Collapses every whitespace run to one space and trims both ends.
inline std::string normalize_whitespace(std::string_view text) {
  std::string out;
  bool pending_space = false;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out += ' ';
    pending_space = false;
    out += c;
  }
  return out;
}

inline std::optional<std::string> method_source(const SourceMap& map, const std::filesystem::path& source_root,
                                                const std::string& method) {
  const auto* span = map.find(method);
  if (span == nullptr) return std::nullopt;
  std::ifstream input(source_root / span->file);
  if (!input) return std::nullopt;
  std::string line;
  std::string body;
  for (std::int64_t number = 1; std::getline(input, line) && number <= span->end_line; ++number) {
    if (number >= span->start_line) body += line + "\n";
  }
  return body;
}

// Mean sentence length over the whitespace-normalized method body length.
inline double succinctness(const DocEntry& entry, const SourceMap& map, const std::filesystem::path& source_root) {
  auto body = method_source(map, source_root, entry.method);
  if (!body) throw missing_source(entry.method);
  auto body_length = char_length(normalize_whitespace(*body));
  if (body_length == 0 || entry.sentences.empty()) throw missing_source(entry.method);
  double total = 0;
  for (const auto& sentence : entry.sentences) total += static_cast<double>(char_length(sentence));
  return total / static_cast<double>(entry.sentences.size()) / static_cast<double>(body_length);
}

struct SuccinctnessReport {
  struct Row {
    std::string method;
    std::optional<double> ratio;  // empty when source is missing
  };
  std::vector<Row> rows;
  std::optional<double> mean;  // over rows with a ratio
};

inline SuccinctnessReport succinctness_report(const std::vector<DocEntry>& docs, const SourceMap& map,
                                              const std::filesystem::path& source_root) {
  SuccinctnessReport report;
  double sum = 0;
  std::size_t measured = 0;
  for (const auto& entry : docs) {
    SuccinctnessReport::Row row{entry.method, std::nullopt};
    try {
      row.ratio = succinctness(entry, map, source_root);
      sum += *row.ratio;
      ++measured;
    } catch (const missing_source&) {
    }
    report.rows.push_back(std::move(row));
  }
  if (measured > 0) report.mean = sum / static_cast<double>(measured);
  return report;
}

inline std::string report_to_text(const SuccinctnessReport& report) {
  std::string out;
  for (const auto& row : report.rows) {
    out += row.ratio ? fmt::format("{:.6f}  {}\n", *row.ratio, row.method)
                     : fmt::format("{:>8}  {}\n", "missing", row.method);
  }
  out += report.mean ? fmt::format("mean {:.6f}\n", *report.mean) : std::string("mean n/a\n");
  return out;
}

}  // namespace tracelens
