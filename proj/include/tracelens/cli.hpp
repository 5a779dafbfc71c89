#pragma once

// Command implementations behind the `tracelens` executable. Each returns
// the process exit status.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <istream>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tracelens/doc_generator.hpp"
#include "tracelens/line_annotator.hpp"
#include "tracelens/search_engine.hpp"
#include "tracelens/service.hpp"
#include "tracelens/trace_model.hpp"

namespace tracelens::cli {

enum ExitCode : int {
  ok = 0,
  failure = 1,
  malformed_input = 2,
  no_matches = 3,
  stale = 4,
};

namespace detail {

// Loads the trace or reports why not; nullptr means exit 2.
inline std::shared_ptr<TraceStore> load(const std::string& trace, std::ostream& err) {
  try {
    return load_store(trace);
  } catch (const error& e) {
    err << "tracelens: " << trace << ": " << e.what() << "\n";
    return nullptr;
  }
}

// Writes to --out when given, else to out.
inline bool emit(const std::string& text, const std::optional<std::string>& path, std::ostream& out, std::ostream& err) {
  if (!path) {
    out << text;
    return true;
  }
  std::ofstream file(*path, std::ios::binary);
  if (!file) {
    err << "tracelens: cannot write '" << *path << "'\n";
    return false;
  }
  file << text;
  return true;
}

// `scope` REPL argument: tokens starting with "file:" are globs, the rest
// are method prefixes. No tokens clears the scope.
inline SearchScope parse_scope(const std::string& expression) {
  SearchScope scope;
  std::istringstream tokens(expression);
  std::string token;
  while (tokens >> token) {
    if (token.starts_with("file:")) {
      scope.file_globs.push_back(token.substr(5));
    } else {
      scope.method_prefixes.push_back(token);
    }
  }
  return scope;
}

}  // namespace detail

struct SearchOptions {
  std::string trace;
  std::string needle;
  SearchScope scope;
  bool case_sensitive = true;
  bool include_exception_text = true;
  bool interactive = false;
};

inline int cmd_search(const SearchOptions& options, std::ostream& out, std::ostream& err, std::istream& in = std::cin) {
  auto store = detail::load(options.trace, err);
  if (!store) return malformed_input;

  std::optional<SearchSession> session;
  try {
    session.emplace(open_session(store, {options.needle, options.case_sensitive, options.include_exception_text},
                                 options.scope));
  } catch (const empty_needle& e) {
    err << "tracelens: " << e.what() << "\n";
    return failure;
  }
  if (store->stale()) err << "tracelens: warning: trace is stale\n";

  std::size_t found = 0;
  if (!options.interactive) {
    while (auto match = session->find_next()) {
      out << match_to_line(*match) << "\n";
      ++found;
    }
    if (found == 0) out << "no matches\n";
    return found > 0 ? ok : no_matches;
  }

  std::optional<SearchMatch> current;
  std::string command;
  out << "> " << std::flush;
  while (std::getline(in, command)) {
    std::istringstream words(command);
    std::string verb;
    words >> verb;
    if (verb == "q") break;
    if (verb == "n") {
      current = session->find_next();
      if (current) {
        ++found;
        out << match_to_line(*current) << "\n";
      } else {
        out << "exhausted\n";
      }
    } else if (verb == "locals") {
      if (!current) {
        out << "no current match\n";
      } else if (current->frame_locals.empty()) {
        out << "(no locals)\n";
      } else {
        for (const auto& local : current->frame_locals) out << local.var << " = " << local.repr << "\n";
      }
    } else if (verb == "scope") {
      std::string rest;
      std::getline(words, rest);
      session->set_scope(detail::parse_scope(rest));
      out << "scope updated\n";
    } else if (!verb.empty()) {
      out << "commands: n, locals, scope <prefix|file:glob>..., q\n";
    }
    out << "> " << std::flush;
  }
  out << "\n";
  return found > 0 ? ok : no_matches;
}

struct DocsOptions {
  std::string trace;
  std::string prefix;
  std::size_t k = 3;
  std::string format = "text";  // text | json
  std::optional<std::string> out_path;
  std::optional<std::string> constructor_marker;
  // Appends the succinctness report (text) or field (json) when set.
  std::optional<std::string> source_map;
  std::string source_root = ".";
};

inline int cmd_docs(const DocsOptions& options, std::ostream& out, std::ostream& err) {
  auto store = detail::load(options.trace, err);
  if (!store) return malformed_input;
  if (options.k < 1) {
    err << "tracelens: -k must be at least 1\n";
    return failure;
  }
  auto docs = generate_docs(*store, {options.prefix, options.k, options.constructor_marker});

  std::optional<SuccinctnessReport> report;
  if (options.source_map) {
    try {
      report = succinctness_report(docs, SourceMap::load(*options.source_map), options.source_root);
    } catch (const error& e) {
      err << "tracelens: " << e.what() << "\n";
      return failure;
    }
  }

  std::string text;
  if (options.format == "json") {
    auto body = docs_to_json(docs);
    if (report) {
      for (std::size_t i = 0; i < docs.size(); ++i) {
        const auto& ratio = report->rows[i].ratio;
        body[i]["succinctness"] = ratio ? nlohmann::ordered_json(*ratio) : nlohmann::ordered_json(nullptr);
      }
    }
    text = body.dump(2) + "\n";
  } else if (options.format == "text") {
    text = docs_to_text(docs);
    if (report) text += "\nsuccinctness\n" + report_to_text(*report);
  } else {
    err << "tracelens: unknown format '" << options.format << "'\n";
    return failure;
  }
  return detail::emit(text, options.out_path, out, err) ? ok : failure;
}

struct AnnotateOptions {
  std::string trace;
  std::string file;
  std::int64_t cursor = 1;
  std::string format = "text";  // text | json
  std::string source_root = ".";
  bool allow_stale = false;
  bool check_edits = false;
};

inline int cmd_annotate(const AnnotateOptions& options, std::ostream& out, std::ostream& err) {
  auto store = detail::load(options.trace, err);
  if (!store) return malformed_input;
  if (options.check_edits) detect_edits(*store, options.trace, options.source_root);

  std::vector<LineAnnotation> annotations;
  try {
    annotations = annotate_file(*store, {options.file, options.cursor}, options.allow_stale);
  } catch (const stale_trace& e) {
    err << "tracelens: " << e.what() << " (re-record the trace or pass --allow-stale)\n";
    return stale;
  } catch (const error& e) {
    err << "tracelens: " << e.what() << "\n";
    return failure;
  }

  if (options.format == "json") {
    out << annotations_to_json(annotations).dump(2) << "\n";
    return ok;
  }
  if (options.format != "text") {
    err << "tracelens: unknown format '" << options.format << "'\n";
    return failure;
  }
  auto path = resolve_under(options.source_root, options.file);
  auto source = path ? read_text_file(*path) : std::nullopt;
  if (!source) {
    err << "tracelens: cannot read source '" << options.file << "' under '" << options.source_root << "'\n";
    return failure;
  }
  out << render_annotated_source(*source, annotations);
  return ok;
}

inline int cmd_validate(const std::string& trace, std::ostream& out, std::ostream& err) {
  auto store = detail::load(trace, err);
  if (!store) return malformed_input;
  std::size_t truncated = 0;
  for (const auto& [id, activation] : store->activations()) truncated += activation.truncated() ? 1 : 0;
  out << fmt::format("ok: {} events, {} activations ({} truncated), digest {}\n", store->events().size(),
                     store->activations().size(), truncated, store->digest());
  return ok;
}

}  // namespace tracelens::cli
