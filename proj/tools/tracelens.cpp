#include <csignal>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tracelens/cli.hpp"
#include "tracelens/service.hpp"

namespace {

httplib::Server* running_server = nullptr;

void stop_server(int) {
  if (running_server != nullptr) running_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  using namespace tracelens;

  CLI::App app{"tracelens: runtime value search, example docs and line annotations over recorded traces"};
  app.require_subcommand(1);

  cli::SearchOptions search;
  std::vector<std::string> prefixes;
  std::vector<std::string> globs;
  bool ignore_case = false;
  bool no_exception_text = false;
  auto* search_cmd = app.add_subcommand("search", "find string values observed at runtime");
  search_cmd->add_option("trace", search.trace, "trace file (JSONL)")->required();
  search_cmd->add_option("needle", search.needle, "text to search for")->required();
  search_cmd->add_option("--method", prefixes, "restrict to qualified-name prefixes");
  search_cmd->add_option("--file", globs, "restrict to file globs");
  search_cmd->add_flag("-i,--ignore-case", ignore_case, "case-insensitive matching");
  search_cmd->add_flag("--no-exception-text", no_exception_text, "do not search exception messages");
  search_cmd->add_flag("--interactive", search.interactive, "step through matches (n, locals, scope, q)");

  cli::DocsOptions docs;
  std::string out_path;
  std::string marker;
  std::string source_map;
  auto* docs_cmd = app.add_subcommand("docs", "generate example-based method documentation");
  docs_cmd->add_option("trace", docs.trace, "trace file (JSONL)")->required();
  docs_cmd->add_option("--prefix", docs.prefix, "only methods with this qualified-name prefix");
  docs_cmd->add_option("-k", docs.k, "maximum sentences per method")->check(CLI::PositiveNumber);
  docs_cmd->add_option("--format", docs.format, "text or json")->check(CLI::IsMember({"text", "json"}));
  docs_cmd->add_option("--out", out_path, "write to a file instead of stdout");
  docs_cmd->add_option("--constructor-marker", marker, "final name segment that marks constructors");
  docs_cmd->add_option("--source-map", source_map, "method source map (JSON) for the succinctness report");
  docs_cmd->add_option("--source-root", docs.source_root, "directory trace paths are relative to");

  cli::AnnotateOptions annotate;
  auto* annotate_cmd = app.add_subcommand("annotate", "show sample values at the end of each executed line");
  annotate_cmd->add_option("trace", annotate.trace, "trace file (JSONL)")->required();
  annotate_cmd->add_option("--file", annotate.file, "trace-relative source file")->required();
  annotate_cmd->add_option("--cursor", annotate.cursor, "cursor line")->check(CLI::PositiveNumber);
  annotate_cmd->add_option("--format", annotate.format, "text or json")->check(CLI::IsMember({"text", "json"}));
  annotate_cmd->add_option("--source-root", annotate.source_root, "directory trace paths are relative to");
  annotate_cmd->add_flag("--allow-stale", annotate.allow_stale, "annotate even if sources changed");
  annotate_cmd->add_flag("--check-edits", annotate.check_edits, "treat sources newer than the trace as edited");

  ServeConfig serve;
  std::string serve_trace;
  std::string serve_root = ".";
  std::string serve_map;
  std::string ui_dir;
  auto* serve_cmd = app.add_subcommand("serve", "run the local HTTP API");
  serve_cmd->add_option("trace", serve_trace, "trace file (JSONL)")->required();
  serve_cmd->add_option("--source-root", serve_root, "directory trace paths are relative to");
  serve_cmd->add_option("--source-map", serve_map, "method source map (JSON)");
  serve_cmd->add_option("--ui", ui_dir, "static UI bundle directory");
  serve_cmd->add_option("--port", serve.port, "listen port (TRACELENS_PORT overrides)");
  serve_cmd->add_flag("--allow-stale", serve.allow_stale, "serve annotations from a stale trace");
  serve_cmd->add_flag("--check-edits", serve.check_edits, "treat sources newer than the trace as edited");

  std::string validate_trace;
  auto* validate_cmd = app.add_subcommand("validate", "check a trace file and print a summary");
  validate_cmd->add_option("trace", validate_trace, "trace file (JSONL)")->required();

  CLI11_PARSE(app, argc, argv);

  if (*search_cmd) {
    search.scope = {prefixes, globs};
    search.case_sensitive = !ignore_case;
    search.include_exception_text = !no_exception_text;
    return cli::cmd_search(search, std::cout, std::cerr);
  }
  if (*docs_cmd) {
    if (!out_path.empty()) docs.out_path = out_path;
    if (!marker.empty()) docs.constructor_marker = marker;
    if (!source_map.empty()) docs.source_map = source_map;
    return cli::cmd_docs(docs, std::cout, std::cerr);
  }
  if (*annotate_cmd) return cli::cmd_annotate(annotate, std::cout, std::cerr);
  if (*validate_cmd) return cli::cmd_validate(validate_trace, std::cout, std::cerr);

  try {
    serve.trace_path = serve_trace;
    serve.source_root = serve_root;
    if (!serve_map.empty()) serve.source_map = serve_map;
    if (!ui_dir.empty()) serve.ui_dir = ui_dir;
    serve.port = effective_port(serve.port);
    Service service(serve);
    httplib::Server server;
    service.bind(server);
    running_server = &server;
    std::signal(SIGINT, stop_server);
    std::signal(SIGTERM, stop_server);
    std::cerr << "tracelens: serving " << serve_trace << " on http://127.0.0.1:" << serve.port << "\n";
    if (!server.listen("127.0.0.1", serve.port)) {
      std::cerr << "tracelens: cannot listen on port " << serve.port << "\n";
      return cli::failure;
    }
  } catch (const error& e) {
    std::cerr << "tracelens: " << e.what() << "\n";
    return cli::malformed_input;
  }
  return cli::ok;
}
