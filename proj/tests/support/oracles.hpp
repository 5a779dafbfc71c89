#pragma once

// Brute-force reference computations used to check the library. They read
// the raw JSONL records directly and share no code with the library.

#include <fnmatch.h>

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

namespace tracelens::oracle {

inline std::vector<nlohmann::json> read_records(const std::string& jsonl) {
  std::vector<nlohmann::json> records;
  std::istringstream in(jsonl);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    records.push_back(nlohmann::json::parse(line));
  }
  return records;
}

// (seq, within-event index, origin, label, text)
using OracleHit = std::tuple<std::int64_t, std::size_t, std::string, std::string, std::string>;

inline bool oracle_contains(std::string text, std::string needle, bool case_sensitive) {
  if (!case_sensitive) {
    for (auto& c : text) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    for (auto& c : needle) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return text.find(needle) != std::string::npos;
}

// Every string value in the trace, in file order.
inline std::vector<OracleHit> oracle_candidates(const std::vector<nlohmann::json>& records,
                                                bool include_exception_text = true) {
  std::vector<OracleHit> hits;
  for (const auto& r : records) {
    std::int64_t seq = r["seq"];
    std::string kind = r["kind"];
    std::size_t index = 0;
    if (kind == "call") {
      for (const auto& arg : r["args"]) {
        if (arg["is_string"].get<bool>()) hits.emplace_back(seq, index++, "call_arg", arg["name"], arg["repr"]);
      }
    } else if (kind == "return") {
      if (!r["ret"].is_null() && r["ret"]["is_string"].get<bool>()) {
        hits.emplace_back(seq, index++, "return_value", r["method"], r["ret"]["repr"]);
      }
    } else if (kind == "exception") {
      if (include_exception_text) hits.emplace_back(seq, index++, "exception_message", r["exc_type"], r["msg"]);
    } else if (kind == "bind") {
      if (r["is_string"].get<bool>()) hits.emplace_back(seq, index++, "bind_var", r["var"], r["repr"]);
    }
  }
  return hits;
}

struct OracleScope {
  std::vector<std::string> method_prefixes;
  std::vector<std::string> file_globs;
};

inline std::vector<OracleHit> oracle_search(const std::vector<nlohmann::json>& records, const std::string& needle,
                                            bool case_sensitive, const OracleScope& scope = {},
                                            bool include_exception_text = true) {
  std::map<std::int64_t, std::string> method_of_act;
  std::map<std::int64_t, std::pair<std::string, std::string>> where;  // seq -> (method, file)
  for (const auto& r : records) {
    if (r["kind"] == "call") method_of_act[r["act"]] = r["method"];
    where[r["seq"]] = {method_of_act[r["act"]], r["loc"]["file"]};
  }
  std::vector<OracleHit> out;
  for (auto& hit : oracle_candidates(records, include_exception_text)) {
    const auto& [method, file] = where[std::get<0>(hit)];
    bool method_ok = scope.method_prefixes.empty();
    for (const auto& p : scope.method_prefixes) method_ok = method_ok || method.rfind(p, 0) == 0;
    bool file_ok = scope.file_globs.empty();
    for (const auto& g : scope.file_globs) file_ok = file_ok || fnmatch(g.c_str(), file.c_str(), 0) == 0;
    if (method_ok && file_ok && oracle_contains(std::get<4>(hit), needle, case_sensitive)) out.push_back(hit);
  }
  std::sort(out.begin(), out.end(), [](const OracleHit& a, const OracleHit& b) {
    return std::tie(std::get<0>(a), std::get<1>(a)) < std::tie(std::get<0>(b), std::get<1>(b));
  });
  return out;
}

// act -> seqs of Line/Bind events, assigning each to the innermost open
// activation on its thread.
inline std::map<std::int64_t, std::vector<std::int64_t>> oracle_own_events(const std::vector<nlohmann::json>& records) {
  std::map<std::string, std::vector<std::int64_t>> stacks;
  std::map<std::int64_t, std::vector<std::int64_t>> own;
  for (const auto& r : records) {
    std::string kind = r["kind"];
    auto& stack = stacks[r["thread"].get<std::string>()];
    if (kind == "call") {
      stack.push_back(r["act"]);
      own[r["act"]];
    } else if (kind == "return" || kind == "exception") {
      stack.pop_back();
    } else {
      own[stack.back()].push_back(r["seq"]);
    }
  }
  return own;
}

// Splits a sequence of line numbers wherever a value does not exceed its
// predecessor. Returns the positions of each piece.
inline std::vector<std::vector<std::size_t>> split_at_non_increase(const std::vector<std::int64_t>& lines) {
  std::vector<std::vector<std::size_t>> pieces;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (i == 0 || lines[i] <= lines[i - 1]) pieces.emplace_back();
    pieces.back().push_back(i);
  }
  return pieces;
}

}  // namespace tracelens::oracle
