#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

#include <fmt/format.h>

namespace tracelens {

// Base for every failure the library reports.
class error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A record that is not valid JSON or violates the trace schema.
// line_number is 0 when the record was parsed outside of ingestion.
class malformed_record : public error {
 public:
  malformed_record(std::string field, std::size_t byte_offset, std::string detail,
                   std::size_t line_number = 0)
      : error(describe(field, byte_offset, detail, line_number)),
        field_(std::move(field)),
        byte_offset_(byte_offset),
        detail_(std::move(detail)),
        line_number_(line_number) {}

  const std::string& field() const noexcept { return field_; }
  std::size_t byte_offset() const noexcept { return byte_offset_; }
  const std::string& detail() const noexcept { return detail_; }
  std::size_t line_number() const noexcept { return line_number_; }

  malformed_record at_line(std::size_t line_number) const {
    return malformed_record(field_, byte_offset_, detail_, line_number);
  }

 private:
  static std::string describe(const std::string& field, std::size_t offset,
                              const std::string& detail, std::size_t line_number) {
    std::string where = line_number > 0 ? fmt::format("line {}, ", line_number) : std::string{};
    return fmt::format("malformed record ({}byte {}, field '{}'): {}", where, offset, field, detail);
  }

  std::string field_;
  std::size_t byte_offset_;
  std::string detail_;
  std::size_t line_number_;
};

class non_monotonic_seq : public error {
 public:
  non_monotonic_seq(std::size_t line_number, std::int64_t previous, std::int64_t seq)
      : error(fmt::format("line {}: seq {} does not follow seq {}", line_number, seq, previous)),
        line_number_(line_number) {}

  std::size_t line_number() const noexcept { return line_number_; }

 private:
  std::size_t line_number_;
};

// An event that refers to an activation with no open Call on its thread.
class orphan_event : public error {
 public:
  orphan_event(std::size_t line_number, std::int64_t seq, std::string detail)
      : error(fmt::format("line {}: event seq {} is orphaned: {}", line_number, seq, detail)),
        line_number_(line_number) {}

  std::size_t line_number() const noexcept { return line_number_; }

 private:
  std::size_t line_number_;
};

class stale_trace : public error {
 public:
  stale_trace() : error("trace is stale: sources were edited after recording") {}
};

class empty_needle : public error {
 public:
  empty_needle() : error("search needle must not be empty") {}
};

class unknown_activation : public error {
 public:
  explicit unknown_activation(std::int64_t act)
      : error(fmt::format("unknown activation {}", act)) {}
};

class missing_source : public error {
 public:
  explicit missing_source(const std::string& method)
      : error(fmt::format("no source available for method '{}'", method)) {}
};

}  // namespace tracelens
