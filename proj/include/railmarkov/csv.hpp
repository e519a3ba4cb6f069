#pragma once

// Small CSV reader/writer. Handles double-quoted fields on input (within one
// physical line); output quotes any field containing a delimiter.

#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "railmarkov/util.hpp"

namespace railmarkov::csv {

// One logical row; empty optional at end of stream.
inline bool read_row(std::istream& in, std::vector<std::string>& out, std::size_t& line_no) {
  out.clear();
  std::string line;
  do {
    if (!std::getline(in, line)) return false;
    ++line_no;
  } while (line.empty() || line == "\r");
  if (!line.empty() && line.back() == '\r') line.pop_back();

  std::string field;
  bool in_quotes = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      out.push_back(field);
      field.clear();
    } else {
      field.push_back(c);
    }
  }
  out.push_back(field);
  return true;
}

inline void write_row(std::ostream& os, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i > 0) os << ',';
    const std::string& f = fields[i];
    if (f.find_first_of(",\"\n") != std::string::npos) {
      os << '"';
      for (char c : f) {
        if (c == '"') os << '"';
        os << c;
      }
      os << '"';
    } else {
      os << f;
    }
  }
  os << '\n';
}

inline void expect_header(std::istream& in, const std::vector<std::string>& expected,
                          const std::string& source, std::size_t& line_no) {
  std::vector<std::string> header;
  if (!read_row(in, header, line_no)) {
    throw Error(source + ": missing header row");
  }
  if (header != expected) {
    std::string want;
    for (std::size_t i = 0; i < expected.size(); ++i) {
      if (i) want += ',';
      want += expected[i];
    }
    throw Error(source + ": unexpected header, want \"" + want + "\"");
  }
}

}  // namespace railmarkov::csv
