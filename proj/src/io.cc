// Copyright 2026 The molstack Authors.
// SPDX-License-Identifier: Apache-2.0

#include "molstack/io.h"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "molstack/error.h"

namespace molstack {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename Fn>
void for_each_data_row(std::string_view content, const std::string& source,
                       std::string_view expected_second, Fn&& fn) {
  std::size_t start = 0;
  int line_no = 0;
  bool header_seen = false;
  while (start < content.size()) {
    std::size_t end = content.find('\n', start);
    if (end == std::string_view::npos) end = content.size();
    const std::string_view line = trim(content.substr(start, end - start));
    start = end + 1;
    ++line_no;
    if (line.empty()) continue;
    const std::size_t comma = line.find(',');
    if (comma == std::string_view::npos || line.find(',', comma + 1) != std::string_view::npos) {
      fail(ErrorCode::kFormat, source + ":" + std::to_string(line_no) + ": expected two columns");
    }
    const std::string_view first = trim(line.substr(0, comma));
    const std::string_view second = trim(line.substr(comma + 1));
    if (!header_seen) {
      header_seen = true;
      if (first != "id" || (!expected_second.empty() && second != expected_second)) {
        fail(ErrorCode::kFormat, source + ": header must be id," + std::string(expected_second));
      }
      continue;
    }
    fn(line_no, first, second);
  }
  if (!header_seen) fail(ErrorCode::kFormat, source + ": missing header");
}

ExampleId parse_id(std::string_view text, const std::string& where) {
  ExampleId id = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), id);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    fail(ErrorCode::kFormat, where + ": malformed id '" + std::string(text) + "'");
  }
  return id;
}

}  // namespace

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void atomic_write(const std::string& path, std::string_view content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::kIo, "cannot write " + tmp);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      out.close();
      std::remove(tmp.c_str());
      fail(ErrorCode::kIo, "write failed for " + tmp);
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::remove(tmp.c_str());
    fail(ErrorCode::kIo, "cannot rename " + tmp + " to " + path + ": " + ec.message());
  }
}

std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view text) {
  text = trim(text);
  double value = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (text.empty() || res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    fail(ErrorCode::kFormat, "malformed number '" + std::string(text) + "'");
  }
  return value;
}

PredictionMap parse_prediction_csv(std::string_view content, const std::string& source) {
  PredictionMap out;
  for_each_data_row(content, source, "", [&](int line, std::string_view id, std::string_view v) {
    const std::string where = source + ":" + std::to_string(line);
    const ExampleId key = parse_id(id, where);
    double value = 0.0;
    try {
      value = parse_double(v);
    } catch (const Error& e) {
      fail(ErrorCode::kFormat, where + ": " + e.what());
    }
    if (!out.emplace(key, value).second) {
      fail(ErrorCode::kDuplicateCell, where + ": duplicate id " + std::to_string(key));
    }
  });
  return out;
}

PredictionMap read_prediction_csv(const std::string& path) {
  return parse_prediction_csv(read_text(path), path);
}

std::string format_prediction_csv(const PredictionMap& predictions, std::string_view value_column) {
  std::string out = "id,";
  out += value_column;
  out += '\n';
  for (const auto& [id, value] : predictions) {
    out += std::to_string(id);
    out += ',';
    out += format_double(value);
    out += '\n';
  }
  return out;
}

void write_prediction_csv(const std::string& path, const PredictionMap& predictions,
                          std::string_view value_column) {
  atomic_write(path, format_prediction_csv(predictions, value_column));
}

std::map<ExampleId, int> read_label_csv(const std::string& path) {
  std::map<ExampleId, int> out;
  for_each_data_row(read_text(path), path, "", [&](int line, std::string_view id, std::string_view v) {
    const std::string where = path + ":" + std::to_string(line);
    const ExampleId key = parse_id(id, where);
    const ExampleId label = parse_id(v, where);
    if (!out.emplace(key, static_cast<int>(label)).second) {
      fail(ErrorCode::kDuplicateCell, where + ": duplicate id " + std::to_string(key));
    }
  });
  return out;
}

}  // namespace molstack
