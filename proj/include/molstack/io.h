// Copyright 2026 The molstack Authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef MOLSTACK_IO_H_
#define MOLSTACK_IO_H_

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace molstack {

std::string read_text(const std::string& path);

// Writes to "<path>.tmp" and renames over `path`; a failed write leaves no
// partial file behind.
void atomic_write(const std::string& path, std::string_view content);

// Shortest representation that round-trips exactly.
std::string format_double(double value);
// Strict: the whole token must be a number. Throws kFormat.
double parse_double(std::string_view text);

using ExampleId = std::int64_t;
using PredictionMap = std::map<ExampleId, double>;

// "id,prediction" CSV with header. Duplicate ids throw kDuplicateCell.
PredictionMap read_prediction_csv(const std::string& path);
PredictionMap parse_prediction_csv(std::string_view content, const std::string& source);
std::string format_prediction_csv(const PredictionMap& predictions,
                                  std::string_view value_column = "prediction");
void write_prediction_csv(const std::string& path, const PredictionMap& predictions,
                          std::string_view value_column = "prediction");

// Two-column integer CSV with header, e.g. "id,fold".
std::map<ExampleId, int> read_label_csv(const std::string& path);

}  // namespace molstack

#endif  // MOLSTACK_IO_H_
