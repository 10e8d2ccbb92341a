#pragma once

// Locale-independent output helpers shared by the library and the CLI.

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "retcap/model.hpp"

namespace retcap {

/// Shortest decimal that round-trips to the same double.
std::string format_double(double x);

using Metadata = std::vector<std::pair<std::string, std::string>>;

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
};

/// Writes `# key=value` metadata lines, a header row and the rows.
void write_csv(std::ostream& os, const Table& t, const Metadata& meta = {});

nlohmann::json params_json(const ModelParams& p);
Metadata params_metadata(const ModelParams& p);

}  // namespace retcap
