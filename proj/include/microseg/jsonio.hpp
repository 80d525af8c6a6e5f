#pragma once

#include <string>

#include <json.hpp>

namespace microseg::jsonio {

using Json = nlohmann::ordered_json;

// %.17g rendering: round-trips every finite double exactly.
std::string format_double(double v);

// Deterministic serializer: insertion-ordered keys, 2-space indent, \n line
// endings, floats at 17 significant digits, non-finite floats as null.
std::string dump(const Json& value);

void write_file(const std::string& path, const std::string& contents);
std::string read_file(const std::string& path);
Json parse_file(const std::string& path);

}  // namespace microseg::jsonio
