#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace alacpd {

struct KeyValue {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

// Flat "key = value" lines; '#' starts a comment. Keys may repeat. Throws
// ParseError on a non-blank line without '='.
std::vector<KeyValue> parse_key_values(std::string_view text);

std::string read_text_file(const std::string& path);

}  // namespace alacpd
