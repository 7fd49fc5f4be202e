#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace met {

/// Lowercases and splits on every code point that is not a letter or digit.
/// Empty tokens are dropped. No stemming and no stopword removal. Invalid
/// UTF-8 bytes act as separators.
std::vector<std::string> tokenize(std::string_view text);

}  // namespace met
