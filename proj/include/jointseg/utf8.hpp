#pragma once

#include <string>
#include <string_view>

namespace jointseg::utf8 {

// Decodes UTF-8 into scalar values. Throws ParseError on malformed input.
std::u32string decode(std::string_view bytes);

std::string encode(std::u32string_view text);
std::string encode(char32_t c);

}  // namespace jointseg::utf8
