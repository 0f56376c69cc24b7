#pragma once

#include <cstddef>
#include <string>
#include <string_view>

namespace halluspan::utf8 {

// All offsets in this project count Unicode code points. These helpers are the
// only place where UTF-8 bytes and code points meet.

/// Decodes UTF-8 into code points. Throws ValidationError on malformed input.
std::u32string decode(std::string_view text);

std::string encode(std::u32string_view text);

/// Number of code points in `text`. Throws ValidationError on malformed input.
std::size_t length(std::string_view text);

/// Code points [start, end) of `text`, re-encoded as UTF-8.
std::string substr(std::string_view text, std::size_t start, std::size_t end);

}  // namespace halluspan::utf8
