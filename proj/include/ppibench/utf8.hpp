#pragma once

#include <cstddef>
#include <optional>
#include <string_view>

namespace ppibench::utf8 {

/// Number of code points in `text`. Invalid lead bytes count as one code point each.
std::size_t length(std::string_view text);

/// Byte offset of code point `index` in `text`; `index == length(text)` maps to
/// `text.size()`. Absent when out of range.
std::optional<std::size_t> byte_offset(std::string_view text, std::size_t index);

}  // namespace ppibench::utf8
