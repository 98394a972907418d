#include "ppibench/utf8.hpp"

namespace ppibench::utf8 {
namespace {

std::size_t sequence_length(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead >> 5) == 0x6) return 2;
  if ((lead >> 4) == 0xE) return 3;
  if ((lead >> 3) == 0x1E) return 4;
  return 1;
}

}  // namespace

std::size_t length(std::string_view text) {
  std::size_t count = 0;
  for (std::size_t i = 0; i < text.size(); ++count) {
    i += sequence_length(static_cast<unsigned char>(text[i]));
  }
  return count;
}

std::optional<std::size_t> byte_offset(std::string_view text, std::size_t index) {
  std::size_t pos = 0;
  for (std::size_t cp = 0; cp < index; ++cp) {
    if (pos >= text.size()) return std::nullopt;
    pos += sequence_length(static_cast<unsigned char>(text[pos]));
  }
  if (pos > text.size()) return std::nullopt;
  return pos;
}

}  // namespace ppibench::utf8
