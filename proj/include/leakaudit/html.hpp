#pragma once

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace leakaudit {

// Minimal forgiving HTML tokenizer: enough structure for text extraction and metadata lookup,
// no tree construction.
struct HtmlToken {
  enum class Kind { Text, StartTag, EndTag, Comment };
  Kind kind = Kind::Text;
  std::string name;  // lowercased tag name
  std::vector<std::pair<std::string, std::string>> attributes;  // lowercased names, decoded values
  std::string_view text;  // raw (undecoded) text for Text/Comment tokens
  bool self_closing = false;
  bool raw_text = false;  // Text inside script/style/textarea/title etc.

  std::optional<std::string> attribute(std::string_view key) const;
};

void tokenize_html(std::string_view html, const std::function<void(const HtmlToken&)>& on_token);

std::string decode_entities(std::string_view text);

struct HtmlElement {
  std::string name;
  std::vector<std::pair<std::string, std::string>> attributes;
  std::string inner_text;  // decoded text of descendants

  std::optional<std::string> attribute(std::string_view key) const;
};

// Every element with the given tag name (nesting of the same tag is counted).
std::vector<HtmlElement> find_elements(std::string_view html, std::string_view tag);

bool is_block_element(std::string_view tag);

}  // namespace leakaudit
