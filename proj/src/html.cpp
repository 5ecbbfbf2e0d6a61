#include "leakaudit/html.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <unordered_map>

#include "leakaudit/util.hpp"

namespace leakaudit {
namespace {

bool is_ws(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f'; }

bool is_raw_text_element(std::string_view name) {
  static constexpr std::array<std::string_view, 7> kRaw = {"script", "style", "textarea", "title",
                                                           "xmp",    "noscript", "iframe"};
  return std::find(kRaw.begin(), kRaw.end(), name) != kRaw.end();
}

std::size_t find_ci(std::string_view haystack, std::string_view needle, std::size_t from) {
  if (needle.empty()) return from;
  for (std::size_t i = from; i + needle.size() <= haystack.size(); ++i) {
    bool match = true;
    for (std::size_t j = 0; j < needle.size(); ++j) {
      if (std::tolower(static_cast<unsigned char>(haystack[i + j])) != needle[j]) {
        match = false;
        break;
      }
    }
    if (match) return i;
  }
  return std::string_view::npos;
}

void append_utf8(std::string& out, std::uint32_t cp) {
  if (cp == 0 || (cp >= 0xD800 && cp <= 0xDFFF) || cp > 0x10FFFF) cp = 0xFFFD;
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

const std::unordered_map<std::string_view, std::uint32_t>& named_entities() {
  static const std::unordered_map<std::string_view, std::uint32_t> kEntities = {
      {"amp", '&'},      {"lt", '<'},       {"gt", '>'},       {"quot", '"'},     {"apos", '\''},
      {"nbsp", ' '},     {"ndash", 0x2013}, {"mdash", 0x2014}, {"lsquo", 0x2018}, {"rsquo", 0x2019},
      {"ldquo", 0x201C}, {"rdquo", 0x201D}, {"hellip", 0x2026}, {"copy", 0xA9},   {"reg", 0xAE},
      {"trade", 0x2122}, {"middot", 0xB7}, {"bull", 0x2022},  {"laquo", 0xAB},   {"raquo", 0xBB},
      {"euro", 0x20AC},  {"pound", 0xA3},  {"deg", 0xB0},     {"eacute", 0xE9},  {"uuml", 0xFC},
      {"ouml", 0xF6},    {"auml", 0xE4},   {"szlig", 0xDF},   {"times", 0xD7},   {"shy", 0xAD},
  };
  return kEntities;
}

}  // namespace

std::optional<std::string> HtmlToken::attribute(std::string_view key) const {
  for (const auto& [k, v] : attributes) {
    if (k == key) return v;
  }
  return std::nullopt;
}

std::optional<std::string> HtmlElement::attribute(std::string_view key) const {
  for (const auto& [k, v] : attributes) {
    if (k == key) return v;
  }
  return std::nullopt;
}

std::string decode_entities(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '&') {
      out.push_back(text[i]);
      continue;
    }
    const auto semi = text.find(';', i + 1);
    if (semi == std::string_view::npos || semi - i > 12) {
      out.push_back('&');
      continue;
    }
    const auto body = text.substr(i + 1, semi - i - 1);
    if (!body.empty() && body[0] == '#') {
      std::uint32_t cp = 0;
      bool ok = body.size() > 1;
      if (ok && (body[1] == 'x' || body[1] == 'X')) {
        ok = body.size() > 2;
        for (std::size_t k = 2; ok && k < body.size(); ++k) {
          const char c = body[k];
          if (!std::isxdigit(static_cast<unsigned char>(c))) ok = false;
          cp = cp * 16 + static_cast<std::uint32_t>(std::isdigit(static_cast<unsigned char>(c)) ? c - '0' : (std::tolower(c) - 'a' + 10));
          if (cp > 0x10FFFF) cp = 0x110000;
        }
      } else {
        for (std::size_t k = 1; ok && k < body.size(); ++k) {
          if (!std::isdigit(static_cast<unsigned char>(body[k]))) ok = false;
          cp = cp * 10 + static_cast<std::uint32_t>(body[k] - '0');
          if (cp > 0x10FFFF) cp = 0x110000;
        }
      }
      if (ok) {
        append_utf8(out, cp);
        i = semi;
        continue;
      }
    } else if (auto it = named_entities().find(body); it != named_entities().end()) {
      append_utf8(out, it->second);
      i = semi;
      continue;
    }
    out.push_back('&');
  }
  return out;
}

void tokenize_html(std::string_view html, const std::function<void(const HtmlToken&)>& on_token) {
  const std::size_t n = html.size();
  std::size_t pos = 0;
  std::size_t text_start = 0;
  auto flush_text = [&](std::size_t end) {
    if (end > text_start) {
      HtmlToken t;
      t.kind = HtmlToken::Kind::Text;
      t.text = html.substr(text_start, end - text_start);
      on_token(t);
    }
  };
  while (pos < n) {
    if (html[pos] != '<' || pos + 1 >= n) {
      ++pos;
      continue;
    }
    const char next = html[pos + 1];
    if (html.compare(pos, 4, "<!--") == 0) {
      flush_text(pos);
      auto end = html.find("-->", pos + 4);
      HtmlToken t;
      t.kind = HtmlToken::Kind::Comment;
      t.text = html.substr(pos + 4, (end == std::string_view::npos ? n : end) - pos - 4);
      on_token(t);
      pos = end == std::string_view::npos ? n : end + 3;
      text_start = pos;
      continue;
    }
    if (next == '!' || next == '?') {
      flush_text(pos);
      auto end = html.find('>', pos);
      pos = end == std::string_view::npos ? n : end + 1;
      text_start = pos;
      continue;
    }
    const bool closing = next == '/';
    const std::size_t name_start = pos + (closing ? 2 : 1);
    if (name_start >= n || !std::isalpha(static_cast<unsigned char>(html[name_start]))) {
      ++pos;  // a literal '<'
      continue;
    }
    flush_text(pos);
    std::size_t p = name_start;
    while (p < n && !is_ws(html[p]) && html[p] != '>' && html[p] != '/') ++p;
    HtmlToken tag;
    tag.kind = closing ? HtmlToken::Kind::EndTag : HtmlToken::Kind::StartTag;
    tag.name = to_lower(html.substr(name_start, p - name_start));
    // Attributes.
    while (p < n && html[p] != '>') {
      if (is_ws(html[p])) {
        ++p;
        continue;
      }
      if (html[p] == '/') {
        tag.self_closing = p + 1 < n && html[p + 1] == '>';
        ++p;
        continue;
      }
      const std::size_t an = p;
      while (p < n && !is_ws(html[p]) && html[p] != '=' && html[p] != '>' && !(html[p] == '/' && p + 1 < n && html[p + 1] == '>')) ++p;
      std::string attr_name = to_lower(html.substr(an, p - an));
      while (p < n && is_ws(html[p])) ++p;
      std::string value;
      if (p < n && html[p] == '=') {
        ++p;
        while (p < n && is_ws(html[p])) ++p;
        if (p < n && (html[p] == '"' || html[p] == '\'')) {
          const char quote = html[p++];
          const std::size_t vs = p;
          while (p < n && html[p] != quote) ++p;
          value = decode_entities(html.substr(vs, p - vs));
          if (p < n) ++p;
        } else {
          const std::size_t vs = p;
          while (p < n && !is_ws(html[p]) && html[p] != '>') ++p;
          value = decode_entities(html.substr(vs, p - vs));
        }
      }
      if (!attr_name.empty() && !closing) tag.attributes.emplace_back(std::move(attr_name), std::move(value));
    }
    pos = p < n ? p + 1 : n;
    text_start = pos;
    on_token(tag);
    if (!closing && !tag.self_closing && is_raw_text_element(tag.name)) {
      const std::string end_marker = "</" + tag.name;
      auto end = find_ci(html, end_marker, pos);
      if (end == std::string_view::npos) end = n;
      if (end > pos) {
        HtmlToken raw;
        raw.kind = HtmlToken::Kind::Text;
        raw.text = html.substr(pos, end - pos);
        raw.raw_text = true;
        raw.name = tag.name;
        on_token(raw);
      }
      pos = end;
      text_start = pos;
    }
  }
  flush_text(n);
}

std::vector<HtmlElement> find_elements(std::string_view html, std::string_view tag) {
  std::vector<HtmlElement> found;
  std::vector<std::size_t> open;  // indices into `found` for currently open matches
  tokenize_html(html, [&](const HtmlToken& t) {
    switch (t.kind) {
      case HtmlToken::Kind::StartTag:
        if (t.name == tag) {
          found.push_back(HtmlElement{t.name, t.attributes, {}});
          if (!t.self_closing) open.push_back(found.size() - 1);
        }
        break;
      case HtmlToken::Kind::EndTag:
        if (t.name == tag && !open.empty()) open.pop_back();
        break;
      case HtmlToken::Kind::Text: {
        const std::string decoded = t.raw_text ? std::string(t.text) : decode_entities(t.text);
        for (auto idx : open) found[idx].inner_text += decoded;
        break;
      }
      case HtmlToken::Kind::Comment:
        break;
    }
  });
  return found;
}

bool is_block_element(std::string_view tag) {
  static constexpr std::array<std::string_view, 38> kBlock = {
      "address", "article", "aside", "blockquote", "br",     "dd",     "details", "dialog", "div",    "dl",
      "dt",      "fieldset", "figcaption", "figure", "footer", "form",  "h1",      "h2",     "h3",     "h4",
      "h5",      "h6",      "header", "hr",         "li",     "main",   "nav",     "ol",     "p",      "pre",
      "section", "summary", "table",  "tr",         "ul",     "td",     "th",      "caption"};
  return std::find(kBlock.begin(), kBlock.end(), tag) != kBlock.end();
}

}  // namespace leakaudit
