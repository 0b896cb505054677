#include "vcare/query.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>

namespace vcare {

namespace {

struct Token {
  enum Kind { Word, Number, Comma, End } kind;
  std::string_view text;
};

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  Token next() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    if (pos_ == src_.size()) return {Token::End, {}};
    std::size_t start = pos_;
    char c = src_[pos_];
    if (c == ',') {
      ++pos_;
      return {Token::Comma, src_.substr(start, 1)};
    }
    if (std::isdigit(static_cast<unsigned char>(c))) {
      while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
      return {Token::Number, src_.substr(start, pos_ - start)};
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      while (pos_ < src_.size() &&
             (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) {
        ++pos_;
      }
      return {Token::Word, src_.substr(start, pos_ - start)};
    }
    throw QueryError("unexpected character '" + std::string(1, c) + "'");
  }

 private:
  std::string_view src_;
  std::size_t pos_ = 0;
};

void expect_word(const Token& t, std::string_view word) {
  if (t.kind != Token::Word || t.text != word) {
    throw QueryError("expected '" + std::string(word) + "'");
  }
}

Round parse_round(const Token& t) {
  if (t.kind != Token::Number) throw QueryError("expected round number");
  Round value = 0;
  auto [ptr, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), value);
  if (ec != std::errc() || ptr != t.text.data() + t.text.size()) {
    throw QueryError("round number out of range");
  }
  return value;
}

}  // namespace

QuerySpec parse_query(std::string_view text) {
  Lexer lex(text);
  QuerySpec q;
  expect_word(lex.next(), "select");
  Token t = lex.next();
  while (true) {
    if (t.kind != Token::Word || t.text == "from") throw QueryError("expected parameter name");
    if (find_obd_parameter(t.text) == nullptr) {
      throw QueryError("unsupported parameter '" + std::string(t.text) + "'");
    }
    q.parameters.emplace_back(t.text);
    t = lex.next();
    if (t.kind != Token::Comma) break;
    t = lex.next();
  }
  expect_word(t, "from");
  q.time_from = parse_round(lex.next());
  expect_word(lex.next(), "to");
  q.time_to = parse_round(lex.next());
  if (lex.next().kind != Token::End) throw QueryError("trailing input");

  std::sort(q.parameters.begin(), q.parameters.end());
  if (std::adjacent_find(q.parameters.begin(), q.parameters.end()) != q.parameters.end()) {
    throw QueryError("duplicate parameter");
  }
  if (q.time_from > q.time_to) throw QueryError("time_from is after time_to");
  return q;
}

std::optional<QuerySpec> try_parse_query(std::string_view text) {
  try {
    return parse_query(text);
  } catch (const QueryError&) {
    return std::nullopt;
  }
}

bool QuerySpec::contains(const QuerySpec& inner) const {
  return inner.time_from >= time_from && inner.time_to <= time_to &&
         std::includes(parameters.begin(), parameters.end(), inner.parameters.begin(),
                       inner.parameters.end());
}

bool QuerySpec::selects(const ObdRecord& record) const {
  return record.timestamp >= time_from && record.timestamp <= time_to &&
         std::binary_search(parameters.begin(), parameters.end(), record.parameter);
}

std::string QuerySpec::to_string() const {
  std::string out = "select ";
  for (std::size_t i = 0; i < parameters.size(); ++i) {
    if (i > 0) out += ',';
    out += parameters[i];
  }
  out += " from " + std::to_string(time_from) + " to " + std::to_string(time_to);
  return out;
}

}  // namespace vcare
