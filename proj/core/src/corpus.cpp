#include "privleak/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "privleak/error.hpp"

namespace privleak {

using json = nlohmann::json;

Corpus::Corpus(std::vector<Sample> samples) : samples_(std::move(samples)) {
  index_.reserve(samples_.size());
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    auto [it, inserted] = index_.emplace(samples_[i].id, i);
    if (!inserted) {
      throw Error(ErrorCode::kDuplicateId, "duplicate sample id '" +
                                               samples_[i].id + "'");
    }
  }
}

bool Corpus::contains(std::string_view id) const {
  return index_.count(std::string(id)) > 0;
}

const Sample& Corpus::at(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) {
    throw Error(ErrorCode::kConfig, "unknown sample id '" + std::string(id) + "'");
  }
  return samples_[it->second];
}

Corpus Corpus::subset(const std::vector<std::string>& ids) const {
  std::vector<Sample> out;
  out.reserve(ids.size());
  for (const auto& id : ids) out.push_back(at(id));
  return Corpus(std::move(out));
}

std::size_t Corpus::pii_count() const {
  return static_cast<std::size_t>(std::count_if(
      samples_.begin(), samples_.end(),
      [](const Sample& s) { return s.pii.has_value(); }));
}

// ---------------------------------------------------------------------------

PiiPattern::PiiPattern(std::string name, std::string match_pattern,
                       std::size_t group)
    : name_(std::move(name)), pattern_(std::move(match_pattern)), group_(group) {
  try {
    regex_ = std::regex(pattern_, std::regex::ECMAScript);
  } catch (const std::regex_error& e) {
    throw Error(ErrorCode::kBadPattern,
                "pattern '" + name_ + "' does not compile: " + e.what());
  }
  if (group_ > regex_.mark_count()) {
    throw Error(ErrorCode::kBadPattern,
                "pattern '" + name_ + "' has no capture group " +
                    std::to_string(group_));
  }
}

PiiPattern PiiPattern::builtin(std::string_view name) {
  if (name == "phone_us") {
    return PiiPattern("phone_us", R"(\b(\d{3})-\d{3}-\d{4}\b)", 1);
  }
  if (name == "email_domain") {
    return PiiPattern("email_domain", R"([A-Za-z0-9._%+-]+@(\S+))", 1);
  }
  if (name == "year") {
    return PiiPattern("year", R"(\b((?:19|20)\d{2})\b)", 1);
  }
  throw Error(ErrorCode::kBadPattern,
              "unknown built-in pattern '" + std::string(name) + "'");
}

std::optional<PiiSpan> PiiPattern::find(std::string_view text) const {
  std::cmatch m;
  if (!std::regex_search(text.data(), text.data() + text.size(), m, regex_)) {
    return std::nullopt;
  }
  if (!m[group_].matched) return std::nullopt;
  PiiSpan span;
  span.span.begin = static_cast<std::size_t>(m.position(0));
  span.span.end = span.span.begin + static_cast<std::size_t>(m.length(0));
  span.group_span.begin = static_cast<std::size_t>(m.position(group_));
  span.group_span.end =
      span.group_span.begin + static_cast<std::size_t>(m.length(group_));
  span.full_value = m.str(0);
  span.group_value = m.str(group_);
  return span;
}

// ---------------------------------------------------------------------------

Corpus parse_corpus_jsonl(std::string_view contents) {
  std::vector<Sample> samples;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < contents.size()) {
    std::size_t nl = contents.find('\n', pos);
    if (nl == std::string_view::npos) nl = contents.size();
    std::string_view line = contents.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;

    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(line_no, e.what());
    }
    if (!record.is_object()) throw ParseError(line_no, "record is not an object");
    auto id = record.find("id");
    auto text = record.find("text");
    if (id == record.end() || !id->is_string()) {
      throw ParseError(line_no, "missing string field \"id\"");
    }
    if (text == record.end() || !text->is_string()) {
      throw ParseError(line_no, "missing string field \"text\"");
    }
    samples.push_back({id->get<std::string>(), text->get<std::string>(), {}});
  }
  return Corpus(std::move(samples));
}

Corpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw Error(ErrorCode::kIo, "cannot read " + path.string());
  return parse_corpus_jsonl(buf.str());
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  for (const auto& s : corpus) {
    json record = {{"id", s.id}, {"text", s.text}};
    out << record.dump() << '\n';
  }
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

Corpus annotate_pii(const Corpus& corpus, const PiiPattern& pattern) {
  std::vector<Sample> out;
  out.reserve(corpus.size());
  for (const auto& s : corpus) {
    Sample annotated{s.id, s.text, pattern.find(s.text)};
    out.push_back(std::move(annotated));
  }
  return Corpus(std::move(out));
}

PiiHistogram build_histogram(const Corpus& corpus) {
  PiiHistogram hist;
  for (const auto& s : corpus) {
    if (!s.pii) continue;
    ++hist.counts[s.pii->group_value];
    ++hist.total;
  }
  return hist;
}

std::string least_frequent(const PiiHistogram& hist) {
  if (hist.counts.empty()) {
    throw Error(ErrorCode::kEmptyHistogram, "histogram has no groups");
  }
  // std::map iterates keys in ascending order, so the first strict minimum
  // is also the lexicographically smallest among ties.
  auto best = hist.counts.begin();
  for (auto it = hist.counts.begin(); it != hist.counts.end(); ++it) {
    if (it->second < best->second) best = it;
  }
  return best->first;
}

std::string histogram_to_json(const PiiHistogram& hist) {
  json counts = json::object();
  for (const auto& [group, count] : hist.counts) counts[group] = count;
  return counts.dump(2) + "\n";
}

// ---------------------------------------------------------------------------

namespace {

std::size_t utf8_length(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead >> 5) == 0x6) return 2;
  if ((lead >> 4) == 0xE) return 3;
  if ((lead >> 3) == 0x1E) return 4;
  return 1;  // stray continuation byte: treat as its own token
}

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
         c == '\v';
}

}  // namespace

std::vector<std::string> split_tokens(std::string_view text,
                                      TokenizerMode mode) {
  std::vector<std::string> out;
  if (mode == TokenizerMode::kChar) {
    std::size_t i = 0;
    while (i < text.size()) {
      std::size_t n = std::min(utf8_length(static_cast<unsigned char>(text[i])),
                               text.size() - i);
      out.emplace_back(text.substr(i, n));
      i += n;
    }
    return out;
  }
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

Vocab::Vocab(TokenizerMode mode, std::vector<std::string> tokens)
    : mode_(mode), tokens_(std::move(tokens)) {
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!ids_.emplace(tokens_[i], static_cast<TokenId>(i)).second) {
      throw Error(ErrorCode::kConfig, "duplicate vocab token '" + tokens_[i] + "'");
    }
  }
  if (tokens_.size() < 3 || tokens_[kBos] != "<bos>" ||
      tokens_[kEos] != "<eos>" || tokens_[kUnk] != "<unk>") {
    throw Error(ErrorCode::kConfig, "vocab must start with <bos>, <eos>, <unk>");
  }
}

TokenId Vocab::lookup(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnk : it->second;
}

Vocab build_vocab(const Corpus& corpus, TokenizerMode mode,
                  std::size_t max_size) {
  if (corpus.empty()) throw Error(ErrorCode::kEmptyCorpus, "cannot build vocab");
  std::map<std::string, std::size_t> freq;
  for (const auto& s : corpus) {
    for (auto& tok : split_tokens(s.text, mode)) ++freq[std::move(tok)];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(),
                                                          freq.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  std::vector<std::string> tokens = {"<bos>", "<eos>", "<unk>"};
  for (const auto& [tok, count] : ranked) {
    if (tokens.size() - 3 >= max_size) break;
    if (tok == "<bos>" || tok == "<eos>" || tok == "<unk>") continue;
    tokens.push_back(tok);
  }
  return Vocab(mode, std::move(tokens));
}

TokenSeq encode(const Vocab& vocab, std::string_view text, std::size_t max_len) {
  TokenSeq ids;
  ids.push_back(Vocab::kBos);
  for (const auto& tok : split_tokens(text, vocab.mode())) {
    ids.push_back(vocab.lookup(tok));
  }
  ids.push_back(Vocab::kEos);
  if (ids.size() > max_len) ids.resize(max_len);
  return ids;
}

std::string decode(const Vocab& vocab, const TokenSeq& ids) {
  std::string out;
  bool first = true;
  for (TokenId id : ids) {
    if (id == Vocab::kBos || id == Vocab::kEos) continue;
    if (vocab.mode() == TokenizerMode::kWhitespace && !first) out += ' ';
    out += vocab.token(id);
    first = false;
  }
  return out;
}

std::vector<TokenSeq> encode_corpus(const Vocab& vocab, const Corpus& corpus,
                                    std::size_t max_len) {
  std::vector<TokenSeq> out;
  out.reserve(corpus.size());
  for (const auto& s : corpus) out.push_back(encode(vocab, s.text, max_len));
  return out;
}

TokenizerMode parse_tokenizer_mode(std::string_view name) {
  if (name == "char") return TokenizerMode::kChar;
  if (name == "whitespace") return TokenizerMode::kWhitespace;
  throw Error(ErrorCode::kConfig, "unknown tokenizer mode '" + std::string(name) + "'");
}

std::string_view tokenizer_mode_name(TokenizerMode mode) {
  return mode == TokenizerMode::kChar ? "char" : "whitespace";
}

}  // namespace privleak
