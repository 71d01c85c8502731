#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace privleak {

/// Half-open byte range [begin, end) into a sample's text.
struct ByteRange {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool operator==(const ByteRange&) const = default;
};

struct PiiSpan {
  ByteRange span;        // the full match
  ByteRange group_span;  // the capture group that identifies the minority
  std::string full_value;
  std::string group_value;

  bool operator==(const PiiSpan&) const = default;
};

struct Sample {
  std::string id;
  std::string text;
  std::optional<PiiSpan> pii;

  bool operator==(const Sample&) const = default;
};

/// Ordered collection of samples with unique ids.
class Corpus {
 public:
  Corpus() = default;
  explicit Corpus(std::vector<Sample> samples);  // throws E_DUP_ID

  const std::vector<Sample>& samples() const { return samples_; }
  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }
  const Sample& operator[](std::size_t i) const { return samples_[i]; }

  bool contains(std::string_view id) const;
  const Sample& at(std::string_view id) const;

  /// Samples with the given ids, in the order of `ids`.
  Corpus subset(const std::vector<std::string>& ids) const;

  std::size_t pii_count() const;

  auto begin() const { return samples_.begin(); }
  auto end() const { return samples_.end(); }

  bool operator==(const Corpus& other) const { return samples_ == other.samples_; }

 private:
  std::vector<Sample> samples_;
  std::unordered_map<std::string, std::size_t> index_;
};

class PiiPattern {
 public:
  /// Compiles `match_pattern` (ECMAScript syntax); `group` selects the
  /// capture group holding the group value. Throws E_BAD_PATTERN.
  PiiPattern(std::string name, std::string match_pattern, std::size_t group);

  /// phone_us, email_domain or year. Throws E_BAD_PATTERN for other names.
  static PiiPattern builtin(std::string_view name);

  const std::string& name() const { return name_; }
  const std::string& match_pattern() const { return pattern_; }
  std::size_t group() const { return group_; }

  /// Leftmost match in `text`, if any.
  std::optional<PiiSpan> find(std::string_view text) const;

 private:
  std::string name_;
  std::string pattern_;
  std::size_t group_;
  std::regex regex_;
};

struct PiiHistogram {
  std::map<std::string, std::size_t> counts;
  std::size_t total = 0;
};

Corpus load_corpus(const std::filesystem::path& path);
Corpus parse_corpus_jsonl(std::string_view contents);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);

Corpus annotate_pii(const Corpus& corpus, const PiiPattern& pattern);

PiiHistogram build_histogram(const Corpus& corpus);

/// Rarest group; ties go to the lexicographically smallest value.
std::string least_frequent(const PiiHistogram& hist);

std::string histogram_to_json(const PiiHistogram& hist);

// ---------------------------------------------------------------------------
// Tokenization

enum class TokenizerMode { kChar, kWhitespace };

using TokenId = std::uint32_t;
using TokenSeq = std::vector<TokenId>;

class Vocab {
 public:
  static constexpr TokenId kBos = 0;
  static constexpr TokenId kEos = 1;
  static constexpr TokenId kUnk = 2;

  Vocab(TokenizerMode mode, std::vector<std::string> tokens);

  TokenizerMode mode() const { return mode_; }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::string& token(TokenId id) const { return tokens_.at(id); }

  /// Id of `token`, or kUnk.
  TokenId lookup(std::string_view token) const;

 private:
  TokenizerMode mode_;
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
};

/// Splits text into tokens: UTF-8 code points (char) or whitespace-separated
/// words.
std::vector<std::string> split_tokens(std::string_view text, TokenizerMode mode);

Vocab build_vocab(const Corpus& corpus, TokenizerMode mode,
                  std::size_t max_size);

/// <bos> + ids + <eos>, truncated to max_len.
TokenSeq encode(const Vocab& vocab, std::string_view text, std::size_t max_len);

/// Inverse of encode for in-vocabulary content; specials are dropped.
std::string decode(const Vocab& vocab, const TokenSeq& ids);

std::vector<TokenSeq> encode_corpus(const Vocab& vocab, const Corpus& corpus,
                                    std::size_t max_len);

TokenizerMode parse_tokenizer_mode(std::string_view name);
std::string_view tokenizer_mode_name(TokenizerMode mode);

}  // namespace privleak
