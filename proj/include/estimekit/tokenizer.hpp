#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <unicode/normalizer2.h>
#include <unicode/locid.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

namespace estimekit {

using TokenId = std::int32_t;

/// Tokenized text with special-token flags. Position 0 is CLS, the last
/// position is SEP; everything in between is a regular token.
struct TokenSequence {
    std::vector<TokenId> token_ids;
    std::vector<std::string> token_strings;
    std::vector<bool> special_mask;

    std::size_t size() const { return token_ids.size(); }

    std::vector<std::size_t> regular_positions() const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < special_mask.size(); ++i)
            if (!special_mask[i]) out.push_back(i);
        return out;
    }

    std::vector<TokenId> regular_ids() const {
        std::vector<TokenId> out;
        for (std::size_t i = 0; i < token_ids.size(); ++i)
            if (!special_mask[i]) out.push_back(token_ids[i]);
        return out;
    }
};

class Vocab {
  public:
    Vocab() = default;

    static Vocab load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open vocabulary: " + path.string());
        Vocab v;
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            v.add(line);
        }
        if (v.size() == 0) throw std::runtime_error("empty vocabulary: " + path.string());
        return v;
    }

    static Vocab from_tokens(const std::vector<std::string>& tokens) {
        Vocab v;
        for (const auto& t : tokens) v.add(t);
        return v;
    }

    std::size_t size() const { return tokens_.size(); }
    const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
    const std::vector<std::string>& tokens() const { return tokens_; }

    std::optional<TokenId> find(std::string_view piece) const {
        auto it = index_.find(std::string(piece));
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    TokenId require(std::string_view piece) const {
        auto id = find(piece);
        if (!id) throw std::runtime_error("vocabulary lacks required token " + std::string(piece));
        return *id;
    }

    bool operator==(const Vocab& o) const { return tokens_ == o.tokens_; }

  private:
    void add(const std::string& t) {
        // First occurrence wins, matching the reference loader.
        index_.emplace(t, static_cast<TokenId>(tokens_.size()));
        tokens_.push_back(t);
    }

    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> index_;
};

/// Uncased BERT tokenization: text cleanup, CJK isolation, lowercasing with
/// accent stripping, punctuation splitting, then greedy longest-match
/// WordPiece with "##" continuation pieces.
class WordPieceTokenizer {
  public:
    static constexpr std::size_t kMaxCharsPerWord = 100;
    static constexpr std::string_view kVersion = "wordpiece-uncased-1";

    explicit WordPieceTokenizer(Vocab vocab, bool lowercase = true)
        : vocab_(std::move(vocab)), lowercase_(lowercase) {
        unk_ = vocab_.require("[UNK]");
        cls_ = vocab_.require("[CLS]");
        sep_ = vocab_.require("[SEP]");
        mask_ = vocab_.require("[MASK]");
    }

    const Vocab& vocab() const { return vocab_; }
    TokenId cls_id() const { return cls_; }
    TokenId sep_id() const { return sep_; }
    TokenId mask_id() const { return mask_; }
    TokenId unk_id() const { return unk_; }

    /// Words after basic (pre-WordPiece) tokenization.
    std::vector<std::string> basic_tokenize(std::string_view text) const {
        icu::UnicodeString cleaned;
        const icu::UnicodeString src = icu::UnicodeString::fromUTF8(
            icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
        for (int32_t i = 0; i < src.length();) {
            const UChar32 c = src.char32At(i);
            i += U16_LENGTH(c);
            if (c == 0 || c == 0xFFFD || is_control(c)) continue;
            if (is_whitespace(c)) {
                cleaned.append(static_cast<UChar32>(' '));
            } else if (is_cjk(c)) {
                cleaned.append(static_cast<UChar32>(' ')).append(c).append(static_cast<UChar32>(' '));
            } else {
                cleaned.append(c);
            }
        }

        std::vector<std::string> out;
        icu::UnicodeString word;
        auto flush_word = [&] {
            if (word.isEmpty()) return;
            icu::UnicodeString w = word;
            word.remove();
            if (lowercase_) {
                w.toLower(icu::Locale::getRoot());
                w = strip_accents(w);
            }
            split_punctuation(w, out);
        };
        for (int32_t i = 0; i < cleaned.length();) {
            const UChar32 c = cleaned.char32At(i);
            i += U16_LENGTH(c);
            if (c == ' ') flush_word();
            else word.append(c);
        }
        flush_word();
        return out;
    }

    /// WordPiece pieces of one basic token; a word that cannot be fully covered
    /// (or is longer than kMaxCharsPerWord code points) becomes a single [UNK].
    void wordpiece(const std::string& word, std::vector<TokenId>& ids, std::vector<std::string>& pieces) const {
        const icu::UnicodeString u = icu::UnicodeString::fromUTF8(word);
        const int32_t n_chars = u.countChar32();
        if (static_cast<std::size_t>(n_chars) > kMaxCharsPerWord) {
            ids.push_back(unk_);
            pieces.push_back("[UNK]");
            return;
        }
        std::vector<int32_t> offsets;  // UTF-16 offsets of code point starts
        for (int32_t i = 0; i < u.length(); i = u.moveIndex32(i, 1)) offsets.push_back(i);
        offsets.push_back(u.length());

        std::vector<TokenId> word_ids;
        std::vector<std::string> word_pieces;
        std::size_t start = 0;
        while (start + 1 < offsets.size()) {
            std::size_t end = offsets.size() - 1;
            std::optional<TokenId> hit;
            std::string hit_piece;
            while (end > start) {
                std::string piece;
                u.tempSubStringBetween(offsets[start], offsets[end]).toUTF8String(piece);
                if (start > 0) piece = "##" + piece;
                if (auto id = vocab_.find(piece)) {
                    hit = id;
                    hit_piece = std::move(piece);
                    break;
                }
                --end;
            }
            if (!hit) {
                ids.push_back(unk_);
                pieces.push_back("[UNK]");
                return;
            }
            word_ids.push_back(*hit);
            word_pieces.push_back(std::move(hit_piece));
            start = end;
        }
        ids.insert(ids.end(), word_ids.begin(), word_ids.end());
        pieces.insert(pieces.end(), word_pieces.begin(), word_pieces.end());
    }

    TokenSequence tokenize(std::string_view text) const {
        if (text.find_first_not_of(" \t\r\n\f\v") == std::string_view::npos)
            throw std::invalid_argument("tokenize: empty text");
        TokenSequence seq;
        seq.token_ids.push_back(cls_);
        seq.token_strings.emplace_back("[CLS]");
        for (const auto& w : basic_tokenize(text)) wordpiece(w, seq.token_ids, seq.token_strings);
        if (seq.token_ids.size() == 1) throw std::invalid_argument("tokenize: text has no tokens");
        seq.token_ids.push_back(sep_);
        seq.token_strings.emplace_back("[SEP]");
        seq.special_mask.assign(seq.token_ids.size(), false);
        seq.special_mask.front() = true;
        seq.special_mask.back() = true;
        return seq;
    }

  private:
    static bool is_whitespace(UChar32 c) {
        if (c == ' ' || c == '\t' || c == '\n' || c == '\r') return true;
        return u_charType(c) == U_SPACE_SEPARATOR;
    }

    static bool is_control(UChar32 c) {
        if (c == '\t' || c == '\n' || c == '\r') return false;
        const auto t = u_charType(c);
        return t == U_CONTROL_CHAR || t == U_FORMAT_CHAR;
    }

    static bool is_punctuation(UChar32 c) {
        if ((c >= 33 && c <= 47) || (c >= 58 && c <= 64) || (c >= 91 && c <= 96) || (c >= 123 && c <= 126))
            return true;
        return U_GET_GC_MASK(c) & U_GC_P_MASK;
    }

    static bool is_cjk(UChar32 c) {
        return (c >= 0x4E00 && c <= 0x9FFF) || (c >= 0x3400 && c <= 0x4DBF) || (c >= 0x20000 && c <= 0x2A6DF) ||
               (c >= 0x2A700 && c <= 0x2B73F) || (c >= 0x2B740 && c <= 0x2B81F) ||
               (c >= 0x2B820 && c <= 0x2CEAF) || (c >= 0xF900 && c <= 0xFAFF) || (c >= 0x2F800 && c <= 0x2FA1F);
    }

    static icu::UnicodeString strip_accents(const icu::UnicodeString& s) {
        UErrorCode status = U_ZERO_ERROR;
        const icu::Normalizer2* nfd = icu::Normalizer2::getNFDInstance(status);
        if (U_FAILURE(status)) throw std::runtime_error("ICU NFD normalizer unavailable");
        icu::UnicodeString decomposed = nfd->normalize(s, status);
        if (U_FAILURE(status)) throw std::runtime_error("ICU NFD normalization failed");
        icu::UnicodeString out;
        for (int32_t i = 0; i < decomposed.length();) {
            const UChar32 c = decomposed.char32At(i);
            i += U16_LENGTH(c);
            if (u_charType(c) != U_NON_SPACING_MARK) out.append(c);
        }
        return out;
    }

    static void split_punctuation(const icu::UnicodeString& w, std::vector<std::string>& out) {
        icu::UnicodeString cur;
        auto emit = [&](const icu::UnicodeString& s) {
            std::string utf8;
            s.toUTF8String(utf8);
            out.push_back(std::move(utf8));
        };
        for (int32_t i = 0; i < w.length();) {
            const UChar32 c = w.char32At(i);
            i += U16_LENGTH(c);
            if (is_punctuation(c)) {
                if (!cur.isEmpty()) {
                    emit(cur);
                    cur.remove();
                }
                emit(icu::UnicodeString(c));
            } else {
                cur.append(c);
            }
        }
        if (!cur.isEmpty()) emit(cur);
    }

    Vocab vocab_;
    bool lowercase_;
    TokenId unk_ = 0, cls_ = 0, sep_ = 0, mask_ = 0;
};

} // namespace estimekit
