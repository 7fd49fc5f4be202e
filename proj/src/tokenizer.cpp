#include "met/tokenizer.hpp"

#include <clocale>
#include <cstdint>
#include <cwctype>
#include <locale.h>

namespace met {

namespace {

// Character classes come from the C library's UTF-8 locale when it exists;
// otherwise only ASCII letters and digits count as token characters.
class CharClass {
  public:
    CharClass() : loc_(newlocale(LC_CTYPE_MASK, "C.UTF-8", static_cast<locale_t>(nullptr))) {}
    ~CharClass()
    {
        if (loc_) {
            freelocale(loc_);
        }
    }
    CharClass(const CharClass&) = delete;
    CharClass& operator=(const CharClass&) = delete;

    bool alnum(char32_t c) const
    {
        if (c < 0x80) {
            return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
        }
        return loc_ && iswalnum_l(static_cast<wint_t>(c), loc_);
    }

    char32_t lower(char32_t c) const
    {
        if (c < 0x80) {
            return (c >= 'A' && c <= 'Z') ? c + 32 : c;
        }
        return loc_ ? static_cast<char32_t>(towlower_l(static_cast<wint_t>(c), loc_)) : c;
    }

  private:
    locale_t loc_;
};

const CharClass& char_class()
{
    static const CharClass cc;
    return cc;
}

constexpr char32_t kInvalid = 0xFFFFFFFF;

char32_t decode(std::string_view s, std::size_t& i)
{
    auto b0 = static_cast<unsigned char>(s[i]);
    if (b0 < 0x80) {
        ++i;
        return b0;
    }
    int len = 0;
    char32_t cp = 0;
    if ((b0 & 0xE0) == 0xC0) {
        len = 2;
        cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
        len = 3;
        cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
        len = 4;
        cp = b0 & 0x07;
    } else {
        ++i;
        return kInvalid;
    }
    if (i + len > s.size()) {
        ++i;
        return kInvalid;
    }
    for (int k = 1; k < len; ++k) {
        auto b = static_cast<unsigned char>(s[i + k]);
        if ((b & 0xC0) != 0x80) {
            ++i;
            return kInvalid;
        }
        cp = (cp << 6) | (b & 0x3F);
    }
    i += len;
    return cp;
}

void encode(char32_t cp, std::string& out)
{
    if (cp < 0x80) {
        out += static_cast<char>(cp);
    } else if (cp < 0x800) {
        out += static_cast<char>(0xC0 | (cp >> 6));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else if (cp < 0x10000) {
        out += static_cast<char>(0xE0 | (cp >> 12));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else {
        out += static_cast<char>(0xF0 | (cp >> 18));
        out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    }
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text)
{
    const auto& cc = char_class();
    std::vector<std::string> tokens;
    std::string current;
    std::size_t i = 0;
    while (i < text.size()) {
        char32_t cp = decode(text, i);
        if (cp != kInvalid && cc.alnum(cp)) {
            encode(cc.lower(cp), current);
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) {
        tokens.push_back(std::move(current));
    }
    return tokens;
}

}  // namespace met
