#pragma once

#include <string>
#include <unordered_set>
#include <vector>

#include "dust/error.hpp"

namespace dust {

// Character vocabulary for CTC. Index 0 is always the blank; real symbols
// occupy indices 1..symbols.size(). The word separator is an ordinary
// symbol and must be present in `symbols`.
class Alphabet {
public:
    Alphabet() = default;
    Alphabet(std::string symbols, char separator)
        : symbols_(std::move(symbols)), separator_(separator) {
        std::unordered_set<char> seen;
        for (char c : symbols_)
            require(seen.insert(c).second, "Alphabet: duplicate symbol");
        require(symbols_.find(separator_) != std::string::npos,
                "Alphabet: separator not among symbols");
    }

    // Total output dimension including blank.
    std::size_t vocab_size() const { return symbols_.size() + 1; }
    static constexpr int blank_index = 0;

    const std::string& symbols() const { return symbols_; }
    char separator() const { return separator_; }
    int separator_index() const { return index_of(separator_); }

    char char_at(int index) const {
        require(index >= 1 && index <= static_cast<int>(symbols_.size()),
                "Alphabet: symbol index out of range");
        return symbols_[static_cast<std::size_t>(index - 1)];
    }

    int index_of(char c) const {
        auto pos = symbols_.find(c);
        require(pos != std::string::npos,
                std::string("Alphabet: unknown character '") + c + "'");
        return static_cast<int>(pos) + 1;
    }

    std::vector<int> encode(const std::string& text) const {
        std::vector<int> out;
        out.reserve(text.size());
        for (char c : text) out.push_back(index_of(c));
        return out;
    }

    std::string decode(const std::vector<int>& tokens) const {
        std::string out;
        out.reserve(tokens.size());
        for (int t : tokens) out.push_back(char_at(t));
        return out;
    }

    bool operator==(const Alphabet& o) const {
        return symbols_ == o.symbols_ && separator_ == o.separator_;
    }

private:
    std::string symbols_;
    char separator_ = '_';
};

} // namespace dust
