#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace cage::data {

// Raw id <-> contiguous index, assigned in first-seen order.
class Vocabulary {
public:
    Vocabulary() = default;
    explicit Vocabulary(std::vector<std::string> tokens);

    // Returns the existing index or assigns the next one. Throws std::logic_error
    // once frozen and the token is new.
    std::size_t add(std::string_view raw);
    std::optional<std::size_t> find(std::string_view raw) const;
    // Throws IndexError for an unknown token.
    std::size_t index(std::string_view raw) const;
    const std::string& raw(std::size_t index) const;

    std::size_t size() const noexcept { return tokens_.size(); }
    const std::vector<std::string>& tokens() const noexcept { return tokens_; }

    void freeze() noexcept { frozen_ = true; }
    bool frozen() const noexcept { return frozen_; }

    friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, std::size_t> lookup_;
    bool frozen_ = false;
};

}  // namespace cage::data
