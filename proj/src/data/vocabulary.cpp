#include "cage/data/vocabulary.hpp"

#include <stdexcept>

#include "cage/error.hpp"

namespace cage::data {

Vocabulary::Vocabulary(std::vector<std::string> tokens) {
    for (const auto& t : tokens) {
        if (find(t)) throw std::invalid_argument("duplicate vocabulary token '" + t + "'");
        add(t);
    }
    freeze();
}

std::size_t Vocabulary::add(std::string_view raw) {
    if (auto hit = find(raw)) return *hit;
    if (frozen_) throw std::logic_error("vocabulary is frozen; cannot add '" + std::string(raw) + "'");
    const std::size_t idx = tokens_.size();
    tokens_.emplace_back(raw);
    lookup_.emplace(tokens_.back(), idx);
    return idx;
}

std::optional<std::size_t> Vocabulary::find(std::string_view raw) const {
    const auto it = lookup_.find(std::string(raw));
    if (it == lookup_.end()) return std::nullopt;
    return it->second;
}

std::size_t Vocabulary::index(std::string_view raw) const {
    if (auto hit = find(raw)) return *hit;
    throw IndexError("unknown id '" + std::string(raw) + "'");
}

const std::string& Vocabulary::raw(std::size_t index) const {
    if (index >= tokens_.size()) {
        throw IndexError("vocabulary index " + std::to_string(index) + " out of range");
    }
    return tokens_[index];
}

}  // namespace cage::data
