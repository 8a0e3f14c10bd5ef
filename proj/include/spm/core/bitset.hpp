#pragma once

#include <bit>
#include <compare>
#include <cstdint>
#include <string>
#include <vector>

namespace spm {

// Small ordered set of ids in [0, 64) stored as a bitmask. The tag keeps
// agent sets and item sets from being mixed up.
template <typename Tag>
class IdSet {
 public:
  constexpr IdSet() = default;
  constexpr explicit IdSet(std::uint64_t bits) : bits_(bits) {}

  static constexpr IdSet full(int count) {
    return IdSet(count >= 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << count) - 1);
  }
  static constexpr IdSet single(int id) { return IdSet(std::uint64_t{1} << id); }
  static IdSet of(const std::vector<int>& ids) {
    IdSet s;
    for (int id : ids) s.insert(id);
    return s;
  }

  constexpr bool contains(int id) const { return id >= 0 && id < 64 && ((bits_ >> id) & 1U); }
  constexpr void insert(int id) { bits_ |= std::uint64_t{1} << id; }
  constexpr void erase(int id) { bits_ &= ~(std::uint64_t{1} << id); }
  constexpr int size() const { return std::popcount(bits_); }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr std::uint64_t bits() const { return bits_; }
  constexpr int lowest() const { return bits_ == 0 ? -1 : std::countr_zero(bits_); }

  constexpr IdSet operator|(IdSet o) const { return IdSet(bits_ | o.bits_); }
  constexpr IdSet operator&(IdSet o) const { return IdSet(bits_ & o.bits_); }
  constexpr IdSet without(IdSet o) const { return IdSet(bits_ & ~o.bits_); }
  constexpr bool subset_of(IdSet o) const { return (bits_ & ~o.bits_) == 0; }
  constexpr bool disjoint(IdSet o) const { return (bits_ & o.bits_) == 0; }
  constexpr bool operator==(const IdSet&) const = default;

  std::vector<int> ids() const {
    std::vector<int> out;
    for (std::uint64_t b = bits_; b != 0; b &= b - 1) out.push_back(std::countr_zero(b));
    return out;
  }

  // Iteration over member ids in increasing order.
  class iterator {
   public:
    constexpr explicit iterator(std::uint64_t b) : b_(b) {}
    constexpr int operator*() const { return std::countr_zero(b_); }
    constexpr iterator& operator++() {
      b_ &= b_ - 1;
      return *this;
    }
    constexpr bool operator==(const iterator&) const = default;

   private:
    std::uint64_t b_;
  };
  constexpr iterator begin() const { return iterator(bits_); }
  constexpr iterator end() const { return iterator(0); }

  std::string to_string() const {
    std::string s = "{";
    bool first = true;
    for (int id : *this) {
      if (!first) s += ',';
      s += std::to_string(id);
      first = false;
    }
    return s + "}";
  }

 private:
  std::uint64_t bits_ = 0;
};

struct AgentTag {};
struct ItemTag {};
using AgentSet = IdSet<AgentTag>;
using ItemSet = IdSet<ItemTag>;

// Lexicographic order on the sorted id sequences; the empty set is smallest.
template <typename Tag>
bool lex_less(IdSet<Tag> a, IdSet<Tag> b) {
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia != *ib) return *ia < *ib;
    ++ia;
    ++ib;
  }
  return ia == a.end() && ib != b.end();
}

}  // namespace spm
