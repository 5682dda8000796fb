#pragma once

#include <string>
#include <vector>

#include "vldac/errors.hpp"

namespace vldac {

enum class EnvKind { hallway_nav, rooms_nav, card_points, tiny_shop };

const char* env_kind_name(EnvKind k);
EnvKind env_kind_from_name(const std::string& name);  // throws SpecError

// Token table for one environment family. Ids are dense [0, size); the four
// specials sit at fixed ids shared by every vocabulary.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kSep = 3;

  static Vocabulary for_kind(EnvKind kind);

  int size() const { return static_cast<int>(tokens_.size()); }
  int id(const std::string& token) const;          // throws VocabError
  const std::string& name(int id) const;           // throws VocabError
  bool contains(const std::string& token) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  explicit Vocabulary(std::vector<std::string> tokens);  // validates uniqueness + specials
  Vocabulary() = default;

  bool operator==(const Vocabulary&) const = default;

 private:
  std::vector<std::string> tokens_;
};

}  // namespace vldac
