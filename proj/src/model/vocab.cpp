#include "model/vocab.hpp"

#include <stdexcept>
#include <unordered_map>

namespace mmp::model {

namespace {

const std::vector<std::string> kShapeWords = {"arrow", "ell",   "tee",   "vee", "hook",
                                              "flag",  "wedge", "dagger", "bowl", "tray"};
const std::vector<std::string> kTextureWords = {"red", "green", "blue", "yellow", "purple", "orange", "cyan", "white"};

std::vector<std::string> standard_words() {
  std::vector<std::string> w = {
      "<pad>", "<unk>", "<img>",
      // templates
      "put", "the", "into", ".", ":", "rearrange", "then", "restore", "to", "this", "setup", "twist", "is", "defined",
      "as", "rotating", "object", "a", "specific", "angle", "for", "examples", "from", "now", "all", "objects",
      "follow", "motion", "stack", "in", "order",
  };
  w.insert(w.end(), kShapeWords.begin(), kShapeWords.end());
  w.insert(w.end(), kTextureWords.begin(), kTextureWords.end());
  return w;
}

}  // namespace

Vocabulary Vocabulary::standard() { return from_words(standard_words()); }

Vocabulary Vocabulary::from_words(std::vector<std::string> words) {
  if (words.size() < 3 || words[0] != "<pad>" || words[1] != "<unk>" || words[2] != "<img>")
    throw std::invalid_argument("vocabulary: first three words must be <pad>, <unk>, <img>");
  Vocabulary v;
  v.words_ = std::move(words);
  return v;
}

int Vocabulary::id(const std::string& word) const {
  for (size_t i = 0; i < words_.size(); ++i)
    if (words_[i] == word) return static_cast<int>(i);
  return unk_id();
}

int Vocabulary::require(const std::string& word) const {
  const int i = id(word);
  if (i == unk_id() && word != "<unk>") throw std::out_of_range("vocabulary: unknown word '" + word + "'");
  return i;
}

const std::string& Vocabulary::word(int id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("vocabulary: id out of range");
  return words_[id];
}

std::vector<int> Vocabulary::encode(const std::string& text) const {
  std::vector<int> out;
  size_t start = 0;
  while (start <= text.size()) {
    size_t end = text.find(' ', start);
    if (end == std::string::npos) end = text.size();
    if (end > start) out.push_back(id(text.substr(start, end - start)));
    start = end + 1;
  }
  return out;
}

std::string Vocabulary::decode(const std::vector<int>& ids) const {
  std::string out;
  for (const int i : ids) {
    if (!out.empty()) out += ' ';
    out += word(i);
  }
  return out;
}

const std::string& shape_word(int shape_id) {
  if (shape_id < 0 || shape_id >= static_cast<int>(kShapeWords.size()))
    throw std::out_of_range("shape_word: id out of range");
  return kShapeWords[shape_id];
}

const std::string& texture_word(int texture_id) {
  if (texture_id < 0 || texture_id >= static_cast<int>(kTextureWords.size()))
    throw std::out_of_range("texture_word: id out of range");
  return kTextureWords[texture_id];
}

std::string object_description(int shape_id, int texture_id, bool with_article) {
  std::string d = with_article ? "the " : "";
  d += texture_word(texture_id);
  d += ' ';
  d += shape_word(shape_id);
  return d;
}

}  // namespace mmp::model
