#pragma once

#include <string>
#include <vector>

namespace mmp::model {

// Fixed word list shared by prompt templates and object descriptions.
// Reserved ids: 0 <pad>, 1 <unk>, 2 <img> (image-slot marker).
class Vocabulary {
public:
  static Vocabulary standard();
  static Vocabulary from_words(std::vector<std::string> words);

  int size() const { return static_cast<int>(words_.size()); }
  int pad_id() const { return 0; }
  int unk_id() const { return 1; }
  int img_id() const { return 2; }

  // Unknown words map to <unk>.
  int id(const std::string& word) const;
  int require(const std::string& word) const;
  const std::string& word(int id) const;
  const std::vector<std::string>& words() const { return words_; }

  // Splits on single spaces; unknown words become <unk>.
  std::vector<int> encode(const std::string& text) const;
  std::string decode(const std::vector<int>& ids) const;

  bool operator==(const Vocabulary& o) const { return words_ == o.words_; }

private:
  std::vector<std::string> words_;
};

const std::string& shape_word(int shape_id);
const std::string& texture_word(int texture_id);

// "the {texture} {shape}" (with_article) or "{texture} {shape}".
std::string object_description(int shape_id, int texture_id, bool with_article);

}  // namespace mmp::model
