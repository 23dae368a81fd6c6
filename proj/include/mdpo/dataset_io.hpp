#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "mdpo/core.hpp"

namespace mdpo {

/// Malformed or mis-shaped dataset line. `line` is 1-based; 0 means the file
/// as a whole.
class DatasetError : public std::invalid_argument {
 public:
  DatasetError(const std::filesystem::path& path, std::size_t line, const std::string& what);
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

enum class DatasetKind { kPairs, kRanked };

/// Looks at the first non-empty line: "chosen"/"rejected" keys mean pairs,
/// a "responses" array means ranked.
DatasetKind detect_dataset_kind(const std::filesystem::path& path);

/// {"vocab": [...]} as written by the pipeline.
Vocabulary read_vocabulary(const std::filesystem::path& path);
void write_vocabulary(const std::filesystem::path& path, const Vocabulary& vocab);

/// Sorted unique whitespace tokens over prompt, chosen and rejected texts, plus
/// "<unk>".
Vocabulary vocabulary_from_pairs_file(const std::filesystem::path& path);
/// Same for either dataset kind; ranked files contribute their responses.
Vocabulary vocabulary_from_dataset_file(const std::filesystem::path& path);

// {"id", "prompt", "chosen", "rejected"} per line.
std::vector<PreferencePair> read_pairs(const std::filesystem::path& path, const Vocabulary& vocab);
void write_pairs(const std::filesystem::path& path, const std::vector<PreferencePair>& pairs, const Vocabulary& vocab);

// {"id", "prompt", "responses", "rewards", "sources", "gen_index"} per line,
// responses in rank order.
std::vector<RankedExample> read_ranked(const std::filesystem::path& path, const Vocabulary& vocab);
std::string ranked_to_jsonl(const std::vector<RankedExample>& examples, const Vocabulary& vocab);
void write_ranked(const std::filesystem::path& path, const std::vector<RankedExample>& examples,
                  const Vocabulary& vocab);

/// Any JSONL file whose lines carry "id" and "prompt".
std::vector<Prompt> read_prompts(const std::filesystem::path& path, const Vocabulary& vocab);
void write_prompts(const std::filesystem::path& path, const std::vector<Prompt>& prompts, const Vocabulary& vocab);

/// Writes `content` to `path`, replacing any existing file.
void write_text_file(const std::filesystem::path& path, const std::string& content);

}  // namespace mdpo
