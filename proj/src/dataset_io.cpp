#include "mdpo/dataset_io.hpp"

#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include <json.hpp>

namespace mdpo {

using nlohmann::ordered_json;

DatasetError::DatasetError(const std::filesystem::path& path, std::size_t line, const std::string& what)
    : std::invalid_argument(path.string() + (line > 0 ? ":" + std::to_string(line) : std::string()) + ": " + what),
      line_(line) {}

namespace {

std::ifstream open_for_read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw DatasetError(path, 0, "cannot open file");
  }
  return in;
}

/// Calls `fn(json, line_no)` for every non-blank line, wrapping any failure in
/// a DatasetError that names the line.
void for_each_line(const std::filesystem::path& path, const std::function<void(const ordered_json&, std::size_t)>& fn) {
  auto in = open_for_read(path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    try {
      fn(ordered_json::parse(line), line_no);
    } catch (const DatasetError&) {
      throw;
    } catch (const std::exception& e) {
      throw DatasetError(path, line_no, e.what());
    }
  }
}

std::string require_string(const ordered_json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_string()) {
    throw std::invalid_argument(std::string("missing string field \"") + key + "\"");
  }
  return j[key].get<std::string>();
}

}  // namespace

DatasetKind detect_dataset_kind(const std::filesystem::path& path) {
  auto in = open_for_read(path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const std::exception& e) {
      throw DatasetError(path, line_no, e.what());
    }
    if (j.contains("responses")) {
      return DatasetKind::kRanked;
    }
    if (j.contains("chosen") && j.contains("rejected")) {
      return DatasetKind::kPairs;
    }
    throw DatasetError(path, line_no, "neither a preference pair nor a ranked example");
  }
  throw DatasetError(path, 0, "empty dataset");
}

Vocabulary read_vocabulary(const std::filesystem::path& path) {
  auto in = open_for_read(path);
  try {
    const auto j = ordered_json::parse(in);
    return Vocabulary(j.at("vocab").get<std::vector<std::string>>());
  } catch (const ordered_json::exception& e) {
    throw DatasetError(path, 0, e.what());
  } catch (const DatasetError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw DatasetError(path, 0, e.what());
  }
}

void write_vocabulary(const std::filesystem::path& path, const Vocabulary& vocab) {
  write_text_file(path, ordered_json{{"vocab", vocab.user_words()}}.dump() + "\n");
}

Vocabulary vocabulary_from_dataset_file(const std::filesystem::path& path) {
  std::set<std::string> words;
  const auto add = [&](const std::string& text) {
    for (auto& w : split_whitespace(text)) {
      words.insert(std::move(w));
    }
  };
  for_each_line(path, [&](const ordered_json& j, std::size_t) {
    add(require_string(j, "prompt"));
    if (j.contains("responses")) {
      for (const auto& r : j.at("responses")) {
        add(r.get<std::string>());
      }
    } else {
      add(require_string(j, "chosen"));
      add(require_string(j, "rejected"));
    }
  });
  words.erase(std::string(Vocabulary::kEos));
  words.insert(std::string(Vocabulary::kUnk));
  return Vocabulary(std::vector<std::string>(words.begin(), words.end()));
}

Vocabulary vocabulary_from_pairs_file(const std::filesystem::path& path) { return vocabulary_from_dataset_file(path); }

std::vector<PreferencePair> read_pairs(const std::filesystem::path& path, const Vocabulary& vocab) {
  std::vector<PreferencePair> out;
  for_each_line(path, [&](const ordered_json& j, std::size_t line_no) {
    if (j.contains("responses")) {
      throw DatasetError(path, line_no, "expected a preference pair but found a ranked example");
    }
    Prompt prompt(require_string(j, "id"), vocab.encode(require_string(j, "prompt"), true));
    out.emplace_back(std::move(prompt), Response(vocab.encode(require_string(j, "chosen"), true), ResponseSource::kSeedChosen, 0),
                     Response(vocab.encode(require_string(j, "rejected"), true), ResponseSource::kSeedRejected, 1));
  });
  return out;
}

void write_pairs(const std::filesystem::path& path, const std::vector<PreferencePair>& pairs, const Vocabulary& vocab) {
  std::ostringstream os;
  for (const auto& p : pairs) {
    ordered_json j;
    j["id"] = p.prompt.id();
    j["prompt"] = vocab.decode(p.prompt.tokens());
    j["chosen"] = vocab.decode(p.chosen.tokens());
    j["rejected"] = vocab.decode(p.rejected.tokens());
    os << j.dump() << '\n';
  }
  write_text_file(path, os.str());
}

std::vector<RankedExample> read_ranked(const std::filesystem::path& path, const Vocabulary& vocab) {
  std::vector<RankedExample> out;
  for_each_line(path, [&](const ordered_json& j, std::size_t line_no) {
    if (!j.contains("responses")) {
      throw DatasetError(path, line_no, "expected a ranked example (\"responses\" array)");
    }
    const auto texts = j.at("responses").get<std::vector<std::string>>();
    const auto rewards = j.at("rewards").get<std::vector<double>>();
    std::vector<std::string> sources(texts.size(), std::string(to_string(ResponseSource::kPolicy)));
    std::vector<std::uint32_t> gen_index(texts.size());
    for (std::size_t i = 0; i < gen_index.size(); ++i) {
      gen_index[i] = static_cast<std::uint32_t>(i);
    }
    if (j.contains("sources")) {
      sources = j["sources"].get<std::vector<std::string>>();
    }
    if (j.contains("gen_index")) {
      gen_index = j["gen_index"].get<std::vector<std::uint32_t>>();
    }
    if (sources.size() != texts.size() || gen_index.size() != texts.size()) {
      throw DatasetError(path, line_no, "responses, sources and gen_index differ in length");
    }
    std::vector<Response> responses;
    for (std::size_t i = 0; i < texts.size(); ++i) {
      responses.emplace_back(vocab.encode(texts[i], true), parse_response_source(sources[i]), gen_index[i]);
    }
    out.emplace_back(Prompt(require_string(j, "id"), vocab.encode(require_string(j, "prompt"), true)),
                     std::move(responses), rewards);
  });
  return out;
}

std::string ranked_to_jsonl(const std::vector<RankedExample>& examples, const Vocabulary& vocab) {
  std::ostringstream os;
  for (const auto& ex : examples) {
    ordered_json line;
    line["id"] = ex.prompt().id();
    line["prompt"] = vocab.decode(ex.prompt().tokens());
    auto responses = ordered_json::array();
    auto sources = ordered_json::array();
    auto gen_index = ordered_json::array();
    for (const auto& r : ex.responses()) {
      responses.push_back(vocab.decode(r.tokens()));
      sources.push_back(std::string(to_string(r.source())));
      gen_index.push_back(r.gen_index());
    }
    line["responses"] = std::move(responses);
    line["rewards"] = ex.rewards();
    line["sources"] = std::move(sources);
    line["gen_index"] = std::move(gen_index);
    os << line.dump() << '\n';
  }
  return os.str();
}

void write_ranked(const std::filesystem::path& path, const std::vector<RankedExample>& examples,
                  const Vocabulary& vocab) {
  write_text_file(path, ranked_to_jsonl(examples, vocab));
}

std::vector<Prompt> read_prompts(const std::filesystem::path& path, const Vocabulary& vocab) {
  std::vector<Prompt> out;
  for_each_line(path, [&](const ordered_json& j, std::size_t) {
    out.emplace_back(require_string(j, "id"), vocab.encode(require_string(j, "prompt"), true));
  });
  return out;
}

void write_prompts(const std::filesystem::path& path, const std::vector<Prompt>& prompts, const Vocabulary& vocab) {
  std::ostringstream os;
  for (const auto& p : prompts) {
    ordered_json j;
    j["id"] = p.id();
    j["prompt"] = vocab.decode(p.tokens());
    os << j.dump() << '\n';
  }
  write_text_file(path, os.str());
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw std::runtime_error("cannot write " + path.string());
  }
  out << content;
  if (!out) {
    throw std::runtime_error("write failed for " + path.string());
  }
}

}  // namespace mdpo
