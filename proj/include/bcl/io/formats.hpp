#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "bcl/numerics/matrix.hpp"
#include "bcl/types.hpp"

// Text formats shared by the generator, the trainer and the CLI. Readers
// report failures as FormatError with "<path>:<line>" context.
namespace bcl::io {

// Catalog: JSON-lines, one song per line with song_id, attrs, audio, lyric
// and optional genre.
void write_catalog(std::ostream& out, const std::vector<SongContent>& songs);
std::vector<SongContent> read_catalog(std::istream& in, const std::string& source = "<catalog>");
std::vector<SongContent> load_catalog(const std::filesystem::path& path);

// Events: TSV user_id, song_id, timestamp, behavior (play|red_heart|songmark).
void write_events(std::ostream& out, const std::vector<BehaviorEvent>& events);
std::vector<BehaviorEvent> read_events(std::istream& in, const std::string& source = "<events>");
std::vector<BehaviorEvent> load_events(const std::filesystem::path& path);
const char* behavior_name(Behavior b) noexcept;

// Pairs: TSV song_i, song_j, score.
void write_pairs(std::ostream& out, const std::vector<ScoredPair>& pairs);
std::vector<ScoredPair> read_pairs(std::istream& in, const std::string& source = "<pairs>");
std::vector<ScoredPair> load_pairs(const std::filesystem::path& path);

// User embeddings: TSV user_id, e_1 .. e_n.
struct UserEmbeddings {
  std::vector<UserId> ids;
  Matrix values;  // one row per id
  std::map<UserId, std::size_t> row_of;
};
void write_user_embeddings(std::ostream& out, const UserEmbeddings& users);
UserEmbeddings read_user_embeddings(std::istream& in, const std::string& source = "<users>");
UserEmbeddings load_user_embeddings(const std::filesystem::path& path);

// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

std::ifstream open_input(const std::filesystem::path& path);
std::ofstream open_output(const std::filesystem::path& path);

}  // namespace bcl::io
