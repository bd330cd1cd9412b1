#include "bcl/io/formats.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "bcl/errors.hpp"
#include "json.hpp"

namespace bcl::io {
namespace {

using nlohmann::json;

[[noreturn]] void bad_line(const std::string& source, std::size_t line, const std::string& msg) {
  throw FormatError(source + ":" + std::to_string(line) + ": " + msg);
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

template <typename T>
T parse_number(std::string_view s, const std::string& source, std::size_t line, const char* what) {
  T v{};
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    bad_line(source, line, std::string("bad ") + what + " '" + std::string(s) + "'");
  }
  return v;
}

bool skip_line(const std::string& line) { return line.empty() || line[0] == '#'; }

std::string_view strip_cr(const std::string& line) {
  std::string_view v(line);
  if (!v.empty() && v.back() == '\r') v.remove_suffix(1);
  return v;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, p);
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  return out;
}

void write_catalog(std::ostream& out, const std::vector<SongContent>& songs) {
  for (const auto& s : songs) {
    json j;
    j["song_id"] = s.song_id;
    j["attrs"] = s.attrs;
    j["audio"] = s.audio;
    j["lyric"] = s.lyric;
    if (s.genre) j["genre"] = *s.genre;
    out << j.dump() << '\n';
  }
}

std::vector<SongContent> read_catalog(std::istream& in, const std::string& source) {
  std::vector<SongContent> songs;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (skip_line(line)) continue;
    try {
      const json j = json::parse(strip_cr(line));
      SongContent s;
      s.song_id = j.at("song_id").get<SongId>();
      s.attrs = j.at("attrs").get<std::vector<std::uint32_t>>();
      s.audio = j.at("audio").get<std::vector<double>>();
      s.lyric = j.at("lyric").get<std::vector<double>>();
      if (j.contains("genre") && !j["genre"].is_null()) s.genre = j["genre"].get<std::uint32_t>();
      songs.push_back(std::move(s));
    } catch (const json::exception& e) {
      bad_line(source, n, e.what());
    }
  }
  return songs;
}

std::vector<SongContent> load_catalog(const std::filesystem::path& path) {
  auto in = open_input(path);
  return read_catalog(in, path.string());
}

const char* behavior_name(Behavior b) noexcept {
  switch (b) {
    case Behavior::play: return "play";
    case Behavior::red_heart: return "red_heart";
    case Behavior::songmark: return "songmark";
  }
  return "unknown";
}

void write_events(std::ostream& out, const std::vector<BehaviorEvent>& events) {
  for (const auto& e : events) {
    out << e.user_id << '\t' << e.song_id << '\t' << e.timestamp << '\t' << behavior_name(e.behavior)
        << '\n';
  }
}

std::vector<BehaviorEvent> read_events(std::istream& in, const std::string& source) {
  std::vector<BehaviorEvent> events;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (skip_line(line)) continue;
    const auto f = split_tabs(strip_cr(line));
    if (f.size() != 4) bad_line(source, n, "expected 4 tab-separated fields");
    BehaviorEvent e;
    e.user_id = parse_number<UserId>(f[0], source, n, "user_id");
    e.song_id = parse_number<SongId>(f[1], source, n, "song_id");
    e.timestamp = parse_number<std::int64_t>(f[2], source, n, "timestamp");
    if (f[3] == "play") {
      e.behavior = Behavior::play;
    } else if (f[3] == "red_heart") {
      e.behavior = Behavior::red_heart;
    } else if (f[3] == "songmark") {
      e.behavior = Behavior::songmark;
    } else {
      bad_line(source, n, "unknown behavior '" + std::string(f[3]) + "'");
    }
    events.push_back(e);
  }
  return events;
}

std::vector<BehaviorEvent> load_events(const std::filesystem::path& path) {
  auto in = open_input(path);
  return read_events(in, path.string());
}

void write_pairs(std::ostream& out, const std::vector<ScoredPair>& pairs) {
  for (const auto& p : pairs)
    out << p.song_i << '\t' << p.song_j << '\t' << format_double(p.score) << '\n';
}

std::vector<ScoredPair> read_pairs(std::istream& in, const std::string& source) {
  std::vector<ScoredPair> pairs;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (skip_line(line)) continue;
    const auto f = split_tabs(strip_cr(line));
    if (f.size() != 3) bad_line(source, n, "expected 3 tab-separated fields");
    ScoredPair p;
    p.song_i = parse_number<SongId>(f[0], source, n, "song_i");
    p.song_j = parse_number<SongId>(f[1], source, n, "song_j");
    p.score = parse_number<double>(f[2], source, n, "score");
    if (p.song_i == p.song_j) bad_line(source, n, "self pair");
    pairs.push_back(p);
  }
  return pairs;
}

std::vector<ScoredPair> load_pairs(const std::filesystem::path& path) {
  auto in = open_input(path);
  return read_pairs(in, path.string());
}

void write_user_embeddings(std::ostream& out, const UserEmbeddings& users) {
  for (std::size_t i = 0; i < users.ids.size(); ++i) {
    out << users.ids[i];
    for (double v : users.values.row(i)) out << '\t' << format_double(v);
    out << '\n';
  }
}

UserEmbeddings read_user_embeddings(std::istream& in, const std::string& source) {
  UserEmbeddings users;
  std::vector<double> flat;
  std::size_t width = 0;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (skip_line(line)) continue;
    const auto f = split_tabs(strip_cr(line));
    if (f.size() < 2) bad_line(source, n, "expected user id and at least one value");
    if (width == 0) width = f.size() - 1;
    if (f.size() - 1 != width) bad_line(source, n, "embedding width differs from first row");
    const UserId id = parse_number<UserId>(f[0], source, n, "user_id");
    if (users.row_of.count(id) != 0) bad_line(source, n, "duplicate user id");
    users.row_of[id] = users.ids.size();
    users.ids.push_back(id);
    for (std::size_t t = 1; t < f.size(); ++t)
      flat.push_back(parse_number<double>(f[t], source, n, "embedding value"));
  }
  users.values = Matrix(users.ids.size(), width, std::move(flat));
  return users;
}

UserEmbeddings load_user_embeddings(const std::filesystem::path& path) {
  auto in = open_input(path);
  return read_user_embeddings(in, path.string());
}

}  // namespace bcl::io
