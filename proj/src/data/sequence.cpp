#include "tatrack/data/sequence.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <opencv2/imgcodecs.hpp>

#include "tatrack/core/error.hpp"

namespace tatrack::data {

namespace fs = std::filesystem;

namespace {

std::vector<fs::path> sorted_images(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw LoadError("missing frame directory " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

cv::Mat read_image(const fs::path& p) {
  cv::Mat img = cv::imread(p.string(), cv::IMREAD_COLOR);
  if (img.empty()) throw LoadError("cannot decode image " + p.string());
  return img;
}

}  // namespace

const std::vector<std::string>& attribute_codes() {
  static const std::vector<std::string> codes{"NO", "PO",  "TO", "HO", "MB",  "LI", "HI",
                                              "AIV", "LR", "DEF", "BC", "SA", "CM", "TC",
                                              "FL", "OV", "FM", "SV", "ARC"};
  return codes;
}

FramePair Sequence::frame(int i) const {
  if (i < 0 || i >= size()) throw InputError("frame index " + std::to_string(i) + " out of range");
  return {read_image(rgb_files[static_cast<size_t>(i)]), read_image(tir_files[static_cast<size_t>(i)])};
}

const FramePair& FrameCache::get(const Sequence& seq, int i) {
  Key key{seq.dir.string(), i};
  if (auto it = entries_.find(key); it != entries_.end()) {
    lru_.splice(lru_.begin(), lru_, it->second);
    return it->second->second;
  }
  lru_.emplace_front(key, seq.frame(i));
  entries_[key] = lru_.begin();
  while (entries_.size() > std::max<size_t>(capacity_, 1)) {
    entries_.erase(lru_.back().first);
    lru_.pop_back();
  }
  return lru_.front().second;
}

bool Sequence::has_attribute(int frame, const std::string& code) const {
  return std::any_of(attributes.begin(), attributes.end(),
                     [&](const AttributeSpan& s) { return s.code == code && s.contains(frame); });
}

std::vector<ImageBox> read_boxes(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw LoadError("cannot open " + file.string());
  std::vector<ImageBox> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::replace(line.begin(), line.end(), '\t', ' ');
    std::istringstream ls(line);
    ImageBox b;
    std::string extra;
    if (!(ls >> b.x >> b.y >> b.w >> b.h) || (ls >> extra)) {
      throw LoadError(file.string() + ":" + std::to_string(lineno) + ": expected x,y,w,h");
    }
    out.push_back(b);
  }
  return out;
}

void write_boxes(const fs::path& file, const std::vector<ImageBox>& boxes) {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw InputError("cannot write " + file.string());
  // Shortest round-trip representation, so reading back is exact.
  auto put = [&out](double v) {
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof(buf), v);
    out.write(buf, r.ptr - buf);
  };
  for (const auto& b : boxes) {
    put(b.x);
    out << ',';
    put(b.y);
    out << ',';
    put(b.w);
    out << ',';
    put(b.h);
    out << '\n';
  }
}

std::vector<AttributeSpan> read_attributes(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw LoadError("cannot open " + file.string());
  const auto& codes = attribute_codes();
  std::vector<AttributeSpan> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    AttributeSpan s;
    if (!(ls >> s.code >> s.start >> s.end) || s.end < s.start || s.start < 0) {
      throw LoadError(file.string() + ":" + std::to_string(lineno) + ": expected '<CODE> <start> <end>'");
    }
    if (std::find(codes.begin(), codes.end(), s.code) == codes.end()) {
      throw LoadError(file.string() + ":" + std::to_string(lineno) + ": unknown attribute " + s.code);
    }
    out.push_back(s);
  }
  return out;
}

void write_attributes(const fs::path& file, const std::vector<AttributeSpan>& spans) {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw InputError("cannot write " + file.string());
  for (const auto& s : spans) out << s.code << " " << s.start << " " << s.end << "\n";
}

Sequence load_sequence(const fs::path& dir) {
  Sequence seq;
  seq.dir = dir;
  seq.name = dir.filename().string();
  if (seq.name.empty()) seq.name = dir.parent_path().filename().string();
  seq.rgb_files = sorted_images(dir / "visible");
  seq.tir_files = sorted_images(dir / "infrared");
  seq.groundtruth = read_boxes(dir / "groundtruth.txt");
  if (fs::exists(dir / "attributes.txt")) seq.attributes = read_attributes(dir / "attributes.txt");

  // Name the first unpaired file when the modalities disagree.
  const size_t n = std::min(seq.rgb_files.size(), seq.tir_files.size());
  for (size_t i = 0; i < n; ++i) {
    if (seq.rgb_files[i].filename() != seq.tir_files[i].filename()) {
      throw LoadError(seq.name + ": visible frame " + seq.rgb_files[i].filename().string() +
                      " has no infrared counterpart (found " + seq.tir_files[i].filename().string() + ")");
    }
  }
  if (seq.rgb_files.size() != seq.tir_files.size()) {
    const bool rgb_longer = seq.rgb_files.size() > seq.tir_files.size();
    const auto& extra = rgb_longer ? seq.rgb_files[n] : seq.tir_files[n];
    throw LoadError(seq.name + ": frame " + extra.filename().string() + " missing in " +
                    (rgb_longer ? "infrared/" : "visible/"));
  }
  if (seq.groundtruth.size() != seq.rgb_files.size()) {
    throw LoadError(seq.name + ": groundtruth.txt has " + std::to_string(seq.groundtruth.size()) +
                    " boxes for " + std::to_string(seq.rgb_files.size()) + " frames");
  }
  for (const auto& s : seq.attributes) {
    if (s.end > seq.size()) throw LoadError(seq.name + ": attribute span " + s.code + " exceeds sequence");
  }
  return seq;
}

std::vector<Sequence> load_dataset(const fs::path& root) {
  if (!fs::is_directory(root)) throw LoadError("dataset root " + root.string() + " is not a directory");
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory() && fs::exists(e.path() / "groundtruth.txt")) dirs.push_back(e.path());
  }
  std::sort(dirs.begin(), dirs.end());
  std::vector<Sequence> out;
  out.reserve(dirs.size());
  for (const auto& d : dirs) out.push_back(load_sequence(d));
  return out;
}

void write_sequence(const fs::path& dir, const std::vector<FramePair>& frames,
                    const std::vector<ImageBox>& groundtruth, const std::vector<AttributeSpan>& spans) {
  if (frames.size() != groundtruth.size()) throw InputError("write_sequence: frame/box count mismatch");
  fs::create_directories(dir / "visible");
  fs::create_directories(dir / "infrared");
  char name[32];
  for (size_t i = 0; i < frames.size(); ++i) {
    std::snprintf(name, sizeof(name), "%06zu.png", i + 1);
    if (!cv::imwrite((dir / "visible" / name).string(), frames[i].rgb) ||
        !cv::imwrite((dir / "infrared" / name).string(), frames[i].tir)) {
      throw InputError("cannot write frame " + std::string(name) + " in " + dir.string());
    }
  }
  write_boxes(dir / "groundtruth.txt", groundtruth);
  write_attributes(dir / "attributes.txt", spans);
}

}  // namespace tatrack::data
