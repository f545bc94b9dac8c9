#pragma once

#include <filesystem>
#include <list>
#include <map>
#include <string>
#include <vector>

#include <opencv2/core.hpp>

#include "tatrack/core/box.hpp"

namespace tatrack::data {

/// Aligned visible / thermal frames, both 8-bit 3-channel (BGR order as read).
struct FramePair {
  cv::Mat rgb;
  cv::Mat tir;
};

/// Attribute tag covering frames [start, end).
struct AttributeSpan {
  std::string code;
  int start = 0;
  int end = 0;

  bool contains(int frame) const { return frame >= start && frame < end; }
};

/// The 19 attribute codes of the LasHeR benchmark.
const std::vector<std::string>& attribute_codes();

/// On-disk layout: `visible/`, `infrared/`, `groundtruth.txt` ("x,y,w,h" per
/// line, pixels, top-left origin) and an optional `attributes.txt` with lines
/// "<CODE> <start> <end>".
struct Sequence {
  std::string name;
  std::filesystem::path dir;
  std::vector<std::filesystem::path> rgb_files;
  std::vector<std::filesystem::path> tir_files;
  std::vector<ImageBox> groundtruth;
  std::vector<AttributeSpan> attributes;

  int size() const { return static_cast<int>(groundtruth.size()); }
  /// Reads frame `i` from disk; LoadError when a file cannot be decoded.
  FramePair frame(int i) const;
  bool has_attribute(int frame, const std::string& code) const;
};

/// Bounded least-recently-used store of decoded frames, keyed by sequence
/// directory and index. Not thread-safe.
class FrameCache {
 public:
  explicit FrameCache(size_t capacity_frames = 4096) : capacity_(capacity_frames) {}
  const FramePair& get(const Sequence& seq, int i);
  size_t size() const { return entries_.size(); }

 private:
  using Key = std::pair<std::string, int>;
  size_t capacity_;
  std::list<std::pair<Key, FramePair>> lru_;
  std::map<Key, std::list<std::pair<Key, FramePair>>::iterator> entries_;
};

/// Loads the metadata of one sequence directory. Frames are paired by sorted
/// filename. Count mismatches and malformed lines throw LoadError naming the
/// offending file or line.
Sequence load_sequence(const std::filesystem::path& dir);

/// All sequence directories under `root` (sorted by name).
std::vector<Sequence> load_dataset(const std::filesystem::path& root);

/// "x,y,w,h" per line. Also accepts whitespace or tab separators.
std::vector<ImageBox> read_boxes(const std::filesystem::path& file);
void write_boxes(const std::filesystem::path& file, const std::vector<ImageBox>& boxes);

std::vector<AttributeSpan> read_attributes(const std::filesystem::path& file);
void write_attributes(const std::filesystem::path& file, const std::vector<AttributeSpan>& spans);

/// Writes a complete sequence (PNG frames, ground truth, attributes).
void write_sequence(const std::filesystem::path& dir, const std::vector<FramePair>& frames,
                    const std::vector<ImageBox>& groundtruth, const std::vector<AttributeSpan>& spans);

}  // namespace tatrack::data
