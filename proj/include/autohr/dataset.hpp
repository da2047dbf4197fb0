#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "autohr/errors.hpp"
#include "autohr/png_io.hpp"
#include "autohr/rng.hpp"
#include "autohr/signal.hpp"
#include "autohr/tensor.hpp"

namespace autohr {

// A video on disk is a directory of numbered PNG frames plus a key=value
// `meta` file (fps, hr, subject, frames, height, width) and, when a reference
// pulse exists, a ppg.txt in the signal text format. A dataset is a manifest
// CSV naming those directories.

struct ClipMeta {
  double fps = 0.0;
  double hr = 0.0;
  std::string subject;
  int frames = 0, height = 0, width = 0;
};

struct ManifestRow {
  std::string id;
  std::string subject;
  double hr = 0.0;
  double fps = 0.0;
  int frames = 0;
  std::string path;
};

inline std::string frame_file_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%06d.png", index);
  return buf;
}

// In-memory video: quantized frames exactly as stored, ((t*h + y)*w + x)*3 + c.
struct LoadedClip {
  ClipMeta meta;
  std::vector<uint8_t> frames;
  std::vector<double> ppg;  // empty when the directory has no reference pulse

  bool has_ppg() const { return !ppg.empty(); }
};

inline void save_clip_dir(const std::string& dir, const LoadedClip& clip) {
  const auto& m = clip.meta;
  if (m.frames < 1 || m.height < 1 || m.width < 1 || m.fps <= 0.0) {
    throw ValueError("save clip: bad metadata");
  }
  if (clip.frames.size() != size_t(m.frames) * m.height * m.width * 3) {
    throw ValueError("save clip: frame buffer does not match metadata");
  }
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create clip directory " + dir);
  const size_t frame_bytes = size_t(m.height) * m.width * 3;
  std::vector<uint8_t> one(frame_bytes);
  for (int t = 0; t < m.frames; ++t) {
    std::copy_n(clip.frames.data() + size_t(t) * frame_bytes, frame_bytes, one.data());
    write_png_rgb8(dir + "/" + frame_file_name(t), one, m.width, m.height);
  }
  std::ofstream meta(dir + "/meta", std::ios::trunc);
  if (!meta) throw IoError("cannot write meta in " + dir);
  meta << "fps=" << format_double(m.fps) << "\n";
  meta << "hr=" << format_double(m.hr) << "\n";
  meta << "subject=" << m.subject << "\n";
  meta << "frames=" << m.frames << "\n";
  meta << "height=" << m.height << "\n";
  meta << "width=" << m.width << "\n";
  if (clip.has_ppg()) {
    save_signal(dir + "/ppg.txt", PulseSignal{clip.ppg, m.fps});
  }
}

inline LoadedClip load_clip_dir(const std::string& dir) {
  std::ifstream meta(dir + "/meta");
  if (!meta) throw IoError("no meta file in clip directory " + dir);
  LoadedClip out;
  std::string line;
  std::map<std::string, std::string> kv;
  while (std::getline(meta, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw IoError("malformed meta line '" + line + "' in " + dir);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  for (const char* key : {"fps", "hr", "subject", "frames", "height", "width"}) {
    if (!kv.count(key)) throw IoError(std::string("meta missing '") + key + "' in " + dir);
  }
  out.meta.fps = parse_double(kv["fps"], "meta fps");
  out.meta.hr = parse_double(kv["hr"], "meta hr");
  out.meta.subject = kv["subject"];
  out.meta.frames = int(parse_double(kv["frames"], "meta frames"));
  out.meta.height = int(parse_double(kv["height"], "meta height"));
  out.meta.width = int(parse_double(kv["width"], "meta width"));
  if (out.meta.frames < 1) throw IoError("meta frames must be positive in " + dir);

  const size_t frame_bytes = size_t(out.meta.height) * out.meta.width * 3;
  out.frames.resize(size_t(out.meta.frames) * frame_bytes);
  for (int t = 0; t < out.meta.frames; ++t) {
    int w = 0, h = 0;
    const auto rgb = read_png_rgb8(dir + "/" + frame_file_name(t), &w, &h);
    if (w != out.meta.width || h != out.meta.height) {
      throw IoError("frame " + std::to_string(t) + " is " + std::to_string(w) + "x" +
                    std::to_string(h) + ", meta says otherwise, in " + dir);
    }
    std::copy(rgb.begin(), rgb.end(), out.frames.begin() + size_t(t) * frame_bytes);
  }
  if (std::filesystem::exists(dir + "/ppg.txt")) {
    PulseSignal ps = load_signal(dir + "/ppg.txt");
    out.ppg = ps.samples;
  }
  return out;
}

// Channel-planar double tensor in [0,1], shape (1, 3, t, h, w).
inline Tensor clip_to_tensor(const LoadedClip& clip) {
  const int t = clip.meta.frames, h = clip.meta.height, w = clip.meta.width;
  Tensor x(1, 3, t, h, w);
  for (int ti = 0; ti < t; ++ti)
    for (int y = 0; y < h; ++y)
      for (int xi = 0; xi < w; ++xi) {
        const size_t base = ((size_t(ti) * h + y) * w + xi) * 3;
        for (int c = 0; c < 3; ++c) {
          x.at(0, c, ti, y, xi) = double(clip.frames[base + size_t(c)]) / 255.0;
        }
      }
  return x;
}

// Copies frames [t0, t0+len) of a planar video tensor (1,3,T,h,w) into one
// sample slot of a batch tensor (n,3,len,h,w).
inline void window_into_batch(const Tensor& video, int t0, Tensor* batch, int sample) {
  const int len = batch->dim(2);
  if (t0 < 0 || t0 + len > video.dim(2)) throw ValueError("window out of video range");
  if (video.dim(3) != batch->dim(3) || video.dim(4) != batch->dim(4)) {
    throw ShapeError("window: spatial size mismatch");
  }
  const size_t plane = size_t(video.dim(3)) * video.dim(4);
  for (int c = 0; c < 3; ++c)
    for (int t = 0; t < len; ++t) {
      const double* src = video.data() + ((size_t(c)) * video.dim(2) + t0 + t) * plane;
      double* dst =
          batch->data() + ((size_t(sample) * 3 + c) * size_t(len) + t) * plane;
      std::copy(src, src + plane, dst);
    }
}

inline VideoClip tensor_to_clip(const Tensor& x, double fps) {
  if (x.dim(0) != 1) throw ShapeError("tensor_to_clip: expected a single sample");
  VideoClip clip(x.dim(1), x.dim(2), x.dim(3), x.dim(4), fps);
  std::copy(x.data(), x.data() + x.size(), clip.v.data());
  return clip;
}

inline void write_manifest(const std::string& path, const std::vector<ManifestRow>& rows) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write manifest " + path);
  f << "id,subject,hr,fps,frames,path\n";
  for (const auto& r : rows) {
    f << r.id << "," << r.subject << "," << format_double(r.hr) << "," << format_double(r.fps)
      << "," << r.frames << "," << r.path << "\n";
  }
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

inline std::vector<ManifestRow> read_manifest_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open manifest " + path);
  std::string line;
  if (!std::getline(f, line)) throw IoError("empty manifest " + path);
  std::vector<ManifestRow> rows;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const auto cols = split_csv_line(line);
    if (cols.size() != 6) throw IoError("manifest row needs 6 columns: '" + line + "'");
    ManifestRow r;
    r.id = cols[0];
    r.subject = cols[1];
    r.hr = parse_double(cols[2], "manifest hr");
    r.fps = parse_double(cols[3], "manifest fps");
    r.frames = int(parse_double(cols[4], "manifest frames"));
    r.path = cols[5];
    rows.push_back(std::move(r));
  }
  return rows;
}

// Subjects in order of first appearance, so fold assignment does not depend
// on row sorting quirks.
// Manifest paths are stored relative to the manifest's directory; absolute
// paths pass through.
inline std::string clip_path(const std::string& data_dir, const ManifestRow& row) {
  const std::filesystem::path p(row.path);
  if (p.is_absolute()) return row.path;
  return (std::filesystem::path(data_dir) / p).string();
}

inline std::vector<std::string> subjects_in_order(const std::vector<ManifestRow>& rows) {
  std::vector<std::string> subjects;
  for (const auto& r : rows) {
    if (std::find(subjects.begin(), subjects.end(), r.subject) == subjects.end()) {
      subjects.push_back(r.subject);
    }
  }
  return subjects;
}

struct FoldSplit {
  std::vector<size_t> train_rows, test_rows;
  std::vector<std::string> test_subjects;
};

// Subject-independent folds: shuffle the subject list once with the seed,
// deal subjects round-robin into k groups, take group `fold_index` as the
// held-out side.
inline FoldSplit make_fold(const std::vector<ManifestRow>& rows, int k, int fold_index,
                           uint64_t seed) {
  if (k < 2) throw ValueError("folds: k must be at least 2");
  if (fold_index < 0 || fold_index >= k) throw ValueError("folds: fold index out of range");
  std::vector<std::string> subjects = subjects_in_order(rows);
  if (int(subjects.size()) < k) {
    throw ValueError("folds: need at least " + std::to_string(k) + " subjects, have " +
                     std::to_string(subjects.size()));
  }
  Rng rng = Rng::stream(seed, 0x666f6c64 /* folds */);
  rng.shuffle(subjects);
  FoldSplit split;
  for (size_t i = 0; i < subjects.size(); ++i) {
    if (int(i) % k == fold_index) split.test_subjects.push_back(subjects[i]);
  }
  auto is_test = [&](const std::string& s) {
    return std::find(split.test_subjects.begin(), split.test_subjects.end(), s) !=
           split.test_subjects.end();
  };
  for (size_t i = 0; i < rows.size(); ++i) {
    (is_test(rows[i].subject) ? split.test_rows : split.train_rows).push_back(i);
  }
  return split;
}

}  // namespace autohr
