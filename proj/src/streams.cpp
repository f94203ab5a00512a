#include "avconsist/streams.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>

#include "avconsist/errors.hpp"
#include "json.hpp"

static_assert(std::endian::native == std::endian::little,
              "stream payloads are little-endian; big-endian hosts are unsupported");

namespace avc {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Modality m) {
  switch (m) {
    case Modality::identity: return "identity";
    case Modality::visual: return "visual";
    case Modality::audio: return "audio";
    case Modality::landmarks3d: return "landmarks3d";
  }
  throw ConfigError("unknown modality enum value");
}

Modality modality_from_string(const std::string& s) {
  if (s == "identity") return Modality::identity;
  if (s == "visual") return Modality::visual;
  if (s == "audio") return Modality::audio;
  if (s == "landmarks3d") return Modality::landmarks3d;
  throw ConfigError("unknown modality: " + s);
}

void FrameFeatureSequence::validate() const {
  if (frames.rows() < 1 || frames.cols() < 1)
    throw DataError("feature sequence must have F >= 1 and d >= 1");
  if (!(frame_rate_hz > 0.0))
    throw DataError("frame_rate_hz must be positive");
  for (Eigen::Index r = 0; r < frames.rows(); ++r)
    for (Eigen::Index c = 0; c < frames.cols(); ++c)
      if (!std::isfinite(frames(r, c)))
        throw DataError("non-finite value at frame " + std::to_string(r) +
                        ", component " + std::to_string(c));
}

void WindowSpec::validate() const {
  if (window_len_frames < 1) throw ConfigError("window_len_frames must be >= 1");
  if (stride_frames < 1) throw ConfigError("stride_frames must be >= 1");
}

void WindowSeries::validate() const {
  if (embeddings.rows() < 1) throw DataError("window series must contain at least one window");
  if (embeddings.rows() != static_cast<Eigen::Index>(spans.size()))
    throw DataError("window series spans/embeddings size mismatch");
  for (Eigen::Index r = 0; r < embeddings.rows(); ++r)
    if (std::abs(embeddings.row(r).norm() - 1.0) > 1e-6)
      throw DataError("window embedding " + std::to_string(r) + " is not unit-norm");
  for (size_t i = 1; i < spans.size(); ++i)
    if (spans[i].start <= spans[i - 1].start)
      throw DataError("window spans must be increasing in start_frame");
}

std::vector<WindowBlock> partition_windows(const FrameFeatureSequence& seq,
                                           const WindowSpec& spec) {
  spec.validate();
  const long F = seq.num_frames();
  const long win = spec.window_len_frames;
  const long stride = spec.stride_frames;
  const long span_frames = std::max(F - win + stride, stride);
  const long n = (span_frames + stride - 1) / stride;

  std::vector<WindowBlock> out;
  out.reserve(n);
  for (long k = 0; k < n; ++k) {
    const long start = k * stride;
    WindowBlock block;
    block.frames.resize(win, seq.dim());
    for (long j = 0; j < win; ++j) {
      const long idx = std::min(start + j, F - 1);
      block.frames.row(j) = seq.frames.row(idx).cast<double>();
    }
    block.span = FrameSpan{start, std::min(start + win, F)};
    out.push_back(std::move(block));
  }
  return out;
}

WindowBlock extract_time_window(const FrameFeatureSequence& seq, double t0_s, double t1_s) {
  if (!(t1_s > t0_s)) throw DataError("time window must have positive length");
  const long F = seq.num_frames();
  const long start = std::lround(t0_s * seq.frame_rate_hz);
  const long count = std::max<long>(1, std::lround((t1_s - t0_s) * seq.frame_rate_hz));
  WindowBlock block;
  block.frames.resize(count, seq.dim());
  for (long j = 0; j < count; ++j) {
    const long idx = std::clamp<long>(start + j, 0, F - 1);
    block.frames.row(j) = seq.frames.row(idx).cast<double>();
  }
  block.span = FrameSpan{std::clamp<long>(start, 0, F - 1), std::min(start + count, F)};
  return block;
}

namespace {

std::string sanitize(const std::string& s) {
  std::string out;
  for (char c : s) out.push_back(std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
  return out.empty() ? std::string("x") : out;
}

}  // namespace

FrameFeatureSequence load_stream(const fs::path& manifest_path) {
  if (!fs::exists(manifest_path))
    throw ConfigError("manifest not found: " + manifest_path.string());
  std::ifstream mf(manifest_path);
  json j;
  try {
    mf >> j;
  } catch (const json::exception& e) {
    throw ConfigError("manifest parse error in " + manifest_path.string() + ": " + e.what());
  }

  if (!j.contains("version") || j["version"].get<int>() != 1)
    throw ConfigError("manifest version mismatch in " + manifest_path.string() +
                      " (expected 1)");
  if (j.value("byte_order", "") != "little")
    throw ConfigError("manifest byte_order must be \"little\" in " + manifest_path.string());

  FrameFeatureSequence seq;
  seq.modality = modality_from_string(j.at("modality").get<std::string>());
  seq.frame_rate_hz = j.at("frame_rate_hz").get<double>();
  seq.identity_label = j.at("identity").get<std::string>();
  seq.source_label = j.at("source").get<std::string>();
  const long dim = j.at("dim").get<long>();
  const long num_frames = j.at("num_frames").get<long>();
  if (dim < 1 || num_frames < 1)
    throw ConfigError("manifest dim/num_frames must be positive in " + manifest_path.string());

  const fs::path data_path =
      manifest_path.parent_path() / j.at("data_file").get<std::string>();
  if (!fs::exists(data_path))
    throw ConfigError("payload not found: " + data_path.string());

  const uintmax_t expected = static_cast<uintmax_t>(num_frames) * dim * sizeof(float);
  const uintmax_t actual = fs::file_size(data_path);
  if (actual != expected)
    throw ConfigError("payload size mismatch in " + data_path.string() + ": expected " +
                      std::to_string(expected) + " bytes (" + std::to_string(num_frames) +
                      "x" + std::to_string(dim) + " float32), got " + std::to_string(actual));

  seq.frames.resize(num_frames, dim);
  {
    std::ifstream df(data_path, std::ios::binary);
    std::vector<float> row(dim);
    for (long r = 0; r < num_frames; ++r) {
      df.read(reinterpret_cast<char*>(row.data()), dim * sizeof(float));
      if (!df) throw ConfigError("short read from " + data_path.string());
      for (long c = 0; c < dim; ++c) {
        if (!std::isfinite(row[c]))
          throw ConfigError("non-finite value in " + data_path.string() + " at frame " +
                            std::to_string(r) + ", component " + std::to_string(c));
        seq.frames(r, c) = row[c];
      }
    }
  }

  if (!(seq.frame_rate_hz > 0.0))
    throw ConfigError("frame_rate_hz must be positive in " + manifest_path.string());
  return seq;
}

fs::path save_stream(const FrameFeatureSequence& seq, const fs::path& dir) {
  seq.validate();
  fs::create_directories(dir);
  const std::string base = sanitize(seq.identity_label) + "__" + sanitize(seq.source_label) +
                           "__" + to_string(seq.modality);
  const fs::path data_path = dir / (base + ".f32");
  const fs::path manifest_path = dir / (base + ".manifest.json");

  {
    std::ofstream df(data_path, std::ios::binary | std::ios::trunc);
    std::vector<float> row(seq.dim());
    for (int r = 0; r < seq.num_frames(); ++r) {
      for (int c = 0; c < seq.dim(); ++c) row[c] = seq.frames(r, c);
      df.write(reinterpret_cast<const char*>(row.data()), seq.dim() * sizeof(float));
    }
    if (!df) throw ConfigError("failed to write " + data_path.string());
  }

  json j;
  j["version"] = 1;
  j["modality"] = to_string(seq.modality);
  j["dim"] = seq.dim();
  j["frame_rate_hz"] = seq.frame_rate_hz;
  j["num_frames"] = seq.num_frames();
  j["identity"] = seq.identity_label;
  j["source"] = seq.source_label;
  j["data_file"] = data_path.filename().string();
  j["byte_order"] = "little";
  {
    std::ofstream mf(manifest_path, std::ios::trunc);
    mf << j.dump(2) << "\n";
    if (!mf) throw ConfigError("failed to write " + manifest_path.string());
  }
  return manifest_path;
}

}  // namespace avc
