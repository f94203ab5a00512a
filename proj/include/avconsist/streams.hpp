#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <string>
#include <vector>

namespace avc {

enum class Modality { identity, visual, audio, landmarks3d };

std::string to_string(Modality m);
Modality modality_from_string(const std::string& s);

// Per-frame feature matrix for one modality of one video source.
// Storage is float32 (matching the on-disk payload); math downstream is double.
struct FrameFeatureSequence {
  Modality modality = Modality::identity;
  double frame_rate_hz = 25.0;
  Eigen::MatrixXf frames;  // F x d, row = frame
  std::string identity_label;
  std::string source_label;

  int num_frames() const { return static_cast<int>(frames.rows()); }
  int dim() const { return static_cast<int>(frames.cols()); }

  // throws DataError on empty/non-finite frames or non-positive rate
  void validate() const;
};

struct WindowSpec {
  int window_len_frames = 5;
  int stride_frames = 5;
  // pad policy is repeat_last (the only supported policy)

  void validate() const;
};

// half-open [start, end) in frame indices; end is clamped to the stream
// length, so padded windows report only the frames they actually cover
struct FrameSpan {
  long start = 0;
  long end = 0;
};

// One window worth of frames lifted to double for computation.
struct WindowBlock {
  Eigen::MatrixXd frames;  // window_len x d (padded by repeating the last frame)
  FrameSpan span;
};

// Unit-norm window embeddings with their time spans.
struct WindowSeries {
  Eigen::MatrixXd embeddings;  // W x d, rows unit-norm
  std::vector<FrameSpan> spans;
  Modality modality = Modality::identity;

  int num_windows() const { return static_cast<int>(embeddings.rows()); }
  void validate() const;
};

// Number of windows: ceil(max(F - window_len + stride, stride) / stride),
// so every frame is covered and short inputs yield one fully padded window.
std::vector<WindowBlock> partition_windows(const FrameFeatureSequence& seq,
                                           const WindowSpec& spec);

// Frames of `seq` covering the time span [t0_s, t1_s) seconds, sampled at the
// sequence's own frame rate, repeat-last padded past the end of the stream.
WindowBlock extract_time_window(const FrameFeatureSequence& seq, double t0_s, double t1_s);

// Manifest is UTF-8 JSON {version, modality, dim, frame_rate_hz, num_frames,
// identity, source, data_file, byte_order}; payload is row-major float32,
// little-endian. byte_order must read "little".
FrameFeatureSequence load_stream(const std::filesystem::path& manifest_path);

// Returns the manifest path. load_stream(save_stream(seq)) is bit-exact.
std::filesystem::path save_stream(const FrameFeatureSequence& seq,
                                  const std::filesystem::path& dir);

}  // namespace avc
