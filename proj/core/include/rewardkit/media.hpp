#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rewardkit/core_model.hpp"
#include "rewardkit/log.hpp"

namespace rewardkit {

struct VideoInfo {
  std::string video_ref;
  double duration_s = 0.0;
  double fps = 0.0;
  std::int64_t frame_count = 0;

  bool operator==(const VideoInfo&) const = default;
};

struct FrameSample {
  std::string video_ref;
  std::vector<std::filesystem::path> frame_refs;
  std::vector<double> timestamps_s;
  bool includes_final_frame = false;
};

struct ClipVariant {
  std::string parent_episode_id;
  double fraction = 0.0;
  double end_time_s = 0.0;
  std::string clip_video_ref;
  int proposed_score = 0;
  std::int64_t frame_count = 0;
};

// One rung of a clip ladder: either a produced clip or the error that stopped it.
struct ClipOutcome {
  double fraction = 0.0;
  int proposed_score = 0;
  std::optional<ClipVariant> variant;
  std::string error;
};

struct ClipLadderSpec {
  std::vector<double> fractions{0.25, 0.50, 0.75};
  std::vector<int> proposed_scores{2, 3, 4};

  // Throws Error(kConfig) unless fractions lie in (0,1) and both lists are
  // the same length and strictly increasing, with scores in 1..4.
  void check() const;
};

// Frame indices for timestamps 0, 1/rate, 2/rate, ... plus the final frame;
// thinned uniformly to max_frames keeping first and last. Throws
// Error(kConfig) when max_frames < 2 or rate_hz <= 0.
std::vector<std::int64_t> sample_frame_indices(const VideoInfo& info, double rate_hz, int max_frames);

// Frames kept by a cut at `fraction`: floor(fraction * frame_count). Throws
// Error(kMedia) "clip too short" when that is zero.
std::int64_t clip_frame_count(std::int64_t frame_count, double fraction);

struct EncoderConfig {
  std::string program = "ffmpeg";
  std::vector<std::string> clip_codec_args{"-c:v", "libx264", "-preset", "veryfast",
                                           "-crf",  "18",      "-pix_fmt", "yuv420p"};
  std::string clip_container = "matroska";
  int jpeg_qscale = 3;
};

// Video operations backed by an external encoder subprocess. Outputs follow
// <work_root>/frames/<id>/t<seconds>.img and <work_root>/clips/<id>/f<percent>.vid.
class MediaOps {
 public:
  explicit MediaOps(EncoderConfig config = {}, Logger& logger = null_logger())
      : config_(std::move(config)), logger_(logger) {}

  // Throws Error(kMedia) carrying the encoder diagnostic on unreadable input.
  VideoInfo probe(const std::string& video_ref) const;

  FrameSample sample_frames(const std::string& video_ref, double rate_hz, int max_frames,
                            const std::filesystem::path& out_dir) const;

  // Frame-accurate cut keeping frames [0, clip_frame_count). Re-uses an
  // existing output whose frame count already matches.
  ClipVariant clip(const std::string& video_ref, double fraction,
                   const std::filesystem::path& out_path) const;

  // Requires an original (non-augmented) score-5 episode. Failures are recorded per rung and do
  // not stop the remaining rungs.
  std::vector<ClipOutcome> make_clip_ladder(const Episode& episode,
                                            const std::filesystem::path& work_root,
                                            const ClipLadderSpec& spec = {}) const;

  static std::filesystem::path frames_dir(const std::filesystem::path& work_root,
                                          const std::string& episode_id);
  static std::filesystem::path clip_path(const std::filesystem::path& work_root,
                                         const std::string& episode_id, double fraction);

  const EncoderConfig& config() const { return config_; }

 private:
  EncoderConfig config_;
  Logger& logger_;
};

}  // namespace rewardkit
