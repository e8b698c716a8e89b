#include "rewardkit/media.hpp"

#include <cmath>
#include <cstdio>
#include <regex>
#include <sstream>

#include "rewardkit/error.hpp"
#include "rewardkit/process.hpp"

namespace rewardkit {

namespace fs = std::filesystem;

namespace {

std::string tail_lines(const std::string& text, std::size_t max_lines) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) lines.push_back(line);
  }
  std::string out;
  const auto start = lines.size() > max_lines ? lines.size() - max_lines : 0;
  for (auto i = start; i < lines.size(); ++i) {
    if (!out.empty()) out += " | ";
    out += lines[i];
  }
  return out;
}

std::string format_seconds(double t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", t);
  return buf;
}

std::string join_args(const std::vector<std::string>& argv) {
  std::string out;
  for (const auto& a : argv) {
    if (!out.empty()) out += ' ';
    out += a;
  }
  return out;
}

bool nonempty_file(const fs::path& p) {
  std::error_code ec;
  return fs::is_regular_file(p, ec) && fs::file_size(p, ec) > 0;
}

}  // namespace

void ClipLadderSpec::check() const {
  if (fractions.empty() || fractions.size() != proposed_scores.size()) {
    throw Error(ErrorKind::kConfig, "clip ladder needs one proposed score per fraction");
  }
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    if (!(fractions[i] > 0.0 && fractions[i] < 1.0)) {
      throw Error(ErrorKind::kConfig, "clip fraction must lie in (0,1)");
    }
    if (proposed_scores[i] < 1 || proposed_scores[i] > 4) {
      throw Error(ErrorKind::kConfig, "clip proposed score must lie in 1..4");
    }
    if (i > 0 && (fractions[i] <= fractions[i - 1] || proposed_scores[i] <= proposed_scores[i - 1])) {
      throw Error(ErrorKind::kConfig, "clip fractions and scores must strictly increase");
    }
  }
}

std::vector<std::int64_t> sample_frame_indices(const VideoInfo& info, double rate_hz, int max_frames) {
  if (max_frames < 2) throw Error(ErrorKind::kConfig, "max_frames must be >= 2");
  if (!(rate_hz > 0.0)) throw Error(ErrorKind::kConfig, "sampling rate must be positive");
  if (info.frame_count < 1 || !(info.fps > 0.0)) {
    throw Error(ErrorKind::kMedia, "video has no frames: " + info.video_ref);
  }
  std::vector<std::int64_t> idx;
  for (std::int64_t k = 0;; ++k) {
    const auto i = static_cast<std::int64_t>(std::floor(static_cast<double>(k) / rate_hz * info.fps + 1e-6));
    if (i >= info.frame_count) break;
    if (idx.empty() || idx.back() != i) idx.push_back(i);
  }
  const auto last = info.frame_count - 1;
  if (idx.back() != last) idx.push_back(last);

  const auto n = idx.size();
  const auto m = static_cast<std::size_t>(max_frames);
  if (n <= m) return idx;
  std::vector<std::int64_t> thinned;
  thinned.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    thinned.push_back(idx[(i * (n - 1) + (m - 1) / 2) / (m - 1)]);
  }
  return thinned;
}

std::int64_t clip_frame_count(std::int64_t frame_count, double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw Error(ErrorKind::kRange, "clip fraction must lie in (0,1)");
  }
  const auto n = static_cast<std::int64_t>(std::floor(fraction * static_cast<double>(frame_count) + 1e-9));
  if (n < 1) throw Error(ErrorKind::kMedia, "clip too short");
  return std::min(n, frame_count - 1 > 0 ? frame_count - 1 : std::int64_t{1});
}

VideoInfo MediaOps::probe(const std::string& video_ref) const {
  const std::vector<std::string> argv = {config_.program, "-nostdin", "-hide_banner", "-nostats",
                                         "-i", video_ref, "-map", "0:v:0", "-f", "null",
                                         "-progress", "pipe:1", "-"};
  auto result = run_process(argv);
  if (result.exit_code != 0) {
    throw Error(ErrorKind::kMedia, "probe failed for " + video_ref + ": " + tail_lines(result.err, 3));
  }
  static const std::regex kFrame(R"((?:^|\n)frame=(\d+))");
  static const std::regex kFps(R"(Stream #0:\d+[^\n]*Video:[^\n]*?(\d+(?:\.\d+)?)(k?) (?:fps|tbr))");
  VideoInfo info;
  info.video_ref = video_ref;
  for (std::sregex_iterator it(result.out.begin(), result.out.end(), kFrame), end; it != end; ++it) {
    info.frame_count = std::stoll((*it)[1].str());
  }
  std::smatch m;
  if (std::regex_search(result.err, m, kFps)) {
    info.fps = std::stod(m[1].str()) * (m[2].matched && m[2].length() > 0 ? 1000.0 : 1.0);
  }
  if (info.frame_count < 1 || !(info.fps > 0.0)) {
    throw Error(ErrorKind::kMedia, "no decodable video frames in " + video_ref + ": " +
                                       tail_lines(result.err, 3));
  }
  info.duration_s = static_cast<double>(info.frame_count) / info.fps;
  return info;
}

fs::path MediaOps::frames_dir(const fs::path& work_root, const std::string& episode_id) {
  return work_root / "frames" / episode_id;
}

fs::path MediaOps::clip_path(const fs::path& work_root, const std::string& episode_id, double fraction) {
  const auto percent = static_cast<int>(std::lround(fraction * 100.0));
  return work_root / "clips" / episode_id / ("f" + std::to_string(percent) + ".vid");
}

FrameSample MediaOps::sample_frames(const std::string& video_ref, double rate_hz, int max_frames,
                                    const fs::path& out_dir) const {
  if (max_frames < 2) throw Error(ErrorKind::kConfig, "max_frames must be >= 2");
  const auto info = probe(video_ref);
  const auto indices = sample_frame_indices(info, rate_hz, max_frames);

  FrameSample sample;
  sample.video_ref = video_ref;
  for (auto i : indices) {
    const double t = static_cast<double>(i) / info.fps;
    sample.timestamps_s.push_back(t);
    sample.frame_refs.push_back(out_dir / ("t" + format_seconds(t) + ".img"));
  }
  sample.includes_final_frame = indices.back() == info.frame_count - 1;

  bool complete = true;
  for (const auto& f : sample.frame_refs) complete = complete && nonempty_file(f);
  if (complete) return sample;

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  const auto staging = out_dir / ".staging";
  fs::remove_all(staging, ec);
  fs::create_directories(staging, ec);
  if (ec) throw Error(ErrorKind::kIo, "cannot create " + staging.string() + ": " + ec.message());

  std::string select = "select='";
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (k > 0) select += '+';
    select += "eq(n\\," + std::to_string(indices[k]) + ")";
  }
  select += "'";
  const std::vector<std::string> argv = {config_.program, "-nostdin", "-hide_banner", "-loglevel", "error",
                                         "-y", "-i", video_ref, "-map", "0:v:0", "-vf", select,
                                         "-fps_mode", "passthrough", "-c:v", "mjpeg",
                                         "-q:v", std::to_string(config_.jpeg_qscale),
                                         "-f", "image2", (staging / "%06d.img").string()};
  logger_.debug("encoder_run", {{"argv", join_args(argv)}});
  auto result = run_process(argv);
  if (result.exit_code != 0) {
    throw Error(ErrorKind::kMedia, "frame extraction failed for " + video_ref + ": " + tail_lines(result.err, 3));
  }
  for (std::size_t k = 0; k < indices.size(); ++k) {
    char name[32];
    std::snprintf(name, sizeof name, "%06zu.img", k + 1);
    const auto produced = staging / name;
    if (!nonempty_file(produced)) {
      throw Error(ErrorKind::kMedia, "encoder produced " + std::to_string(k) + " of " +
                                         std::to_string(indices.size()) + " frames for " + video_ref);
    }
    fs::rename(produced, sample.frame_refs[k], ec);
    if (ec) throw Error(ErrorKind::kIo, "rename frame: " + ec.message());
  }
  fs::remove_all(staging, ec);
  return sample;
}

ClipVariant MediaOps::clip(const std::string& video_ref, double fraction, const fs::path& out_path) const {
  const auto info = probe(video_ref);
  const auto frames = clip_frame_count(info.frame_count, fraction);

  ClipVariant variant;
  variant.fraction = fraction;
  variant.frame_count = frames;
  variant.end_time_s = static_cast<double>(frames) / info.fps;
  variant.clip_video_ref = out_path.string();

  if (nonempty_file(out_path)) {
    try {
      if (probe(out_path.string()).frame_count == frames) return variant;
    } catch (const Error&) {
      // Stale or partial output; fall through and re-cut.
    }
  }

  std::error_code ec;
  fs::create_directories(out_path.parent_path(), ec);
  auto tmp = out_path;
  tmp += ".partial";
  std::vector<std::string> argv = {config_.program, "-nostdin", "-hide_banner", "-loglevel", "error",
                                   "-y", "-i", video_ref, "-map", "0:v:0", "-an",
                                   "-frames:v", std::to_string(frames)};
  argv.insert(argv.end(), config_.clip_codec_args.begin(), config_.clip_codec_args.end());
  argv.insert(argv.end(), {"-f", config_.clip_container, tmp.string()});
  logger_.debug("encoder_run", {{"argv", join_args(argv)}});
  auto result = run_process(argv);
  if (result.exit_code != 0) {
    fs::remove(tmp, ec);
    throw Error(ErrorKind::kMedia, "clip failed for " + video_ref + ": " + tail_lines(result.err, 3));
  }
  fs::rename(tmp, out_path, ec);
  if (ec) throw Error(ErrorKind::kIo, "rename clip: " + ec.message());

  const auto check = probe(out_path.string());
  if (check.frame_count != frames) {
    throw Error(ErrorKind::kMedia, "clip of " + video_ref + " has " + std::to_string(check.frame_count) +
                                       " frames, expected " + std::to_string(frames));
  }
  return variant;
}

std::vector<ClipOutcome> MediaOps::make_clip_ladder(const Episode& episode, const fs::path& work_root,
                                                    const ClipLadderSpec& spec) const {
  spec.check();
  if (episode.score != kMaxScore || episode.parent_id) {
    throw Error(ErrorKind::kPrecondition, "clip ladder requires an original score-5 episode: " + episode.id);
  }
  std::vector<ClipOutcome> out;
  for (std::size_t i = 0; i < spec.fractions.size(); ++i) {
    ClipOutcome rung;
    rung.fraction = spec.fractions[i];
    rung.proposed_score = spec.proposed_scores[i];
    try {
      auto variant = clip(episode.video_ref, rung.fraction, clip_path(work_root, episode.id, rung.fraction));
      variant.parent_episode_id = episode.id;
      variant.proposed_score = rung.proposed_score;
      rung.variant = std::move(variant);
    } catch (const Error& ex) {
      rung.error = ex.what();
      logger_.warn("clip_failed", {{"episode_id", episode.id}, {"fraction", rung.fraction}, {"error", rung.error}});
    }
    out.push_back(std::move(rung));
  }
  return out;
}

}  // namespace rewardkit
