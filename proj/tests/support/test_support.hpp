#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "rewardkit/augmentation.hpp"
#include "rewardkit/core_model.hpp"

namespace rewardkit::testing {

std::filesystem::path fixture(const std::string& name);

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

bool have_encoder();
// Synthetic test-pattern video with exactly `frames` frames.
void make_video(const std::filesystem::path& path, int frames, int fps = 30);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

// Writes a few small placeholder frame files per key; no encoder needed.
class FakeFrames final : public FrameSource {
 public:
  explicit FakeFrames(std::filesystem::path root, int count = 4) : root_(std::move(root)), count_(count) {}
  FrameSample frames_for(const std::string& key, const std::string& video_ref, int max_frames) override;

  std::atomic<int> calls{0};
  // Keys whose sample should come back without the final frame.
  std::vector<std::string> drop_final;

 private:
  std::filesystem::path root_;
  int count_;
};

Episode demo_episode(const std::string& id = "bridge/0001",
                     const std::string& task = "put the red cup on the plate");

// Script that drives one counterfactual ladder to acceptance. With
// reject_once the score-3 command is rejected on the first round only.
nlohmann::json golden_script(bool reject_once);

}  // namespace rewardkit::testing
