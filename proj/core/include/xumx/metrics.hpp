#pragma once

// BSSEval-style SDR and SAR with zero-lag projections instead of the 512-tap
// distortion filters of BSSEval v4. Scores are computed on non-overlapping
// frames and summarised as the median over frames, then the median over
// tracks. Values are clamped to +/-100 dB.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "xumx/dsp.hpp"

namespace xumx {

inline constexpr double kClampDb = 100.0;
inline constexpr double kSarRidge = 1e-10;

/// One score per frame; std::nullopt marks a frame excluded because its
/// reference is silent.
using FrameScores = std::vector<std::optional<double>>;

/// Frames of `frame_len` samples; a shorter trailing frame is kept.
std::size_t eval_frame_count(std::size_t length, std::size_t frame_len);

/// Per frame: s = (<est,ref>/|ref|^2) ref, SDR = 10 log10(|s|^2 / |est - s|^2).
FrameScores sdr_frames(std::span<const double> ref, std::span<const double> est,
                       std::size_t frame_len);
/// Per frame: p = least-squares projection of est onto span(refs),
/// SAR = 10 log10(|p|^2 / |est - p|^2). Frames where every reference is silent
/// are excluded.
FrameScores sar_frames(std::span<const Waveform> refs, std::span<const double> est,
                       std::size_t frame_len);

/// Median with the even-count convention (mean of the middle pair).
double median(std::vector<double> values);

/// Median over scored frames of each track, then median over tracks. Tracks
/// without any scored frame are skipped; throws if nothing is left.
double aggregate(std::span<const FrameScores> tracks);

/// Linear-interpolated quantile, q in [0, 1].
double quantile(std::vector<double> values, double q);

struct SourceEvaluation {
  FrameScores sdr;
  FrameScores sar;
};

/// Scores every estimate against its reference; SAR frames are also
/// excluded wherever that source's reference is silent.
std::vector<SourceEvaluation> evaluate_track(std::span<const Waveform> refs,
                                             std::span<const Waveform> ests,
                                             std::size_t frame_len);

/// Median-of-frames SDR and SAR for one source of one track.
struct TrackScore {
  std::optional<double> sdr;
  std::optional<double> sar;
};
TrackScore summarize(const SourceEvaluation& eval);

}  // namespace xumx
