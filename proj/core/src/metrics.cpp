#include "xumx/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "xumx/error.hpp"

namespace xumx {

namespace {

double ratio_db(double signal, double noise) {
  if (signal <= 0.0) return -kClampDb;
  if (noise <= 0.0) return kClampDb;
  return std::clamp(10.0 * std::log10(signal / noise), -kClampDb, kClampDb);
}

void require_frame_len(std::size_t frame_len) {
  if (frame_len == 0) throw Error("metrics: frame length must be positive");
}

}  // namespace

std::size_t eval_frame_count(std::size_t length, std::size_t frame_len) {
  require_frame_len(frame_len);
  return (length + frame_len - 1) / frame_len;
}

FrameScores sdr_frames(std::span<const double> ref, std::span<const double> est,
                       std::size_t frame_len) {
  if (ref.size() != est.size()) throw ShapeError("sdr_frames: length mismatch");
  const std::size_t frames = eval_frame_count(ref.size(), frame_len);
  FrameScores out(frames);
  for (std::size_t k = 0; k < frames; ++k) {
    const std::size_t b = k * frame_len, e = std::min(ref.size(), b + frame_len);
    double rr = 0.0, re = 0.0;
    for (std::size_t i = b; i < e; ++i) {
      rr += ref[i] * ref[i];
      re += ref[i] * est[i];
    }
    if (rr == 0.0) continue;
    const double gain = re / rr;
    double target = 0.0, distortion = 0.0;
    for (std::size_t i = b; i < e; ++i) {
      const double s = gain * ref[i];
      target += s * s;
      distortion += (est[i] - s) * (est[i] - s);
    }
    out[k] = ratio_db(target, distortion);
  }
  return out;
}

FrameScores sar_frames(std::span<const Waveform> refs, std::span<const double> est,
                       std::size_t frame_len) {
  if (refs.empty()) throw Error("sar_frames: no references");
  for (const auto& r : refs)
    if (r.size() != est.size()) throw ShapeError("sar_frames: length mismatch");
  const std::size_t J = refs.size();
  const std::size_t frames = eval_frame_count(est.size(), frame_len);
  FrameScores out(frames);
  for (std::size_t k = 0; k < frames; ++k) {
    const std::size_t b = k * frame_len, e = std::min(est.size(), b + frame_len);
    const auto n = static_cast<Eigen::Index>(e - b);
    Eigen::MatrixXd R(n, static_cast<Eigen::Index>(J));
    for (std::size_t j = 0; j < J; ++j)
      for (std::size_t i = b; i < e; ++i)
        R(static_cast<Eigen::Index>(i - b), static_cast<Eigen::Index>(j)) = refs[j].samples[i];
    const Eigen::Map<const Eigen::VectorXd> x(est.data() + b, n);

    Eigen::MatrixXd gram = R.transpose() * R;
    const double trace = gram.trace();
    if (trace == 0.0) continue;
    gram.diagonal().array() += kSarRidge * trace / static_cast<double>(J);
    const Eigen::VectorXd coeffs = gram.ldlt().solve(R.transpose() * x);
    const Eigen::VectorXd proj = R * coeffs;
    out[k] = ratio_db(proj.squaredNorm(), (x - proj).squaredNorm());
  }
  return out;
}

double median(std::vector<double> values) {
  if (values.empty()) throw Error("median of empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw Error("quantile of empty set");
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

double aggregate(std::span<const FrameScores> tracks) {
  std::vector<double> per_track;
  for (const auto& frames : tracks) {
    std::vector<double> scored;
    for (const auto& v : frames)
      if (v) scored.push_back(*v);
    if (!scored.empty()) per_track.push_back(median(std::move(scored)));
  }
  if (per_track.empty()) throw Error("aggregate: every frame is excluded");
  return median(std::move(per_track));
}

std::vector<SourceEvaluation> evaluate_track(std::span<const Waveform> refs,
                                             std::span<const Waveform> ests,
                                             std::size_t frame_len) {
  if (refs.size() != ests.size()) {
    throw ShapeError("evaluate_track: " + std::to_string(refs.size()) + " references but " +
                     std::to_string(ests.size()) + " estimates");
  }
  std::vector<SourceEvaluation> out;
  out.reserve(refs.size());
  for (std::size_t j = 0; j < refs.size(); ++j) {
    SourceEvaluation ev;
    ev.sdr = sdr_frames(refs[j].samples, ests[j].samples, frame_len);
    ev.sar = sar_frames(refs, ests[j].samples, frame_len);
    for (std::size_t k = 0; k < ev.sar.size(); ++k)
      if (!ev.sdr[k]) ev.sar[k].reset();
    out.push_back(std::move(ev));
  }
  return out;
}

TrackScore summarize(const SourceEvaluation& eval) {
  auto frame_median = [](const FrameScores& frames) -> std::optional<double> {
    std::vector<double> scored;
    for (const auto& v : frames)
      if (v) scored.push_back(*v);
    if (scored.empty()) return std::nullopt;
    return median(std::move(scored));
  };
  return TrackScore{frame_median(eval.sdr), frame_median(eval.sar)};
}

}  // namespace xumx
