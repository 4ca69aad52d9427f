#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ssimadv/image.hpp"

namespace ssimadv {

inline constexpr const char* kOutcomesHeader =
    "image_id,attack,true_label,adv_label,success,ssim,l1,l2,linf,c_final,iterations";
inline constexpr const char* kTailHeader = "attack,ssim_min,success_rate,proportion";
// Audit rows for clean images the model already misclassifies; these never
// count toward success rates.
inline constexpr const char* kSkippedAttack = "skipped";

/// One row of outcomes.csv. The adversarial image rides along in memory for
/// exhibit dumps and is empty on records parsed back from a file.
struct OutcomeRecord {
  int image_id = 0;
  std::string attack;
  int true_label = 0;
  int adv_label = 0;
  bool success = false;
  double ssim = 1;
  double l1 = 0, l2 = 0, linf = 0;
  double c_final = 0;
  long long iterations = 0;
  Image<float> image;
};

/// One row of tail_curve.csv: of the attacked images, the fraction whose
/// adversarial output succeeded with SSIM >= ssim_min, and the fraction whose
/// output reached SSIM >= ssim_min at all.
struct TailPoint {
  std::string attack;
  double ssim_min = 0;
  double success_rate = 0;
  double proportion = 0;
};

/// Per-attack aggregates; distortion and SSIM statistics cover successful
/// records only and are absent when nothing succeeded.
struct AttackSummary {
  std::string attack;
  int attacked = 0;
  int successes = 0;
  double success_rate = 0;
  std::optional<double> mean_l1, mean_l2, mean_linf;
  std::optional<double> mean_ssim, median_ssim, min_ssim;
};

/// 6-significant-digit formatting used for every float in the CSVs.
std::string format_g6(double v);

std::string outcomes_to_csv(const std::vector<OutcomeRecord>& records);
std::vector<OutcomeRecord> parse_outcomes_csv(const std::string& text);

/// Thresholds 0.00, 0.05, ..., 1.00 per attack, in first-appearance order,
/// skipped rows excluded. The threshold-0 row is unfiltered (every success
/// and every produced image counts, even at negative SSIM), which makes
/// success_rate(0) * attacked equal the success row count exactly. SSIM
/// values are first pushed through their CSV formatting so the curve is a
/// pure function of the emitted outcomes.csv.
std::vector<TailPoint> compute_tail(const std::vector<OutcomeRecord>& records);
std::string tail_to_csv(const std::vector<TailPoint>& tail);

std::vector<AttackSummary> summarize(const std::vector<OutcomeRecord>& records);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

/// 8-bit binary PGM (1 channel) or PPM (3 channels); byte = round(255 * v),
/// half away from zero.
void write_image(const Image<float>& img, const std::string& path);

/// Dumps the k lowest-SSIM successful adversarial images per attack (with
/// their originals when available) into dir as PGM/PPM.
void write_exhibits(const std::vector<OutcomeRecord>& records,
                    const std::vector<Image<float>>& originals_by_id, const std::string& dir,
                    int k = 9);

}  // namespace ssimadv
