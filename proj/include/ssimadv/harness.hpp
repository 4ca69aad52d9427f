#pragma once

#include <string>
#include <vector>

#include "ssimadv/attacks.hpp"
#include "ssimadv/dataset.hpp"
#include "ssimadv/model.hpp"
#include "ssimadv/report.hpp"

namespace ssimadv {

enum class AttackKind { pgd, pgd_ssim, enet, ssim, ssim_e };

const char* attack_name(AttackKind kind);
AttackKind parse_attack_name(const std::string& name);
/// Comma-separated list, e.g. "pgd,pgd-ssim,enet,ssim,ssim-e".
std::vector<AttackKind> parse_attack_list(const std::string& csv);

struct CampaignConfig {
  std::vector<AttackKind> attacks{AttackKind::pgd, AttackKind::pgd_ssim, AttackKind::enet,
                                  AttackKind::ssim, AttackKind::ssim_e};
  int limit = -1;   // attack the first `limit` eligible images; negative: all
  int threads = 0;  // 0: hardware concurrency
  PgdConfig<float> pgd{};
  EnetConfig<float> enet{};
  SsimAttackConfig<float> ssim_attack{};

  void validate() const;
};

struct EvalReport {
  int considered = 0;      // clean images scanned (attacked + skipped)
  int attacked = 0;        // correctly classified images that were attacked
  double clean_accuracy = 0;  // over the considered images
  std::vector<OutcomeRecord> records;  // per image: skipped row or one row per attack
  std::vector<AttackSummary> summaries;
  std::vector<TailPoint> tail;
};

/// Runs every configured attack on the first `limit` correctly classified
/// images of the dataset (misclassified cleans get audit rows and don't
/// count). Images are attacked in parallel; records are collected in dataset
/// order, so output is deterministic for a given model, dataset and config.
EvalReport run_campaign(const ScoreModel<float>& model, const Dataset<float>& data,
                        const CampaignConfig& cfg, uint64_t seed);

/// Writes outcomes.csv and tail_curve.csv into outdir, plus the lowest-SSIM
/// successful adversarial images per attack under outdir/exhibits when
/// exhibit_count > 0.
void emit_report(const EvalReport& report, const Dataset<float>& data,
                 const std::string& outdir, int exhibit_count);

std::string describe(const AttackSummary& s);

}  // namespace ssimadv
