#pragma once

#include <span>
#include <string>
#include <vector>

#include "zwocr/datagen.hpp"
#include "zwocr/metrics.hpp"
#include "zwocr/net.hpp"

namespace zwocr {

// Pooled CER of decoded strings against the samples' transcripts.
double pooled_cer(std::span<const Sample> samples, std::span<const std::string> decoded);

// ASR_trg / ASR_sth / ASR over poisoned samples (expected trigger count from
// trigger_positions, stealth reference = transcript with the payload removed).
AttackScores attack_scores(std::span<const Sample> poisoned, std::span<const std::string> decoded);

// Unpoisoned samples feed `cer`, poisoned ones the attack metrics and the
// per-font breakdown.
EvalReport build_report(std::span<const Sample> samples, std::span<const std::string> decoded);

EvalReport evaluate(const ModelParams& params, std::span<const Sample> samples,
                    std::vector<std::string>* decoded_out = nullptr);

}  // namespace zwocr
