#pragma once

#include <optional>
#include <string>
#include <vector>

namespace qbcat {

// One scored instance set: scores per candidate, exactly one positive for the
// sample-wise variants, arbitrary 0/1 labels for the micro variants.
struct ScoredSet {
    std::vector<double> scores;
    std::vector<int> labels;  // 0/1
};

// Rank-statistic AUROC over flattened (instance, candidate) pairs; ties count
// half. Returns nullopt when labels are all-positive or all-negative.
std::optional<double> auroc_micro(const std::vector<double>& scores, const std::vector<int>& labels);

// Per-question one-vs-rest AUROC averaged uniformly over questions whose
// candidate set has >= 2 entries and exactly one positive; others are skipped.
struct SamplewiseResult {
    double value = 0.0;
    std::size_t evaluated = 0;
    std::size_t skipped = 0;
};
std::optional<SamplewiseResult> auroc_samplewise(const std::vector<ScoredSet>& questions);

// Non-interpolated average precision; ties broken by the stable candidate
// index. AP = mean over positives of precision at the positive's rank.
std::optional<double> ap_micro(const std::vector<double>& scores, const std::vector<int>& labels);
std::optional<SamplewiseResult> ap_samplewise(const std::vector<ScoredSet>& questions);

// Omega = (1/T) * sum over increments of [1 - (gamma_offline - gamma_t)].
double omega(const std::vector<double>& gammas, double gamma_offline);

enum class MetricKind { AUROC, MAP };
enum class SplitKind { Full, Tail };

inline const char* metric_name(MetricKind m) { return m == MetricKind::AUROC ? "auroc" : "map"; }
inline const char* split_name(SplitKind s) { return s == SplitKind::Full ? "full" : "tail"; }

// One evaluation cell; increment 0 is reserved for the Pre-Train baseline row
// and the Offline row uses the sampler name "Offline".
struct MetricRow {
    std::uint64_t seed = 0;
    std::string sampler;
    int increment = 0;
    std::string question_type;
    SplitKind split = SplitKind::Full;
    MetricKind metric = MetricKind::AUROC;
    double value = 0.0;
};

struct OmegaRow {
    std::uint64_t seed = 0;
    std::string sampler;
    std::string question_type;
    SplitKind split = SplitKind::Full;
    MetricKind metric = MetricKind::AUROC;
    double value = 0.0;
};

std::string format_csv_value(double v);
void write_metrics_csv(const std::string& path, const std::vector<MetricRow>& rows);
void write_omega_csv(const std::string& path, const std::vector<OmegaRow>& rows);
std::vector<MetricRow> read_metrics_csv(const std::string& path);
std::vector<OmegaRow> read_omega_csv(const std::string& path);

}  // namespace qbcat
