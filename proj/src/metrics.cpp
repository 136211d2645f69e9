#include "qbcat/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace qbcat {

std::optional<double> auroc_micro(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("auroc_micro: size mismatch");
    std::size_t n_pos = 0;
    for (int l : labels) n_pos += (l != 0);
    std::size_t n_neg = labels.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) return std::nullopt;

    // tie-averaged ranks implement P(pos > neg) + 0.5*P(tie)
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double pos_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        double avg_rank = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based
        for (std::size_t k = i; k <= j; ++k)
            if (labels[order[k]]) pos_rank_sum += avg_rank;
        i = j + 1;
    }
    double u = pos_rank_sum - 0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1);
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

namespace {

bool samplewise_evaluable(const ScoredSet& q) {
    if (q.scores.size() != q.labels.size()) throw std::invalid_argument("scored set: size mismatch");
    if (q.scores.size() < 2) return false;
    int pos = 0;
    for (int l : q.labels) pos += (l != 0);
    return pos == 1;
}

}  // namespace

std::optional<SamplewiseResult> auroc_samplewise(const std::vector<ScoredSet>& questions) {
    SamplewiseResult res;
    double sum = 0.0;
    for (const ScoredSet& q : questions) {
        if (!samplewise_evaluable(q)) {
            ++res.skipped;
            continue;
        }
        auto v = auroc_micro(q.scores, q.labels);
        sum += *v;
        ++res.evaluated;
    }
    if (res.evaluated == 0) return std::nullopt;
    res.value = sum / static_cast<double>(res.evaluated);
    return res;
}

std::optional<double> ap_micro(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("ap_micro: size mismatch");
    std::size_t n_pos = 0;
    for (int l : labels) n_pos += (l != 0);
    if (n_pos == 0) return std::nullopt;

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    double ap = 0.0;
    std::size_t seen_pos = 0;
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
        if (labels[order[rank]]) {
            ++seen_pos;
            ap += static_cast<double>(seen_pos) / static_cast<double>(rank + 1);
        }
    }
    return ap / static_cast<double>(n_pos);
}

std::optional<SamplewiseResult> ap_samplewise(const std::vector<ScoredSet>& questions) {
    SamplewiseResult res;
    double sum = 0.0;
    for (const ScoredSet& q : questions) {
        if (!samplewise_evaluable(q)) {
            ++res.skipped;
            continue;
        }
        sum += *ap_micro(q.scores, q.labels);
        ++res.evaluated;
    }
    if (res.evaluated == 0) return std::nullopt;
    res.value = sum / static_cast<double>(res.evaluated);
    return res;
}

double omega(const std::vector<double>& gammas, double gamma_offline) {
    if (gammas.empty()) throw std::invalid_argument("omega: empty gamma sequence");
    double sum = 0.0;
    for (double g : gammas) sum += 1.0 - (gamma_offline - g);
    return sum / static_cast<double>(gammas.size());
}

// %.17g round-trips doubles exactly; resumed runs re-read these values
std::string format_csv_value(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_metrics_csv(const std::string& path, const std::vector<MetricRow>& rows) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    os << "seed,sampler,increment,question_type,split,metric,value\n";
    for (const MetricRow& r : rows)
        os << r.seed << ',' << r.sampler << ',' << r.increment << ',' << r.question_type << ','
           << split_name(r.split) << ',' << metric_name(r.metric) << ','
           << format_csv_value(r.value) << "\n";
    if (!os) throw std::runtime_error("write failed for " + path);
}

void write_omega_csv(const std::string& path, const std::vector<OmegaRow>& rows) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    os << "seed,sampler,question_type,split,metric,omega\n";
    for (const OmegaRow& r : rows)
        os << r.seed << ',' << r.sampler << ',' << r.question_type << ',' << split_name(r.split)
           << ',' << metric_name(r.metric) << ',' << format_csv_value(r.value) << "\n";
    if (!os) throw std::runtime_error("write failed for " + path);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) out.push_back(field);
    return out;
}

SplitKind parse_split(const std::string& s) {
    if (s == "full") return SplitKind::Full;
    if (s == "tail") return SplitKind::Tail;
    throw std::runtime_error("bad split name '" + s + "'");
}

MetricKind parse_metric(const std::string& s) {
    if (s == "auroc") return MetricKind::AUROC;
    if (s == "map") return MetricKind::MAP;
    throw std::runtime_error("bad metric name '" + s + "'");
}

}  // namespace

std::vector<MetricRow> read_metrics_csv(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error(path + ": empty file");
    std::vector<MetricRow> rows;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        auto f = split_csv_line(line);
        if (f.size() != 7) throw std::runtime_error(path + ": bad row '" + line + "'");
        MetricRow r;
        r.seed = std::stoull(f[0]);
        r.sampler = f[1];
        r.increment = std::stoi(f[2]);
        r.question_type = f[3];
        r.split = parse_split(f[4]);
        r.metric = parse_metric(f[5]);
        r.value = std::stod(f[6]);
        rows.push_back(std::move(r));
    }
    return rows;
}

std::vector<OmegaRow> read_omega_csv(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error(path + ": empty file");
    std::vector<OmegaRow> rows;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        auto f = split_csv_line(line);
        if (f.size() != 6) throw std::runtime_error(path + ": bad row '" + line + "'");
        OmegaRow r;
        r.seed = std::stoull(f[0]);
        r.sampler = f[1];
        r.question_type = f[2];
        r.split = parse_split(f[3]);
        r.metric = parse_metric(f[4]);
        r.value = std::stod(f[5]);
        rows.push_back(std::move(r));
    }
    return rows;
}

}  // namespace qbcat
