#include "qbcat/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "qbcat/io.hpp"
#include "qbcat/metrics.hpp"
#include "qbcat/sampler.hpp"
#include "qbcat/scoring.hpp"

namespace qbcat {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::mutex g_print_mutex;

void say(const std::string& line) {
    std::lock_guard<std::mutex> lk(g_print_mutex);
    std::cout << line << "\n" << std::flush;
}

int worker_count() {
    if (const char* env = std::getenv("QBCAT_WORKERS")) {
        int n = std::atoi(env);
        if (n >= 1) return n;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

void parallel_tasks(std::size_t n_tasks, const std::function<void(std::size_t)>& fn) {
    int workers = std::min<int>(worker_count(), static_cast<int>(n_tasks));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n_tasks; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex err_mutex;
    std::string first_error;
    auto body = [&] {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= n_tasks) return;
            try {
                fn(i);
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lk(err_mutex);
                if (first_error.empty()) first_error = e.what();
            }
        }
    };
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(body);
    for (auto& t : pool) t.join();
    if (!first_error.empty()) throw std::runtime_error(first_error);
}

std::string class_display_name(const Dataset& data, QuestionType qt, std::int32_t cls) {
    return qtype_is_attribute_kind(qt) ? data.dict.attr_names.at(cls) : data.dict.pred_names.at(cls);
}

struct AuditLine {
    int increment;
    std::string sampler;
    QuestionType qtype;
    std::string requested_class;  // empty for classical samplers
    std::string provided_class;
    QuestionId qid;
    std::string outcome;  // provided | fallback | labeled

    std::string to_json() const {
        json j;
        j["increment"] = increment;
        j["sampler"] = sampler;
        j["qtype"] = qtype_name(qtype);
        if (requested_class.empty())
            j["requested_class"] = nullptr;
        else
            j["requested_class"] = requested_class;
        j["provided_class"] = provided_class;
        j["question_id"] = qid;
        j["outcome"] = outcome;
        return j.dump();
    }
};

using GammaKey = std::tuple<std::string, int, int>;  // qtype, split, metric

GammaKey key_of(const MetricRow& r) {
    return {r.question_type, static_cast<int>(r.split), static_cast<int>(r.metric)};
}

struct SeedArtifacts {
    Model pretrained;
    std::vector<QuestionId> pretrain_ids;
    std::vector<MetricRow> baseline_rows;
    std::map<GammaKey, double> offline_gamma;
};

ModelDims dims_for(const LoadedData& ld, const TrainConfig& t) {
    ModelDims d;
    d.feature_dim = static_cast<int>(ld.data.features.cols);
    d.hidden = t.hidden_dim;
    d.embed = t.embed_dim;
    d.n_attr = static_cast<int>(ld.data.dict.n_attr());
    d.n_pred = static_cast<int>(ld.data.dict.n_pred());
    return d;
}

void label_rows(std::vector<MetricRow>& rows, std::uint64_t seed, const std::string& sampler,
                int increment) {
    for (MetricRow& r : rows) {
        r.seed = seed;
        r.sampler = sampler;
        r.increment = increment;
    }
}

SeedArtifacts prepare_seed(const ExperimentConfig& cfg, const LoadedData& ld, std::uint64_t seed) {
    const std::string dir = cfg.output_dir + "/state/seed" + std::to_string(seed);
    fs::create_directories(dir);
    SeedArtifacts art;
    art.pretrained = Model(dims_for(ld, cfg.train));

    {
        Rng rng = Rng::stream(seed, "pretrain-sample");
        art.pretrain_ids = pretrain_sample(ld.data, ld.train_q, cfg.train.pretrain_per_class, rng);
    }

    const std::string ckpt = dir + "/pretrained.qbck";
    const std::string rows_path = dir + "/baselines.csv";
    if (fs::exists(ckpt) && fs::exists(rows_path)) {
        load_model_state(art.pretrained, load_checkpoint(ckpt));
        art.baseline_rows = read_metrics_csv(rows_path);
        say("[seed " + std::to_string(seed) + "] reusing cached pre-train/offline state");
    } else {
        Rng init_rng = Rng::stream(seed, "model-init");
        art.pretrained.init(init_rng);
        Model offline = art.pretrained;  // same initialization for the bounds

        Rng pre_rng = Rng::stream(seed, "pretrain-train");
        train_standard_epochs(art.pretrained, ld.data, art.pretrain_ids, cfg.train.pretrain_epochs,
                              cfg.train, pre_rng);
        std::vector<MetricRow> pre_rows = evaluate_test_set(art.pretrained, ld.data, ld.test_q);
        label_rows(pre_rows, seed, "PreTrain", 0);
        say("[seed " + std::to_string(seed) + "] pre-train done (" +
            std::to_string(art.pretrain_ids.size()) + " samples)");

        Rng off_rng = Rng::stream(seed, "offline-train");
        train_standard_epochs(offline, ld.data, ld.train_q, cfg.train.offline_epochs, cfg.train,
                              off_rng);
        std::vector<MetricRow> off_rows = evaluate_test_set(offline, ld.data, ld.test_q);
        label_rows(off_rows, seed, "Offline", 0);
        say("[seed " + std::to_string(seed) + "] offline bound done");

        art.baseline_rows = pre_rows;
        art.baseline_rows.insert(art.baseline_rows.end(), off_rows.begin(), off_rows.end());
        save_checkpoint(ckpt, model_state_tensors(art.pretrained));
        write_metrics_csv(rows_path, art.baseline_rows);
    }
    for (const MetricRow& r : art.baseline_rows)
        if (r.sampler == "Offline") art.offline_gamma[key_of(r)] = r.value;
    return art;
}

struct CellOutput {
    std::vector<MetricRow> rows;
    std::vector<OmegaRow> omegas;
    std::vector<std::string> audit;
};

std::uint64_t cell_root_seed(std::uint64_t seed, SamplerKind sampler) {
    return splitmix64(seed ^ fnv1a64(sampler_name(sampler)));
}

std::vector<QuestionId> read_id_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path);
    std::vector<QuestionId> out;
    std::string line;
    while (std::getline(is, line))
        if (!line.empty()) out.push_back(std::stoull(line));
    return out;
}

void write_id_file(const std::string& path, const std::vector<QuestionId>& ids) {
    std::ofstream os(path, std::ios::binary);
    for (QuestionId id : ids) os << id << "\n";
    if (!os) throw std::runtime_error("write failed for " + path);
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path);
    std::vector<std::string> out;
    std::string line;
    while (std::getline(is, line))
        if (!line.empty()) out.push_back(line);
    return out;
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
    std::ofstream os(path, std::ios::binary);
    for (const auto& l : lines) os << l << "\n";
    if (!os) throw std::runtime_error("write failed for " + path);
}

CellOutput run_cell(const ExperimentConfig& cfg, const LoadedData& ld, const SeedArtifacts& art,
                    std::uint64_t seed, SamplerKind sampler, ProtocolProbe* probe) {
    const std::string cell = std::string(sampler_name(sampler)) + "_seed" + std::to_string(seed);
    const std::string dir = cfg.output_dir + "/state/" + cell;
    fs::create_directories(dir);
    const std::uint64_t root = cell_root_seed(seed, sampler);
    auto inc_path = [&](const char* what, int t, const char* ext) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "/%s_%02d.%s", what, t, ext);
        return dir + buf;
    };

    // resume: longest contiguous prefix of complete increments
    int done = 0;
    if (cfg.write_checkpoints) {
        for (int t = 1; t <= cfg.increments; ++t) {
            if (fs::exists(inc_path("model", t, "qbck")) && fs::exists(inc_path("labeled", t, "txt")) &&
                fs::exists(inc_path("rows", t, "csv")) && fs::exists(inc_path("audit", t, "ndjson")))
                done = t;
            else
                break;
        }
    }

    CellOutput out;
    Model model = art.pretrained;
    std::vector<QuestionId> replay = art.pretrain_ids;

    // unlabeled pool: train questions minus the pre-training seed data, and
    // minus head-class questions when the tail-only ablation is on
    std::vector<QuestionId> unlabeled;
    {
        std::set<QuestionId> in_replay(replay.begin(), replay.end());
        for (QuestionId id : ld.train_q) {
            if (in_replay.count(id)) continue;
            if (cfg.tail_only_pool) {
                Question q{id, question_triple_index(id), question_qtype(id)};
                if (!question_class_is_tail(ld.data, q)) continue;
            }
            unlabeled.push_back(id);
        }
    }
    Oracle oracle(ld.data, unlabeled);
    HardNegativeBuffer negatives;

    for (int t = 1; t <= done; ++t) {
        std::vector<QuestionId> labeled = read_id_file(inc_path("labeled", t, "txt"));
        for (QuestionId id : labeled) oracle.label(id);
        replay.insert(replay.end(), labeled.begin(), labeled.end());
        auto rows = read_metrics_csv(inc_path("rows", t, "csv"));
        out.rows.insert(out.rows.end(), rows.begin(), rows.end());
        auto audit = read_lines(inc_path("audit", t, "ndjson"));
        out.audit.insert(out.audit.end(), audit.begin(), audit.end());
    }
    if (done > 0) {
        load_model_state(model, load_checkpoint(inc_path("model", done, "qbck")));
        say("[" + cell + "] resumed after increment " + std::to_string(done));
    }

    for (int t = done + 1; t <= cfg.increments; ++t) {
        Rng select_rng = Rng::stream(root, "select", static_cast<std::uint64_t>(t));
        Rng oracle_rng = Rng::stream(root, "oracle", static_cast<std::uint64_t>(t));
        IncrementRngs rngs{Rng::stream(root, "cv", static_cast<std::uint64_t>(t)),
                           Rng::stream(root, "train", static_cast<std::uint64_t>(t)),
                           Rng::stream(root, "bias", static_cast<std::uint64_t>(t))};

        std::vector<QuestionId> new_data;
        std::vector<std::string> audit_lines;
        if (sampler_is_qbcat(sampler)) {
            SamplingPlan plan = qbcat_select(sampler, ld.data.dict, cfg.per_qtype_budget, select_rng);
            for (int qt_i = 0; qt_i < kNumQuestionTypes; ++qt_i) {
                QuestionType qt = static_cast<QuestionType>(qt_i);
                for (std::int32_t cls : plan.class_requests[qt_i]) {
                    ProvideResult pr = provide_with_fallback(oracle, qt, cls,
                                                             plan.request_support[qt_i],
                                                             plan.request_weights[qt_i], oracle_rng);
                    new_data.push_back(pr.id);
                    AuditLine a{t,
                                sampler_name(sampler),
                                qt,
                                class_display_name(ld.data, qt, pr.requested_class),
                                class_display_name(ld.data, qt, pr.provided_class),
                                pr.id,
                                pr.fallback ? "fallback" : "provided"};
                    audit_lines.push_back(a.to_json());
                }
            }
        } else {
            ScoreFn scorer = [&](const std::vector<QuestionId>& ids) {
                return score_questions(model, ld.data, ids);
            };
            SamplingPlan plan = classic_select(sampler, oracle, scorer, cfg.per_qtype_budget, select_rng);
            for (int qt_i = 0; qt_i < kNumQuestionTypes; ++qt_i) {
                QuestionType qt = static_cast<QuestionType>(qt_i);
                for (QuestionId id : plan.chosen_ids[qt_i]) {
                    oracle.label(id);
                    new_data.push_back(id);
                    Question q{id, question_triple_index(id), qt};
                    AuditLine a{t,
                                sampler_name(sampler),
                                qt,
                                "",
                                class_display_name(ld.data, qt, question_class(ld.data, q)),
                                id,
                                "labeled"};
                    audit_lines.push_back(a.to_json());
                }
            }
        }

        std::vector<MetricRow> inc_rows;
        EvalFn eval_fn = [&](Model& eval_model, const BiasParams* bias) {
            inc_rows = evaluate_test_set(eval_model, ld.data, ld.test_q, bias);
            label_rows(inc_rows, seed, sampler_name(sampler), t);
        };
        IncrementOutcome oc = run_increment(model, ld.data, replay, new_data, cfg.train,
                                            cfg.rebalanced_batches, cfg.bias_correction, std::move(rngs),
                                            eval_fn, negatives, probe);

        out.rows.insert(out.rows.end(), inc_rows.begin(), inc_rows.end());
        out.audit.insert(out.audit.end(), audit_lines.begin(), audit_lines.end());
        if (cfg.write_checkpoints) {
            write_id_file(inc_path("labeled", t, "txt"), new_data);
            write_metrics_csv(inc_path("rows", t, "csv"), inc_rows);
            write_lines(inc_path("audit", t, "ndjson"), audit_lines);
            save_checkpoint(inc_path("model", t, "qbck"), model_state_tensors(model));
        }
        say("[" + cell + "] increment " + std::to_string(t) + "/" + std::to_string(cfg.increments) +
            " done (epochs=" + std::to_string(oc.best_epoch) + ")");
    }

    // omega per (qtype, split, metric) against this seed's offline bound
    std::map<GammaKey, std::vector<double>> series;
    for (const MetricRow& r : out.rows) series[key_of(r)].push_back(r.value);
    for (const auto& [key, gammas] : series) {
        auto off = art.offline_gamma.find(key);
        if (off == art.offline_gamma.end()) continue;
        if (static_cast<int>(gammas.size()) != cfg.increments) continue;
        OmegaRow orow;
        orow.seed = seed;
        orow.sampler = sampler_name(sampler);
        orow.question_type = std::get<0>(key);
        orow.split = static_cast<SplitKind>(std::get<1>(key));
        orow.metric = static_cast<MetricKind>(std::get<2>(key));
        orow.value = omega(gammas, off->second);
        out.omegas.push_back(orow);
    }
    return out;
}

}  // namespace

void generate_dataset(const GenDataConfig& cfg) {
    SynthDataset synth = generate(cfg.synth);
    save_dataset_dir(cfg.output_dir, synth);

    const ClassDictionary& dict = synth.data.dict;
    std::size_t head_a = 0, head_p = 0;
    for (bool h : dict.attr_is_head) head_a += h;
    for (bool h : dict.pred_is_head) head_p += h;
    std::cout << "dataset written to " << cfg.output_dir << "\n";
    std::cout << "boxes: " << synth.data.features.rows << ", triples: " << synth.data.triples.size()
              << "\n";
    std::cout << "attribute classes (" << dict.n_attr() << ", head " << head_a << "):\n";
    for (std::size_t c = 0; c < dict.n_attr(); ++c)
        std::cout << "  " << dict.attr_names[c] << " " << dict.attr_counts[c]
                  << (dict.attr_is_head[c] ? " head" : " tail") << "\n";
    std::cout << "predicate classes (" << dict.n_pred() << ", head " << head_p << "):\n";
    for (std::size_t c = 0; c < dict.n_pred(); ++c)
        std::cout << "  " << dict.pred_names[c] << " " << dict.pred_counts[c]
                  << (dict.pred_is_head[c] ? " head" : " tail") << "\n";
}

void run_experiment(const ExperimentConfig& cfg, ProtocolProbe* probe) {
    cfg.validate();
    fs::create_directories(cfg.output_dir);
    fs::create_directories(cfg.output_dir + "/audit");

    // config guard for resumable state
    const std::string hash_path = cfg.output_dir + "/config.hash";
    const std::string hash_now = std::to_string(cfg.content_hash());
    if (fs::exists(hash_path)) {
        std::ifstream is(hash_path);
        std::string prev;
        is >> prev;
        if (prev != hash_now)
            throw std::runtime_error("output dir holds state for a different config (checkpoint mismatch)");
    } else {
        std::ofstream os(hash_path);
        os << hash_now << "\n";
    }

    LoadedData ld = load_dataset_dir(cfg.data_dir);
    say("loaded dataset: " + std::to_string(ld.data.triples.size()) + " triples, " +
        std::to_string(ld.train_q.size()) + " train / " + std::to_string(ld.test_q.size()) +
        " test questions");

    std::vector<SeedArtifacts> artifacts(cfg.seeds.size());
    parallel_tasks(cfg.seeds.size(),
                   [&](std::size_t i) { artifacts[i] = prepare_seed(cfg, ld, cfg.seeds[i]); });

    struct CellTask {
        std::size_t seed_idx;
        std::size_t sampler_idx;
    };
    std::vector<CellTask> tasks;
    for (std::size_t k = 0; k < cfg.samplers.size(); ++k)
        for (std::size_t s = 0; s < cfg.seeds.size(); ++s) tasks.push_back({s, k});
    std::vector<CellOutput> outputs(tasks.size());
    parallel_tasks(tasks.size(), [&](std::size_t i) {
        outputs[i] = run_cell(cfg, ld, artifacts[tasks[i].seed_idx], cfg.seeds[tasks[i].seed_idx],
                              cfg.samplers[tasks[i].sampler_idx], probe);
    });

    // assemble outputs in a fixed order
    std::vector<MetricRow> rows;
    std::vector<OmegaRow> omegas;
    for (std::size_t s = 0; s < cfg.seeds.size(); ++s)
        rows.insert(rows.end(), artifacts[s].baseline_rows.begin(), artifacts[s].baseline_rows.end());
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        rows.insert(rows.end(), outputs[i].rows.begin(), outputs[i].rows.end());
        omegas.insert(omegas.end(), outputs[i].omegas.begin(), outputs[i].omegas.end());
        const std::string cell = std::string(sampler_name(cfg.samplers[tasks[i].sampler_idx])) +
                                 "_seed" + std::to_string(cfg.seeds[tasks[i].seed_idx]);
        write_lines(cfg.output_dir + "/audit/" + cell + ".ndjson", outputs[i].audit);
    }
    write_metrics_csv(cfg.output_dir + "/metrics.csv", rows);
    write_omega_csv(cfg.output_dir + "/omega.csv", omegas);
    say("results written to " + cfg.output_dir);
}

namespace {

struct Welford {
    std::vector<double> xs;
    void add(double x) { xs.push_back(x); }
    double mean() const {
        double s = 0;
        for (double x : xs) s += x;
        return xs.empty() ? 0.0 : s / xs.size();
    }
    double stderr_mean() const {
        if (xs.size() < 2) return 0.0;
        double m = mean(), s = 0;
        for (double x : xs) s += (x - m) * (x - m);
        return std::sqrt(s / (xs.size() - 1)) / std::sqrt(static_cast<double>(xs.size()));
    }
};

}  // namespace

void write_reports(const std::string& results_dir) {
    std::vector<MetricRow> rows = read_metrics_csv(results_dir + "/metrics.csv");
    std::vector<OmegaRow> omegas = read_omega_csv(results_dir + "/omega.csv");
    if (omegas.empty())
        throw std::runtime_error("omega.csv has no rows (offline bound missing, omega undefined)");
    fs::create_directories(results_dir + "/report");

    // (a) omega per method averaged over reported question types
    {
        // per (sampler, seed, split, metric): mean over qtypes
        std::map<std::tuple<std::string, std::uint64_t, int, int>, Welford> per_seed;
        for (const OmegaRow& r : omegas)
            per_seed[{r.sampler, r.seed, static_cast<int>(r.split), static_cast<int>(r.metric)}].add(
                r.value);
        std::map<std::tuple<std::string, int, int>, Welford> summary;
        for (const auto& [key, w] : per_seed)
            summary[{std::get<0>(key), std::get<2>(key), std::get<3>(key)}].add(w.mean());
        std::ofstream os(results_dir + "/report/omega_summary.csv", std::ios::binary);
        os << "sampler,split,metric,mean_omega,stderr_omega\n";
        for (const auto& [key, w] : summary)
            os << std::get<0>(key) << ',' << split_name(static_cast<SplitKind>(std::get<1>(key)))
               << ',' << metric_name(static_cast<MetricKind>(std::get<2>(key))) << ','
               << format_csv_value(w.mean()) << ',' << format_csv_value(w.stderr_mean()) << "\n";
    }

    // (b) learning curves: mean and standard error over seeds
    {
        std::map<std::tuple<std::string, std::string, int, int, int>, Welford> curve;
        for (const MetricRow& r : rows)
            curve[{r.sampler, r.question_type, static_cast<int>(r.split), static_cast<int>(r.metric),
                   r.increment}]
                .add(r.value);
        std::ofstream os(results_dir + "/report/learning_curves.csv", std::ios::binary);
        os << "sampler,question_type,split,metric,increment,mean,stderr\n";
        for (const auto& [key, w] : curve)
            os << std::get<0>(key) << ',' << std::get<1>(key) << ','
               << split_name(static_cast<SplitKind>(std::get<2>(key))) << ','
               << metric_name(static_cast<MetricKind>(std::get<3>(key))) << ',' << std::get<4>(key)
               << ',' << format_csv_value(w.mean()) << ',' << format_csv_value(w.stderr_mean())
               << "\n";
    }

    // (c) selected-class histograms from the audit logs
    {
        std::map<std::tuple<std::string, std::string, std::string>, std::int64_t> hist;
        if (fs::exists(results_dir + "/audit")) {
            for (const auto& entry : fs::directory_iterator(results_dir + "/audit")) {
                if (entry.path().extension() != ".ndjson") continue;
                std::ifstream is(entry.path());
                std::string line;
                while (std::getline(is, line)) {
                    if (line.empty()) continue;
                    json j = json::parse(line);
                    std::string qt = j.at("qtype").get<std::string>();
                    std::string vocab = (qt[2] == 'A') ? "attribute" : "predicate";
                    hist[{j.at("sampler").get<std::string>(), vocab,
                          j.at("provided_class").get<std::string>()}]++;
                }
            }
        }
        std::ofstream os(results_dir + "/report/class_histograms.csv", std::ios::binary);
        os << "sampler,vocabulary,class,samples\n";
        for (const auto& [key, count] : hist)
            os << std::get<0>(key) << ',' << std::get<1>(key) << ',' << std::get<2>(key) << ','
               << count << "\n";
    }
}

}  // namespace qbcat
