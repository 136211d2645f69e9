#include "qbcat/config.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "qbcat/io.hpp"

namespace qbcat {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

json parse_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config " + path);
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
    return j;
}

void apply_overrides(json& j, const std::vector<std::string>& overrides) {
    for (const std::string& ov : overrides) {
        auto eq = ov.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("override '" + ov + "' is not key=value");
        std::string key = ov.substr(0, eq);
        std::string val = ov.substr(eq + 1);
        std::string pointer = "/";
        for (char c : key) pointer += (c == '.') ? '/' : c;
        json parsed;
        try {
            parsed = json::parse(val);
        } catch (const json::exception&) {
            parsed = val;  // bare strings stay strings
        }
        j[json::json_pointer(pointer)] = parsed;
    }
}

template <typename T>
void get_to_if(const json& j, const char* key, T& out) {
    if (j.contains(key)) j.at(key).get_to(out);
}

void get_range(const json& j, const char* key, std::array<int, 2>& out) {
    if (!j.contains(key)) return;
    const json& v = j.at(key);
    if (!v.is_array() || v.size() != 2)
        throw std::runtime_error(std::string(key) + " must be a [min, max] pair");
    out[0] = v[0].get<int>();
    out[1] = v[1].get<int>();
}

SynthConfig parse_synth(const json& j) {
    SynthConfig c;
    get_to_if(j, "n_attr_classes", c.n_attr_classes);
    get_to_if(j, "n_pred_classes", c.n_pred_classes);
    get_to_if(j, "zipf_exponent", c.zipf_exponent);
    get_to_if(j, "n_images", c.n_images);
    get_range(j, "objects_per_image", c.objects_per_image);
    get_range(j, "relations_per_image", c.relations_per_image);
    get_range(j, "attributes_per_object", c.attributes_per_object);
    get_to_if(j, "feature_dim", c.feature_dim);
    get_to_if(j, "prototype_noise_sigma", c.prototype_noise_sigma);
    get_to_if(j, "seed", c.seed);
    if (j.contains("split_fractions")) {
        const json& v = j.at("split_fractions");
        if (!v.is_array() || v.size() != 3)
            throw std::runtime_error("split_fractions must have 3 entries");
        for (int k = 0; k < 3; ++k) c.split_fractions[k] = v[k].get<double>();
    }
    return c;
}

TrainConfig parse_train(const json& j) {
    TrainConfig c;
    get_to_if(j, "lr", c.lr);
    get_to_if(j, "momentum", c.momentum);
    get_to_if(j, "weight_decay", c.weight_decay);
    get_to_if(j, "batch_rebalanced", c.batch_rebalanced);
    get_to_if(j, "batch_standard", c.batch_standard);
    get_to_if(j, "mining_pool", c.mining_pool);
    get_to_if(j, "top_ell", c.top_ell);
    get_to_if(j, "cv_k", c.cv_k);
    get_to_if(j, "cv_patience", c.cv_patience);
    get_to_if(j, "max_epochs", c.max_epochs);
    get_to_if(j, "pretrain_per_class", c.pretrain_per_class);
    get_to_if(j, "pretrain_epochs", c.pretrain_epochs);
    get_to_if(j, "offline_epochs", c.offline_epochs);
    get_to_if(j, "bias_stage1_epochs", c.bias_stage1_epochs);
    get_to_if(j, "bias_stage1_lr", c.bias_stage1_lr);
    get_to_if(j, "bias_stage2_iters", c.bias_stage2_iters);
    get_to_if(j, "bias_stage2_lr", c.bias_stage2_lr);
    get_to_if(j, "hidden_dim", c.hidden_dim);
    get_to_if(j, "embed_dim", c.embed_dim);
    return c;
}

}  // namespace

void ExperimentConfig::validate() const {
    if (data_dir.empty() || output_dir.empty())
        throw std::runtime_error("experiment config: data_dir and output_dir are required");
    if (samplers.empty()) throw std::runtime_error("experiment config: no samplers");
    if (seeds.empty()) throw std::runtime_error("experiment config: no seeds");
    if (increments < 1) throw std::runtime_error("experiment config: increments must be >= 1");
    if (per_qtype_budget < 1) throw std::runtime_error("experiment config: per_qtype_budget must be >= 1");
    train.validate();
}

std::uint64_t ExperimentConfig::content_hash() const {
    json j;
    j["samplers"] = json::array();
    for (SamplerKind k : samplers) j["samplers"].push_back(sampler_name(k));
    j["seeds"] = seeds;
    j["increments"] = increments;
    j["per_qtype_budget"] = per_qtype_budget;
    j["rebalanced_batches"] = rebalanced_batches;
    j["bias_correction"] = bias_correction;
    j["tail_only_pool"] = tail_only_pool;
    j["data_dir"] = data_dir;
    j["train"] = {{"lr", train.lr},
                  {"momentum", train.momentum},
                  {"weight_decay", train.weight_decay},
                  {"batch_rebalanced", train.batch_rebalanced},
                  {"batch_standard", train.batch_standard},
                  {"mining_pool", train.mining_pool},
                  {"top_ell", train.top_ell},
                  {"cv_k", train.cv_k},
                  {"cv_patience", train.cv_patience},
                  {"max_epochs", train.max_epochs},
                  {"pretrain_per_class", train.pretrain_per_class},
                  {"pretrain_epochs", train.pretrain_epochs},
                  {"offline_epochs", train.offline_epochs},
                  {"bias_stage1_epochs", train.bias_stage1_epochs},
                  {"bias_stage1_lr", train.bias_stage1_lr},
                  {"bias_stage2_iters", train.bias_stage2_iters},
                  {"bias_stage2_lr", train.bias_stage2_lr},
                  {"hidden_dim", train.hidden_dim},
                  {"embed_dim", train.embed_dim}};
    std::string dump = j.dump();
    return fnv1a64(dump.data(), dump.size());
}

GenDataConfig load_gen_data_config(const std::string& path,
                                   const std::vector<std::string>& overrides) {
    json j = parse_file(path);
    apply_overrides(j, overrides);
    GenDataConfig c;
    c.synth = parse_synth(j);
    if (!j.contains("output_dir")) throw std::runtime_error(path + ": output_dir is required");
    c.output_dir = j.at("output_dir").get<std::string>();
    c.synth.validate();
    return c;
}

ExperimentConfig load_experiment_config(const std::string& path,
                                        const std::vector<std::string>& overrides) {
    json j = parse_file(path);
    apply_overrides(j, overrides);
    ExperimentConfig c;
    get_to_if(j, "data_dir", c.data_dir);
    get_to_if(j, "output_dir", c.output_dir);
    if (j.contains("samplers")) {
        for (const auto& name : j.at("samplers")) {
            auto k = sampler_from_name(name.get<std::string>());
            if (!k) throw std::runtime_error("unknown sampler '" + name.get<std::string>() + "'");
            c.samplers.push_back(*k);
        }
    }
    if (j.contains("seeds")) j.at("seeds").get_to(c.seeds);
    get_to_if(j, "increments", c.increments);
    get_to_if(j, "per_qtype_budget", c.per_qtype_budget);
    get_to_if(j, "rebalanced_batches", c.rebalanced_batches);
    get_to_if(j, "bias_correction", c.bias_correction);
    get_to_if(j, "tail_only_pool", c.tail_only_pool);
    get_to_if(j, "write_checkpoints", c.write_checkpoints);
    if (j.contains("train")) c.train = parse_train(j.at("train"));
    c.validate();
    return c;
}

void LoadedData::index_questions() {
    questions = build_questions(data.triples);
    train_q.clear();
    val_q.clear();
    test_q.clear();
    for (const Question& q : questions) {
        auto it = image_split.find(data.triples[q.triple_index].image_id);
        if (it == image_split.end())
            throw std::runtime_error("no split assignment for image " +
                                     std::to_string(data.triples[q.triple_index].image_id));
        switch (it->second) {
            case Split::Train: train_q.push_back(q.id); break;
            case Split::Val: val_q.push_back(q.id); break;
            case Split::Test: test_q.push_back(q.id); break;
        }
    }
}

void save_dataset_dir(const std::string& dir, const SynthDataset& synth) {
    fs::create_directories(dir);
    save_feature_store(dir + "/features.qbcf", synth.data.features);
    save_triples(dir + "/triples.ndjson", synth.data.triples, synth.data.dict);
    save_dictionary(dir + "/dictionary.txt", synth.data.dict);
    {
        std::ofstream os(dir + "/splits.tsv", std::ios::binary);
        if (!os) throw std::runtime_error("cannot open splits.tsv for writing");
        static const char* names[3] = {"train", "val", "test"};
        for (std::size_t img = 0; img < synth.image_split.size(); ++img)
            os << img << "\t" << names[static_cast<int>(synth.image_split[img])] << "\n";
    }
    json manifest;
    manifest["features"] = "features.qbcf";
    manifest["triples"] = "triples.ndjson";
    manifest["dictionary"] = "dictionary.txt";
    manifest["splits"] = "splits.tsv";
    manifest["feature_dim"] = static_cast<int>(synth.data.features.cols);
    std::ofstream os(dir + "/dataset.json", std::ios::binary);
    os << manifest.dump(2) << "\n";
    if (!os) throw std::runtime_error("cannot write dataset.json");
}

LoadedData load_dataset_dir(const std::string& dir) {
    json manifest = parse_file(dir + "/dataset.json");
    LoadedData ld;
    ld.data.features = load_feature_store(dir + "/" + manifest.at("features").get<std::string>());
    ld.data.dict = load_dictionary(dir + "/" + manifest.at("dictionary").get<std::string>());
    ld.data.triples = load_triples(dir + "/" + manifest.at("triples").get<std::string>(),
                                   ld.data.features, ld.data.dict);
    ld.data.build_indices();
    {
        std::ifstream is(dir + "/" + manifest.at("splits").get<std::string>());
        if (!is) throw std::runtime_error("cannot open splits file");
        std::string line;
        while (std::getline(is, line)) {
            if (line.empty()) continue;
            auto tab = line.find('\t');
            if (tab == std::string::npos) throw std::runtime_error("bad splits line: " + line);
            std::int64_t img = std::stoll(line.substr(0, tab));
            std::string name = line.substr(tab + 1);
            Split s;
            if (name == "train")
                s = Split::Train;
            else if (name == "val")
                s = Split::Val;
            else if (name == "test")
                s = Split::Test;
            else
                throw std::runtime_error("bad split name: " + name);
            ld.image_split[img] = s;
        }
    }
    ld.index_questions();
    return ld;
}

}  // namespace qbcat
