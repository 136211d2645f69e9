#include "qbcat/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "qbcat/rng.hpp"

namespace qbcat {

void SynthConfig::validate() const {
    if (n_attr_classes < 1 || n_pred_classes < 1 || n_images < 1 || feature_dim < 1)
        throw std::invalid_argument("synth config: counts must be >= 1");
    if (!(zipf_exponent > 0)) throw std::invalid_argument("synth config: zipf_exponent must be > 0");
    if (!(prototype_noise_sigma > 0))
        throw std::invalid_argument("synth config: prototype_noise_sigma must be > 0");
    auto range_ok = [](const std::array<int, 2>& r, int lo) { return r[0] >= lo && r[1] >= r[0]; };
    if (!range_ok(objects_per_image, 1)) throw std::invalid_argument("synth config: bad objects_per_image");
    if (!range_ok(relations_per_image, 0))
        throw std::invalid_argument("synth config: bad relations_per_image");
    if (!range_ok(attributes_per_object, 1))
        throw std::invalid_argument("synth config: bad attributes_per_object");
    if (attributes_per_object[1] > n_attr_classes)
        throw std::invalid_argument("synth config: more attributes per object than classes");
    if (relations_per_image[0] >= 1 && objects_per_image[0] < 2)
        throw std::invalid_argument("synth config: relations require at least 2 objects per image");
    double fsum = split_fractions[0] + split_fractions[1] + split_fractions[2];
    if (std::abs(fsum - 1.0) > 1e-9)
        throw std::invalid_argument("synth config: split fractions must sum to 1");
}

std::vector<double> zipf_class_weights(int n, double s) {
    if (n < 1) throw std::invalid_argument("zipf_class_weights: n must be >= 1");
    if (!(s > 0)) throw std::invalid_argument("zipf_class_weights: s must be > 0");
    std::vector<double> w(n);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        w[i] = std::pow(static_cast<double>(i + 1), -s);
        total += w[i];
    }
    for (double& x : w) x /= total;
    return w;
}

std::vector<Split> split_images(int n_images, const std::array<double, 3>& fractions,
                                std::uint64_t seed) {
    if (n_images < 1) throw std::invalid_argument("split_images: no images");
    // exact counts by largest remainder
    std::array<std::int64_t, 3> counts{};
    std::array<double, 3> remainders{};
    std::int64_t assigned = 0;
    for (int k = 0; k < 3; ++k) {
        double exact = fractions[k] * n_images;
        counts[k] = static_cast<std::int64_t>(std::floor(exact + 1e-12));
        remainders[k] = exact - static_cast<double>(counts[k]);
        assigned += counts[k];
    }
    std::array<int, 3> order = {0, 1, 2};
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return remainders[a] > remainders[b]; });
    for (int k = 0; assigned < n_images; ++k, ++assigned) counts[order[k % 3]] += 1;

    std::vector<std::size_t> ids(n_images);
    std::iota(ids.begin(), ids.end(), 0);
    Rng rng = Rng::stream(seed, "image-split");
    rng.shuffle(ids);
    std::vector<Split> out(n_images);
    std::size_t pos = 0;
    for (int k = 0; k < 3; ++k)
        for (std::int64_t i = 0; i < counts[k]; ++i) out[ids[pos++]] = static_cast<Split>(k);
    return out;
}

namespace {

// Assigns table cells to predicates so the induced marginal tracks the Zipf
// target; cells are processed in decreasing probability mass.
std::vector<std::int32_t> build_predicate_table(int n_attr, int n_pred,
                                                const std::vector<double>& attr_w,
                                                const std::vector<double>& pred_w) {
    struct Cell {
        double mass;
        int idx;
    };
    std::vector<Cell> cells;
    cells.reserve(static_cast<std::size_t>(n_attr) * n_attr);
    for (int a = 0; a < n_attr; ++a)
        for (int b = 0; b < n_attr; ++b)
            cells.push_back({attr_w[a] * attr_w[b], a * n_attr + b});
    std::sort(cells.begin(), cells.end(), [](const Cell& x, const Cell& y) {
        if (x.mass != y.mass) return x.mass > y.mass;
        return x.idx < y.idx;
    });

    std::vector<double> assigned(n_pred, 0.0);
    std::vector<std::int32_t> table(cells.size(), 0);
    for (const Cell& c : cells) {
        int best = 0;
        double best_deficit = pred_w[0] - assigned[0];
        for (int p = 1; p < n_pred; ++p) {
            double d = pred_w[p] - assigned[p];
            if (d > best_deficit) {
                best_deficit = d;
                best = p;
            }
        }
        table[c.idx] = best;
        assigned[best] += c.mass;
    }
    return table;
}

struct ObjectDraw {
    std::int32_t box_row;
    std::vector<int> attrs;  // first entry is the dominant class
};

}  // namespace

std::vector<std::size_t> SynthDataset::triples_of_split(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < data.triples.size(); ++i)
        if (image_split[data.triples[i].image_id] == s) out.push_back(i);
    return out;
}

SynthDataset generate(const SynthConfig& cfg) {
    cfg.validate();
    const int na = cfg.n_attr_classes;
    const int np = cfg.n_pred_classes;
    const std::vector<double> attr_w = zipf_class_weights(na, cfg.zipf_exponent);
    const std::vector<double> pred_w = zipf_class_weights(np, cfg.zipf_exponent);
    std::vector<std::int32_t> table = build_predicate_table(na, np, attr_w, pred_w);

    // induced predicate marginal of the table under dominant-attribute pairs
    std::vector<double> induced(np, 0.0);
    for (int a = 0; a < na; ++a)
        for (int b = 0; b < na; ++b) induced[table[a * na + b]] += attr_w[a] * attr_w[b];
    // acceptance scale: accepted marginal ends up proportional to pred_w
    double c_scale = 0.0;
    for (int p = 0; p < np; ++p)
        if (induced[p] > 0) c_scale = std::max(c_scale, pred_w[p] / induced[p]);

    Mat<float> prototypes(na, cfg.feature_dim);
    {
        Rng rng = Rng::stream(cfg.seed, "prototypes");
        for (auto& v : prototypes.data) v = static_cast<float>(rng.real01());
    }

    std::vector<Triple> triples;
    std::vector<std::vector<float>> feature_rows;
    for (int img = 0; img < cfg.n_images; ++img) {
        Rng rng = Rng::stream(cfg.seed, "image", static_cast<std::uint64_t>(img));
        int n_obj = cfg.objects_per_image[0] +
                    static_cast<int>(rng.below(cfg.objects_per_image[1] - cfg.objects_per_image[0] + 1));
        std::vector<ObjectDraw> objs(n_obj);
        for (auto& o : objs) {
            int k = cfg.attributes_per_object[0] +
                    static_cast<int>(rng.below(cfg.attributes_per_object[1] - cfg.attributes_per_object[0] + 1));
            while (static_cast<int>(o.attrs.size()) < k) {
                int a = static_cast<int>(rng.weighted_pick(attr_w));
                if (std::find(o.attrs.begin(), o.attrs.end(), a) == o.attrs.end()) o.attrs.push_back(a);
            }
            std::vector<float> f(cfg.feature_dim, 0.0f);
            for (int a : o.attrs)
                for (int d = 0; d < cfg.feature_dim; ++d) f[d] += prototypes.at(a, d);
            for (int d = 0; d < cfg.feature_dim; ++d) {
                f[d] /= static_cast<float>(o.attrs.size());
                f[d] += static_cast<float>(cfg.prototype_noise_sigma * rng.normal());
            }
            o.box_row = static_cast<std::int32_t>(feature_rows.size());
            feature_rows.push_back(std::move(f));
            for (int a : o.attrs) {
                Triple t;
                t.image_id = img;
                t.subject_box = o.box_row;
                t.kind = TripleKind::Attribute;
                t.attribute = a;
                t.predicate = np;  // "has attribute" slot, fixed after relabel
                triples.push_back(t);
            }
        }
        int n_rel = cfg.relations_per_image[0] +
                    static_cast<int>(rng.below(cfg.relations_per_image[1] - cfg.relations_per_image[0] + 1));
        if (n_obj < 2) n_rel = 0;
        for (int r = 0; r < n_rel; ++r) {
            int si = 0, oi = 0, pred = 0;
            // rejection reshapes the predicate marginal toward the Zipf target
            for (int tries = 0; tries < 200; ++tries) {
                si = static_cast<int>(rng.below(n_obj));
                do {
                    oi = static_cast<int>(rng.below(n_obj));
                } while (oi == si);
                pred = table[objs[si].attrs[0] * na + objs[oi].attrs[0]];
                double accept = pred_w[pred] / (c_scale * induced[pred]);
                if (rng.real01() < accept) break;
            }
            Triple t;
            t.image_id = img;
            t.kind = TripleKind::Relation;
            t.subject_box = objs[si].box_row;
            t.object_box = objs[oi].box_row;
            t.predicate = pred;
            triples.push_back(t);
        }
    }

    SynthDataset out;
    out.image_split = split_images(cfg.n_images, cfg.split_fractions, cfg.seed);

    // train counts drive the relabeling and the dictionary
    std::vector<std::int64_t> attr_count(na, 0), pred_count(np, 0);
    std::int64_t has_attr_count = 0;
    for (const Triple& t : triples) {
        if (out.image_split[t.image_id] != Split::Train) continue;
        if (t.kind == TripleKind::Attribute) {
            attr_count[t.attribute]++;
            has_attr_count++;
        } else {
            pred_count[t.predicate]++;
        }
    }

    // relabel so id order == descending train count (ties keep old order)
    auto rank_map = [](const std::vector<std::int64_t>& counts) {
        std::vector<int> order(counts.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](int a, int b) { return counts[a] > counts[b]; });
        std::vector<int> old_to_new(counts.size());
        for (std::size_t i = 0; i < order.size(); ++i) old_to_new[order[i]] = static_cast<int>(i);
        return old_to_new;
    };
    std::vector<int> attr_map = rank_map(attr_count);
    std::vector<int> pred_map = rank_map(pred_count);

    for (Triple& t : triples) {
        if (t.kind == TripleKind::Attribute) {
            t.attribute = attr_map[t.attribute];
            t.predicate = np;  // final "has attribute" id
        } else {
            t.predicate = pred_map[t.predicate];
        }
    }
    out.attr_prototypes = Mat<float>(na, cfg.feature_dim);
    for (int a = 0; a < na; ++a)
        for (int d = 0; d < cfg.feature_dim; ++d)
            out.attr_prototypes.at(attr_map[a], d) = prototypes.at(a, d);
    out.predicate_table.assign(static_cast<std::size_t>(na) * na, 0);
    for (int a = 0; a < na; ++a)
        for (int b = 0; b < na; ++b)
            out.predicate_table[attr_map[a] * na + attr_map[b]] = pred_map[table[a * na + b]];

    ClassDictionary dict;
    dict.attr_names.resize(na);
    dict.attr_counts.resize(na);
    for (int a = 0; a < na; ++a) {
        int id = attr_map[a];
        char buf[16];
        std::snprintf(buf, sizeof(buf), "a%02d", id);
        dict.attr_names[id] = buf;
        dict.attr_counts[id] = attr_count[a];
    }
    dict.pred_names.resize(np + 1);
    dict.pred_counts.resize(np + 1);
    for (int p = 0; p < np; ++p) {
        int id = pred_map[p];
        char buf[16];
        std::snprintf(buf, sizeof(buf), "p%02d", id);
        dict.pred_names[id] = buf;
        dict.pred_counts[id] = pred_count[p];
    }
    dict.pred_names[np] = "has attribute";
    dict.pred_counts[np] = has_attr_count;
    dict.has_attribute_id = np;
    dict.rebuild_index();
    apply_head_tail(dict, ThresholdRule::Mean);

    out.data.features = Mat<float>(feature_rows.size(), cfg.feature_dim);
    for (std::size_t i = 0; i < feature_rows.size(); ++i)
        std::copy(feature_rows[i].begin(), feature_rows[i].end(), out.data.features.row(i));
    out.data.triples = std::move(triples);
    out.data.dict = std::move(dict);
    out.data.build_indices();
    return out;
}

}  // namespace qbcat
