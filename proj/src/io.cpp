#include "qbcat/io.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace qbcat {

namespace {

using nlohmann::json;

void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is, const char* what) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw std::runtime_error(std::string("truncated ") + what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f32_row_major(std::ostream& os, const Mat<float>& m) {
    static_assert(sizeof(float) == 4);
    // little-endian host assumed; asserted once at store open
    os.write(reinterpret_cast<const char*>(m.data.data()),
             static_cast<std::streamsize>(m.data.size() * 4));
}

void check_little_endian() {
    const std::uint32_t probe = 1;
    unsigned char b;
    std::memcpy(&b, &probe, 1);
    if (b != 1) throw std::runtime_error("QBCF io requires a little-endian host");
}

void write_store_block(std::ostream& os, const Mat<float>& m) {
    os.write("QBCF", 4);
    write_u32(os, 1);
    write_u32(os, static_cast<std::uint32_t>(m.rows));
    write_u32(os, static_cast<std::uint32_t>(m.cols));
    write_f32_row_major(os, m);
}

Mat<float> read_store_block(std::istream& is, const std::string& path) {
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "QBCF", 4) != 0)
        throw std::runtime_error("bad magic in " + path);
    std::uint32_t version = read_u32(is, "QBCF header");
    if (version != 1) throw std::runtime_error("unsupported QBCF version in " + path);
    std::uint32_t rows = read_u32(is, "QBCF header");
    std::uint32_t dim = read_u32(is, "QBCF header");
    if (dim == 0) throw std::runtime_error("QBCF dim is zero in " + path);
    Mat<float> m(rows, dim);
    if (!is.read(reinterpret_cast<char*>(m.data.data()),
                 static_cast<std::streamsize>(m.data.size() * 4)))
        throw std::runtime_error("truncated QBCF payload in " + path);
    return m;
}

}  // namespace

void save_feature_store(const std::string& path, const Mat<float>& m) {
    check_little_endian();
    if (m.cols == 0) throw std::invalid_argument("save_feature_store: dim is zero");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    write_store_block(os, m);
    if (!os) throw std::runtime_error("write failed for " + path);
}

Mat<float> load_feature_store(const std::string& path) {
    check_little_endian();
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path);
    return read_store_block(is, path);
}

void save_triples(const std::string& path, const std::vector<Triple>& triples,
                  const ClassDictionary& dict) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    for (const Triple& t : triples) {
        json j;
        j["image_id"] = t.image_id;
        j["subject_box"] = t.subject_box;
        if (t.kind == TripleKind::Relation) {
            j["kind"] = "relation";
            j["predicate"] = dict.pred_names.at(t.predicate);
            j["object_box"] = t.object_box;
        } else {
            j["kind"] = "attribute";
            j["attribute"] = dict.attr_names.at(t.attribute);
        }
        os << j.dump() << "\n";
    }
    if (!os) throw std::runtime_error("write failed for " + path);
}

std::vector<Triple> load_triples(const std::string& path, const Mat<float>& features,
                                 const ClassDictionary& dict) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path);
    std::vector<Triple> out;
    std::string line;
    std::size_t lineno = 0;
    auto fail = [&](const std::string& msg) {
        throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + msg);
    };
    auto check_box = [&](std::int64_t b) {
        if (b < 0 || static_cast<std::size_t>(b) >= features.rows)
            fail("box index " + std::to_string(b) + " outside feature store (" +
                 std::to_string(features.rows) + " rows)");
        return static_cast<std::int32_t>(b);
    };
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            fail(std::string("invalid record: ") + e.what());
        }
        Triple t;
        t.image_id = j.at("image_id").get<std::int64_t>();
        t.subject_box = check_box(j.at("subject_box").get<std::int64_t>());
        const std::string kind = j.at("kind").get<std::string>();
        if (kind == "relation") {
            t.kind = TripleKind::Relation;
            const std::string pred = j.at("predicate").get<std::string>();
            t.predicate = dict.pred_id(pred);
            if (t.predicate < 0) fail("unknown predicate class '" + pred + "'");
            t.object_box = check_box(j.at("object_box").get<std::int64_t>());
        } else if (kind == "attribute") {
            t.kind = TripleKind::Attribute;
            if (j.contains("predicate")) {
                const std::string pred = j.at("predicate").get<std::string>();
                std::int32_t id = dict.pred_id(pred);
                if (id < 0) fail("unknown predicate class '" + pred + "'");
                if (id != dict.has_attribute_id)
                    fail("attribute record with predicate '" + pred + "'");
            }
            t.predicate = dict.has_attribute_id;
            const std::string attr = j.at("attribute").get<std::string>();
            t.attribute = dict.attr_id(attr);
            if (t.attribute < 0) fail("unknown attribute class '" + attr + "'");
        } else {
            fail("unknown kind '" + kind + "'");
        }
        out.push_back(t);
    }
    return out;
}

void save_dictionary(const std::string& path, const ClassDictionary& dict) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    os << "[attributes]\n";
    for (std::size_t i = 0; i < dict.attr_names.size(); ++i)
        os << dict.attr_names[i] << " " << dict.attr_counts[i] << "\n";
    os << "[predicates]\n";
    for (std::size_t i = 0; i < dict.pred_names.size(); ++i)
        os << dict.pred_names[i] << " " << dict.pred_counts[i] << "\n";
    if (!os) throw std::runtime_error("write failed for " + path);
}

ClassDictionary load_dictionary(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path);
    ClassDictionary dict;
    std::string line;
    int section = 0;  // 0 none, 1 attributes, 2 predicates
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (line == "[attributes]") {
            section = 1;
            continue;
        }
        if (line == "[predicates]") {
            section = 2;
            continue;
        }
        if (section == 0)
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": line outside section");
        auto sp = line.find_last_of(' ');
        if (sp == std::string::npos)
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": missing count");
        std::string name = line.substr(0, sp);
        std::int64_t count = 0;
        try {
            count = std::stoll(line.substr(sp + 1));
        } catch (const std::exception&) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": bad count");
        }
        if (section == 1) {
            dict.attr_names.push_back(name);
            dict.attr_counts.push_back(count);
        } else {
            dict.pred_names.push_back(name);
            dict.pred_counts.push_back(count);
        }
    }
    dict.rebuild_index();
    dict.has_attribute_id = dict.pred_id("has attribute");
    if (dict.has_attribute_id < 0)
        throw std::runtime_error(path + ": no 'has attribute' predicate");
    apply_head_tail(dict, ThresholdRule::Mean);
    return dict;
}

void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors) {
    check_little_endian();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    os.write("QBCK", 4);
    write_u32(os, 1);
    write_u32(os, static_cast<std::uint32_t>(tensors.size()));
    for (const NamedTensor& t : tensors) {
        if (t.name.size() > 0xffff) throw std::invalid_argument("tensor name too long");
        std::uint16_t len = static_cast<std::uint16_t>(t.name.size());
        unsigned char b[2] = {static_cast<unsigned char>(len), static_cast<unsigned char>(len >> 8)};
        os.write(reinterpret_cast<const char*>(b), 2);
        os.write(t.name.data(), len);
        write_store_block(os, t.value);
    }
    if (!os) throw std::runtime_error("write failed for " + path);
}

std::vector<NamedTensor> load_checkpoint(const std::string& path) {
    check_little_endian();
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path);
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "QBCK", 4) != 0)
        throw std::runtime_error("bad magic in " + path);
    if (read_u32(is, "QBCK header") != 1)
        throw std::runtime_error("unsupported QBCK version in " + path);
    std::uint32_t count = read_u32(is, "QBCK header");
    std::vector<NamedTensor> out;
    out.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        unsigned char b[2];
        if (!is.read(reinterpret_cast<char*>(b), 2))
            throw std::runtime_error("truncated QBCK manifest in " + path);
        std::uint16_t len = static_cast<std::uint16_t>(b[0]) | (static_cast<std::uint16_t>(b[1]) << 8);
        std::string name(len, '\0');
        if (!is.read(name.data(), len)) throw std::runtime_error("truncated QBCK manifest in " + path);
        out.push_back({std::move(name), read_store_block(is, path)});
    }
    return out;
}

}  // namespace qbcat
