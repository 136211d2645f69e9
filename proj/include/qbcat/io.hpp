#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qbcat/schema.hpp"
#include "qbcat/tensor.hpp"

namespace qbcat {

// QBCF feature store, bit-exact:
//   magic "QBCF" | u32 version=1 | u32 rows | u32 dim | rows*dim float32,
// all integers and floats little-endian, payload row-major.
void save_feature_store(const std::string& path, const Mat<float>& m);
Mat<float> load_feature_store(const std::string& path);

// Triples are newline-delimited JSON records:
//   {"image_id":3,"subject_box":12,"kind":"relation","predicate":"p04","object_box":13}
//   {"image_id":3,"subject_box":12,"kind":"attribute","attribute":"a07"}
// Attribute records may carry "predicate"; it must then equal the reserved
// "has attribute" name. Class names are validated against the dictionary and
// box indices against the feature store.
void save_triples(const std::string& path, const std::vector<Triple>& triples,
                  const ClassDictionary& dict);
std::vector<Triple> load_triples(const std::string& path, const Mat<float>& features,
                                 const ClassDictionary& dict);

// Dictionary file: "[attributes]" section then "[predicates]" section, one
// "name count" line per class (count is the last whitespace-separated token,
// the name may contain spaces). Head/tail flags are recomputed on load with
// the Mean rule.
void save_dictionary(const std::string& path, const ClassDictionary& dict);
ClassDictionary load_dictionary(const std::string& path);

// Checkpoint container: magic "QBCK" | u32 version=1 | u32 tensor count, then
// per tensor a u16 name length, the name bytes, and a QBCF block.
struct NamedTensor {
    std::string name;
    Mat<float> value;
};
void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_checkpoint(const std::string& path);

}  // namespace qbcat
