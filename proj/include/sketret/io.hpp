#pragma once

#include <map>
#include <string>

#include "sketret/data.hpp"
#include "sketret/tensor.hpp"

namespace sketret {

// Named-tensor container: magic "BDAS", u16 version, u32 entry count; per
// entry a u16 name length, UTF-8 name, u8 rank, u32 dims, little-endian f64
// data; trailing CRC32 over every preceding byte.
void write_tensor_container(const std::string& path,
                            const std::map<std::string, Tensor>& entries);
std::map<std::string, Tensor> read_tensor_container(const std::string& path);

// Dataset directory layout: dataset.bdas (tensors) + prototypes.txt (the
// embedding text format, which also carries the class names).
void save_dataset(const DatasetBundle& bundle, const std::string& dir);
DatasetBundle load_dataset(const std::string& dir);

}  // namespace sketret
