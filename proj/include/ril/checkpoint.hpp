#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "ril/model.hpp"

namespace ril {

/// One named float array inside a checkpoint blob.
struct ArrayEntry {
    std::string name;
    std::vector<float> data;
};

/// Binary container: magic, JSON header, then named float32 arrays in order.
/// Byte order is the host's (checkpoints are not meant to cross machines).
void write_array_blob(const std::string& path, const nlohmann::json& header,
                      const std::vector<ArrayEntry>& arrays);
nlohmann::json read_array_blob(const std::string& path, std::vector<ArrayEntry>& arrays);

void save_segnet(const std::string& path, SegNet<float>& net);
SegNet<float> load_segnet(const std::string& path);

void save_discriminator(const std::string& path, Discriminator<float>& d);
Discriminator<float> load_discriminator(const std::string& path);

}  // namespace ril
