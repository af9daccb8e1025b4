#include "ril/checkpoint.hpp"

#include <cstdint>
#include <fstream>

#include "ril/common.hpp"

namespace ril {

namespace {

constexpr char kMagic[8] = {'R', 'I', 'L', 'B', 'L', 'O', 'B', '1'};

void write_u32(std::ofstream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }
void write_u64(std::ofstream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); }

std::uint32_t read_u32(std::ifstream& in) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    return v;
}

std::uint64_t read_u64(std::ifstream& in) {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 8);
    return v;
}

/// Collects the network state as named arrays, in visitation order.
template <typename Net>
std::vector<ArrayEntry> collect_state(Net& net) {
    std::vector<ArrayEntry> arrays;
    net.visit_state([&](const std::string& name, Tensor<float>& t, Tensor<float>*) {
        arrays.push_back({name, t.v});
    });
    return arrays;
}

/// Writes arrays back into the network, requiring an exact name/size match.
template <typename Net>
void restore_state(Net& net, const std::vector<ArrayEntry>& arrays, const std::string& path) {
    std::size_t idx = 0;
    net.visit_state([&](const std::string& name, Tensor<float>& t, Tensor<float>*) {
        if (idx >= arrays.size())
            throw ValidationError(format("%s: checkpoint missing field %s", path.c_str(), name.c_str()));
        const ArrayEntry& e = arrays[idx++];
        if (e.name != name)
            throw ValidationError(
                format("%s: checkpoint field %s where %s was expected", path.c_str(), e.name.c_str(), name.c_str()));
        if (e.data.size() != t.v.size())
            throw ValidationError(format("%s: field %s has %zu values, expected %zu", path.c_str(), name.c_str(),
                                         e.data.size(), t.v.size()));
        t.v = e.data;
    });
    if (idx != arrays.size())
        throw ValidationError(format("%s: checkpoint has %zu unexpected trailing arrays, first is %s", path.c_str(),
                                     arrays.size() - idx, arrays[idx].name.c_str()));
}

nlohmann::json load_header(const std::string& path, const std::string& expected_kind,
                           std::vector<ArrayEntry>& arrays) {
    nlohmann::json header = read_array_blob(path, arrays);
    std::string kind = header.value("kind", "");
    if (kind != expected_kind)
        throw ValidationError(
            format("%s: checkpoint kind is '%s', expected '%s'", path.c_str(), kind.c_str(), expected_kind.c_str()));
    return header;
}

}  // namespace

void write_array_blob(const std::string& path, const nlohmann::json& header,
                      const std::vector<ArrayEntry>& arrays) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError(format("cannot open %s for writing", path.c_str()));
    out.write(kMagic, sizeof(kMagic));
    std::string htext = header.dump();
    write_u32(out, static_cast<std::uint32_t>(htext.size()));
    out.write(htext.data(), static_cast<std::streamsize>(htext.size()));
    write_u32(out, static_cast<std::uint32_t>(arrays.size()));
    for (const ArrayEntry& e : arrays) {
        write_u32(out, static_cast<std::uint32_t>(e.name.size()));
        out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
        write_u64(out, e.data.size());
        out.write(reinterpret_cast<const char*>(e.data.data()),
                  static_cast<std::streamsize>(e.data.size() * sizeof(float)));
    }
    if (!out) throw ValidationError(format("write failed for %s", path.c_str()));
}

nlohmann::json read_array_blob(const std::string& path, std::vector<ArrayEntry>& arrays) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError(format("cannot open %s", path.c_str()));
    char magic[8] = {};
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw ValidationError(format("%s is not a checkpoint blob", path.c_str()));
    std::uint32_t hlen = read_u32(in);
    std::string htext(hlen, '\0');
    in.read(htext.data(), hlen);
    if (!in) throw ValidationError(format("%s: truncated header", path.c_str()));
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(htext);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(format("%s: bad header json: %s", path.c_str(), e.what()));
    }
    std::uint32_t count = read_u32(in);
    arrays.clear();
    arrays.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        std::uint32_t nlen = read_u32(in);
        ArrayEntry e;
        e.name.resize(nlen);
        in.read(e.name.data(), nlen);
        std::uint64_t numel = read_u64(in);
        e.data.resize(numel);
        in.read(reinterpret_cast<char*>(e.data.data()), static_cast<std::streamsize>(numel * sizeof(float)));
        if (!in) throw ValidationError(format("%s: truncated while reading array %u", path.c_str(), i));
        arrays.push_back(std::move(e));
    }
    return header;
}

void save_segnet(const std::string& path, SegNet<float>& net) {
    nlohmann::json header = {
        {"kind", "segnet"},
        {"stages", net.spec.stages},
        {"base_channels", net.spec.base_channels},
        {"input_h", net.spec.input_h},
        {"input_w", net.spec.input_w},
        {"k_max", net.spec.k_max},
    };
    write_array_blob(path, header, collect_state(net));
}

SegNet<float> load_segnet(const std::string& path) {
    std::vector<ArrayEntry> arrays;
    nlohmann::json header = load_header(path, "segnet", arrays);
    BackboneSpec spec;
    spec.stages = header.value("stages", 0);
    spec.base_channels = header.value("base_channels", 0);
    spec.input_h = header.value("input_h", 0);
    spec.input_w = header.value("input_w", 0);
    spec.k_max = header.value("k_max", 0);
    SegNet<float> net;
    net.init(spec, 0);
    restore_state(net, arrays, path);
    return net;
}

void save_discriminator(const std::string& path, Discriminator<float>& d) {
    nlohmann::json header = {
        {"kind", "discriminator"},
        {"in_channels", d.spec.in_channels},
        {"width", d.spec.width},
        {"layers", d.spec.layers},
    };
    std::vector<ArrayEntry> arrays;
    d.visit_params([&](const std::string& name, Tensor<float>& t, Tensor<float>*) {
        arrays.push_back({name, t.v});
    });
    write_array_blob(path, header, arrays);
}

Discriminator<float> load_discriminator(const std::string& path) {
    std::vector<ArrayEntry> arrays;
    nlohmann::json header = load_header(path, "discriminator", arrays);
    DiscriminatorSpec spec;
    spec.in_channels = header.value("in_channels", 0);
    spec.width = header.value("width", 0);
    spec.layers = header.value("layers", 0);
    Discriminator<float> d;
    d.init(spec, 0);
    std::size_t idx = 0;
    d.visit_params([&](const std::string& name, Tensor<float>& t, Tensor<float>*) {
        if (idx >= arrays.size())
            throw ValidationError(format("%s: checkpoint missing field %s", path.c_str(), name.c_str()));
        const ArrayEntry& e = arrays[idx++];
        if (e.name != name || e.data.size() != t.v.size())
            throw ValidationError(format("%s: checkpoint field mismatch at %s", path.c_str(), name.c_str()));
        t.v = e.data;
    });
    return d;
}

}  // namespace ril
