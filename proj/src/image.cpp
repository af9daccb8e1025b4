#include "ril/image.hpp"

#include <fstream>

#include "ril/common.hpp"

namespace ril {

namespace {

// Skips whitespace and '#' comments between PPM header tokens.
int next_header_int(std::istream& in, const std::filesystem::path& path) {
    while (true) {
        int ch = in.peek();
        if (ch == '#') {
            std::string line;
            std::getline(in, line);
        } else if (std::isspace(ch)) {
            in.get();
        } else {
            break;
        }
    }
    int value = -1;
    if (!(in >> value)) throw ValidationError("malformed ppm header: " + path.string());
    return value;
}

}  // namespace

Image read_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open image: " + path.string());
    std::string magic(2, '\0');
    in.read(magic.data(), 2);
    if (magic != "P6") throw ValidationError("unsupported image format (want P6 ppm): " + path.string());
    int w = next_header_int(in, path);
    int h = next_header_int(in, path);
    int maxval = next_header_int(in, path);
    if (w <= 0 || h <= 0 || maxval != 255)
        throw ValidationError("unsupported ppm dimensions/maxval: " + path.string());
    in.get();  // single whitespace after maxval
    Image img(h, w);
    in.read(reinterpret_cast<char*>(img.px.data()), static_cast<std::streamsize>(img.px.size()));
    if (in.gcount() != static_cast<std::streamsize>(img.px.size()))
        throw ValidationError("truncated ppm payload: " + path.string());
    return img;
}

void write_ppm(const std::filesystem::path& path, const Image& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write image: " + path.string());
    out << "P6\n" << img.w << " " << img.h << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.px.data()), static_cast<std::streamsize>(img.px.size()));
}

}  // namespace ril
