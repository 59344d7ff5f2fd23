#include "ldm/io.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ldm/common.hpp"

static_assert(std::endian::native == std::endian::little, "array files are little-endian");

namespace ldm::io {

void write_array_file(const std::string& path, const json& meta, const std::vector<NamedArray>& arrays) {
    json header;
    header["meta"] = meta;
    header["arrays"] = json::array();
    for (const auto& a : arrays) header["arrays"].push_back({{"name", a.name}, {"shape", a.shape}});
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::ConfigInvalid, "cannot open for writing: " + path);
    out << header.dump() << '\n';
    for (const auto& a : arrays)
        out.write(reinterpret_cast<const char*>(a.data.data()), std::streamsize(a.data.size() * sizeof(double)));
}

std::pair<json, std::vector<NamedArray>> read_array_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::ConfigInvalid, "cannot open: " + path);
    std::string line;
    std::getline(in, line);
    json header = json::parse(line);
    std::vector<NamedArray> arrays;
    for (const auto& spec : header["arrays"]) {
        NamedArray a;
        a.name = spec["name"].get<std::string>();
        a.shape = spec["shape"].get<std::vector<int64_t>>();
        int64_t n = 1;
        for (int64_t d : a.shape) n *= d;
        a.data.resize(size_t(n));
        in.read(reinterpret_cast<char*>(a.data.data()), std::streamsize(a.data.size() * sizeof(double)));
        if (!in) fail(ErrorKind::ConfigInvalid, "truncated array file: " + path);
        arrays.push_back(std::move(a));
    }
    return {header["meta"], std::move(arrays)};
}

void save_checkpoint(const std::string& path, const NamedParams& params) {
    std::vector<NamedArray> arrays;
    for (const auto& [name, t] : params)
        arrays.push_back({name, t.shape(), std::vector<double>(t.data().begin(), t.data().end())});
    write_array_file(path, json{{"kind", "checkpoint"}}, arrays);
}

void load_checkpoint(const std::string& path, NamedParams& params) {
    auto [meta, arrays] = read_array_file(path);
    if (arrays.size() != params.size()) fail(ErrorKind::ConfigInvalid, "checkpoint tensor count mismatch");
    for (size_t i = 0; i < params.size(); ++i) {
        auto& [name, t] = params[i];
        if (arrays[i].name != name) fail(ErrorKind::ConfigInvalid, "checkpoint name mismatch: " + arrays[i].name);
        if (arrays[i].shape != t.shape()) fail(ErrorKind::ConfigInvalid, "checkpoint shape mismatch: " + name);
        auto dst = t.data_mut();
        for (size_t j = 0; j < arrays[i].data.size(); ++j) dst[j] = arrays[i].data[j];
    }
}

CsvWriter::CsvWriter(const std::string& path, const std::vector<std::string>& columns)
    : path_(path), ncols_(columns.size()) {
    for (size_t i = 0; i < columns.size(); ++i) {
        buf_ += columns[i];
        buf_ += (i + 1 < columns.size()) ? ',' : '\n';
    }
}

void CsvWriter::row(const std::vector<double>& values) {
    if (values.size() != ncols_) fail(ErrorKind::ShapeMismatch, "csv row width mismatch");
    char tmp[64];
    for (size_t i = 0; i < values.size(); ++i) {
        std::snprintf(tmp, sizeof tmp, "%.17g", values[i]);
        buf_ += tmp;
        buf_ += (i + 1 < values.size()) ? ',' : '\n';
    }
}

void CsvWriter::flush() {
    if (path_.empty()) return;
    std::ofstream out(path_, std::ios::binary);
    out << buf_;
}

namespace {

struct Extent {
    double lo = 1e300, hi = -1e300;
    void take(double v) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    double map(double v, double a, double b) const {
        double span = hi - lo;
        if (span <= 0) span = 1.0;
        return a + (v - lo) / span * (b - a);
    }
};

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string hsv_hex(double h) {
    h = h - std::floor(h);
    double r = 0, g = 0, b = 0;
    double i = std::floor(h * 6.0), f = h * 6.0 - i;
    double q = 1.0 - f;
    switch (int(i) % 6) {
        case 0: r = 1, g = f, b = 0; break;
        case 1: r = q, g = 1, b = 0; break;
        case 2: r = 0, g = 1, b = f; break;
        case 3: r = 0, g = q, b = 1; break;
        case 4: r = f, g = 0, b = 1; break;
        case 5: r = 1, g = 0, b = q; break;
    }
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", int(r * 220), int(g * 220), int(b * 220));
    return buf;
}

}  // namespace

void svg_line_plot(const std::string& path, const std::vector<Series>& series, const std::string& title,
                   bool log_y) {
    const double w = 640, h = 420, ml = 60, mr = 20, mt = 40, mb = 40;
    Extent ex, ey;
    for (const auto& s : series)
        for (size_t i = 0; i < s.xs.size(); ++i) {
            ex.take(s.xs[i]);
            double y = s.ys[i];
            if (log_y) y = std::log10(std::max(y, 1e-300));
            ey.take(y);
        }
    std::ostringstream svg;
    svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h << "'>\n";
    svg << "<rect width='100%' height='100%' fill='white'/>\n";
    svg << "<text x='" << w / 2 << "' y='24' text-anchor='middle' font-size='16'>" << title << "</text>\n";
    svg << "<rect x='" << ml << "' y='" << mt << "' width='" << w - ml - mr << "' height='" << h - mt - mb
        << "' fill='none' stroke='#888'/>\n";
    for (size_t si = 0; si < series.size(); ++si) {
        const auto& s = series[si];
        svg << "<polyline fill='none' stroke='" << kPalette[si % 6] << "' stroke-width='1.5' points='";
        for (size_t i = 0; i < s.xs.size(); ++i) {
            double y = s.ys[i];
            if (log_y) y = std::log10(std::max(y, 1e-300));
            svg << ex.map(s.xs[i], ml, w - mr) << ',' << ey.map(y, h - mb, mt) << ' ';
        }
        svg << "'/>\n";
        svg << "<text x='" << w - mr - 150 << "' y='" << mt + 18 + 16 * double(si) << "' font-size='12' fill='"
            << kPalette[si % 6] << "'>" << s.label << "</text>\n";
    }
    char lo[32], hi[32];
    std::snprintf(lo, sizeof lo, "%.3g", log_y ? std::pow(10, ey.lo) : ey.lo);
    std::snprintf(hi, sizeof hi, "%.3g", log_y ? std::pow(10, ey.hi) : ey.hi);
    svg << "<text x='8' y='" << h - mb << "' font-size='11'>" << lo << "</text>\n";
    svg << "<text x='8' y='" << mt + 10 << "' font-size='11'>" << hi << "</text>\n";
    svg << "</svg>\n";
    write_text_file(path, svg.str());
}

void svg_scatter_plot(const std::string& path, const std::vector<double>& xs, const std::vector<double>& ys,
                      const std::vector<double>& hue, const std::string& title) {
    const double w = 480, h = 480, m = 40;
    Extent ex, ey;
    for (double v : xs) ex.take(v);
    for (double v : ys) ey.take(v);
    std::ostringstream svg;
    svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h << "'>\n";
    svg << "<rect width='100%' height='100%' fill='white'/>\n";
    svg << "<text x='" << w / 2 << "' y='24' text-anchor='middle' font-size='15'>" << title << "</text>\n";
    for (size_t i = 0; i < xs.size(); ++i) {
        std::string color = hue.empty() ? "#1f77b4" : hsv_hex(hue[i]);
        svg << "<circle cx='" << ex.map(xs[i], m, w - m) << "' cy='" << ey.map(ys[i], h - m, m)
            << "' r='2' fill='" << color << "' fill-opacity='0.7'/>\n";
    }
    svg << "</svg>\n";
    write_text_file(path, svg.str());
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::ConfigInvalid, "cannot open for writing: " + path);
    out << content;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::ConfigInvalid, "cannot open: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

uint64_t json_content_hash(const json& j) { return fnv1a64(j.dump()); }

std::string hash_hex(uint64_t h) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace ldm::io
