#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "ldm/nets.hpp"
#include "ldm/tensor.hpp"

namespace ldm::io {

using nlohmann::json;

/// On-disk container: one line of compact JSON (meta + array manifest),
/// then the arrays' float64 payloads back to back, little-endian.
struct NamedArray {
    std::string name;
    std::vector<int64_t> shape;
    std::vector<double> data;
};

void write_array_file(const std::string& path, const json& meta, const std::vector<NamedArray>& arrays);
std::pair<json, std::vector<NamedArray>> read_array_file(const std::string& path);

/// Parameter checkpoints are array files whose meta records tensor names/shapes.
void save_checkpoint(const std::string& path, const NamedParams& params);
/// Loads values into existing tensors; names and shapes must match exactly.
void load_checkpoint(const std::string& path, NamedParams& params);

class CsvWriter {
public:
    CsvWriter() = default;
    CsvWriter(const std::string& path, const std::vector<std::string>& columns);
    void row(const std::vector<double>& values);
    void flush();

private:
    std::string path_;
    std::string buf_;
    size_t ncols_ = 0;
};

struct Series {
    std::string label;
    std::vector<double> xs, ys;
};

void svg_line_plot(const std::string& path, const std::vector<Series>& series, const std::string& title,
                   bool log_y = false);
/// Scatter with per-point hue in [0,1) (HSV wheel); useful for latents colored
/// by a ground-truth angle.
void svg_scatter_plot(const std::string& path, const std::vector<double>& xs, const std::vector<double>& ys,
                      const std::vector<double>& hue, const std::string& title);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

uint64_t json_content_hash(const json& j);
std::string hash_hex(uint64_t h);

}  // namespace ldm::io
