#pragma once

// Text formats for datasets, models, regressions and loss histories.
// Doubles are written in shortest round-trip form, so save -> load is exact.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "capinv/generative.hpp"
#include "capinv/inverse_engine.hpp"

namespace capinv {

namespace io {

inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline double parse_double(std::string_view s) {
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw FormatError("not a number: '" + std::string(s) + "'");
    return v;
}

inline std::size_t parse_count(std::string_view s) {
    s = trim(s);
    std::size_t v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw FormatError("not a count: '" + std::string(s) + "'");
    return v;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = s.find(sep, start);
        out.push_back(trim(s.substr(start, pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline std::vector<double> parse_doubles(std::string_view s, char sep = ',') {
    std::vector<double> out;
    if (trim(s).empty()) return out;
    for (auto tok : split(s, sep)) out.push_back(parse_double(tok));
    return out;
}

inline std::string join(std::span<const double> v, char sep = ',') {
    std::string out;
    for (std::size_t k = 0; k < v.size(); ++k) {
        if (k) out += sep;
        out += format_double(v[k]);
    }
    return out;
}

// "key=value" tokens separated by `sep`.
inline std::map<std::string, std::string> parse_tags(std::string_view line, char sep) {
    std::map<std::string, std::string> tags;
    for (auto tok : split(line, sep)) {
        if (tok.empty()) continue;
        const auto eq = tok.find('=');
        if (eq == std::string_view::npos) {
            tags.emplace(std::string(tok), "");
            continue;
        }
        tags.emplace(std::string(trim(tok.substr(0, eq))), std::string(trim(tok.substr(eq + 1))));
    }
    return tags;
}

inline const std::string& tag(const std::map<std::string, std::string>& tags, const std::string& key) {
    const auto it = tags.find(key);
    if (it == tags.end()) throw FormatError("missing header field '" + key + "'");
    return it->second;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path.string() + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open '" + path.string() + "' for writing");
    out << text;
    if (!out) throw Error("write to '" + path.string() + "' failed");
}

class LineReader {
public:
    explicit LineReader(std::string text) : text_(std::move(text)) {}

    bool next(std::string_view& line) {
        while (pos_ < text_.size()) {
            std::size_t end = text_.find('\n', pos_);
            if (end == std::string::npos) end = text_.size();
            line = trim(std::string_view(text_).substr(pos_, end - pos_));
            pos_ = end + 1;
            ++number_;
            if (!line.empty()) return true;
        }
        return false;
    }

    std::string_view expect() {
        std::string_view line;
        if (!next(line)) throw FormatError("unexpected end of file after line " + std::to_string(number_));
        return line;
    }

    std::size_t line_number() const { return number_; }

private:
    std::string text_;
    std::size_t pos_ = 0;
    std::size_t number_ = 0;
};

}  // namespace io

// Header `grid=21,count=N,v0=...`, then `d,v_0,...,v_{grid^2-1}` per record.
inline std::string dataset_to_string(const Dataset& data) {
    std::string out = "grid=" + std::to_string(data.grid) + ",count=" + std::to_string(data.size()) +
                      ",v0=" + io::format_double(data.v0) + "\n";
    for (const auto& s : data.samples) {
        out += io::format_double(s.d);
        for (double v : s.field) {
            out += ',';
            out += io::format_double(v);
        }
        out += '\n';
    }
    return out;
}

inline Dataset dataset_from_string(std::string text) {
    io::LineReader reader(std::move(text));
    const auto header = io::parse_tags(reader.expect(), ',');
    Dataset data;
    data.grid = io::parse_count(io::tag(header, "grid"));
    data.v0 = io::parse_double(io::tag(header, "v0"));
    const std::size_t count = io::parse_count(io::tag(header, "count"));
    const std::size_t width = data.grid * data.grid;
    std::string_view line;
    while (reader.next(line)) {
        auto values = io::parse_doubles(line);
        if (values.size() != width + 1)
            throw FormatError("dataset: line " + std::to_string(reader.line_number()) + " has " +
                              std::to_string(values.size()) + " values, expected " +
                              std::to_string(width + 1));
        Sample s;
        s.d = values.front();
        s.field.assign(values.begin() + 1, values.end());
        data.samples.push_back(std::move(s));
    }
    if (data.size() != count)
        throw FormatError("dataset: header announces " + std::to_string(count) + " records, found " +
                          std::to_string(data.size()));
    return data;
}

inline void save_dataset(const Dataset& data, const std::filesystem::path& path) {
    io::write_file(path, dataset_to_string(data));
}

inline Dataset load_dataset(const std::filesystem::path& path) {
    return dataset_from_string(io::read_file(path));
}

namespace io {

inline void write_mlp(std::string& out, const std::string& name, const Mlp& net) {
    out += "mlp name=" + name + " layers=";
    for (std::size_t k = 0; k < net.layer_sizes.size(); ++k) {
        if (k) out += ',';
        out += std::to_string(net.layer_sizes[k]);
    }
    out += " hidden=" + to_string(net.hidden_activation) + " output=" + to_string(net.output_activation) + "\n";
    for (std::size_t l = 0; l < net.layers(); ++l) {
        const Matrix& w = net.weights[l];
        out += "weights layer=" + std::to_string(l) + " rows=" + std::to_string(w.rows()) +
               " cols=" + std::to_string(w.cols()) + "\n";
        std::vector<double> row(static_cast<std::size_t>(w.cols()));
        for (Eigen::Index r = 0; r < w.rows(); ++r) {
            for (Eigen::Index c = 0; c < w.cols(); ++c) row[static_cast<std::size_t>(c)] = w(r, c);
            out += join(row) + "\n";
        }
        const RowVector& b = net.biases[l];
        out += "biases layer=" + std::to_string(l) + " size=" + std::to_string(b.size()) + "\n";
        out += join(std::span<const double>(b.data(), static_cast<std::size_t>(b.size()))) + "\n";
    }
}

inline Mlp read_mlp(LineReader& reader, const std::string& name) {
    const auto header = parse_tags(reader.expect(), ' ');
    if (!header.contains("mlp") || tag(header, "name") != name)
        throw FormatError("model: expected mlp block '" + name + "'");
    std::vector<std::size_t> sizes;
    for (auto tok : split(tag(header, "layers"), ',')) sizes.push_back(parse_count(tok));
    Mlp net(sizes, activation_from_string(tag(header, "output")));
    net.hidden_activation = activation_from_string(tag(header, "hidden"));
    for (std::size_t l = 0; l < net.layers(); ++l) {
        const auto wh = parse_tags(reader.expect(), ' ');
        if (!wh.contains("weights") || parse_count(tag(wh, "layer")) != l ||
            parse_count(tag(wh, "rows")) != sizes[l] || parse_count(tag(wh, "cols")) != sizes[l + 1])
            throw FormatError("model: bad weights header for layer " + std::to_string(l));
        for (std::size_t r = 0; r < sizes[l]; ++r) {
            const auto row = parse_doubles(reader.expect());
            if (row.size() != sizes[l + 1]) throw FormatError("model: weight row has wrong width");
            for (std::size_t c = 0; c < row.size(); ++c)
                net.weights[l](static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = row[c];
        }
        const auto bh = parse_tags(reader.expect(), ' ');
        if (!bh.contains("biases") || parse_count(tag(bh, "layer")) != l ||
            parse_count(tag(bh, "size")) != sizes[l + 1])
            throw FormatError("model: bad biases header for layer " + std::to_string(l));
        const auto b = parse_doubles(reader.expect());
        if (b.size() != sizes[l + 1]) throw FormatError("model: bias row has wrong width");
        for (std::size_t c = 0; c < b.size(); ++c) net.biases[l](static_cast<Eigen::Index>(c)) = b[c];
    }
    if (!net.all_finite()) throw FormatError("model: non-finite parameter");
    return net;
}

}  // namespace io

inline std::string model_to_string(const GenerativeModel& model) {
    std::string out = "capinv-model kind=" + to_string(model.kind) +
                      " latent=" + std::to_string(model.latent_dim) + "\n";
    io::write_mlp(out, "encoder", model.encoder);
    io::write_mlp(out, "decoder", model.decoder);
    out += "end\n";
    return out;
}

inline GenerativeModel model_from_string(std::string text) {
    io::LineReader reader(std::move(text));
    const auto header = io::parse_tags(reader.expect(), ' ');
    if (!header.contains("capinv-model")) throw FormatError("model: missing 'capinv-model' header");
    GenerativeModel model;
    model.kind = model_kind_from_string(io::tag(header, "kind"));
    model.latent_dim = io::parse_count(io::tag(header, "latent"));
    model.encoder = io::read_mlp(reader, "encoder");
    model.decoder = io::read_mlp(reader, "decoder");
    if (reader.expect() != "end") throw FormatError("model: missing 'end'");
    model.check();
    return model;
}

inline void save_model(const GenerativeModel& model, const std::filesystem::path& path) {
    io::write_file(path, model_to_string(model));
}

inline GenerativeModel load_model(const std::filesystem::path& path) {
    return model_from_string(io::read_file(path));
}

inline std::string regression_to_string(const RegressionModel& model) {
    return "capinv-regression space=" + to_string(model.space) + " width=" + std::to_string(model.width()) +
           "\nphi=" + io::join(model.phi) + "\nintercept=" + io::format_double(model.intercept) +
           "\nfit_residual=" + io::format_double(model.fit_residual) + "\n";
}

inline RegressionModel regression_from_string(std::string text) {
    io::LineReader reader(std::move(text));
    const auto header = io::parse_tags(reader.expect(), ' ');
    if (!header.contains("capinv-regression")) throw FormatError("regression: missing header");
    RegressionModel model;
    model.space = space_from_string(io::tag(header, "space"));
    const std::size_t width = io::parse_count(io::tag(header, "width"));
    auto field = [&](const std::string& key) {
        const std::string_view line = reader.expect();
        const auto eq = line.find('=');
        if (eq == std::string_view::npos || io::trim(line.substr(0, eq)) != key)
            throw FormatError("regression: expected '" + key + "='");
        return line.substr(eq + 1);
    };
    model.phi = io::parse_doubles(field("phi"));
    if (model.phi.size() != width) throw FormatError("regression: phi width mismatch");
    model.intercept = io::parse_double(field("intercept"));
    model.fit_residual = io::parse_double(field("fit_residual"));
    return model;
}

inline void save_regression(const RegressionModel& model, const std::filesystem::path& path) {
    io::write_file(path, regression_to_string(model));
}

inline RegressionModel load_regression(const std::filesystem::path& path) {
    return regression_from_string(io::read_file(path));
}

inline std::string loss_history_to_string(const std::vector<LossRecord>& history) {
    std::string out = "iteration,total,rec,kld\n";
    for (std::size_t k = 0; k < history.size(); ++k)
        out += std::to_string(k) + "," + io::format_double(history[k].total) + "," +
               io::format_double(history[k].rec) + "," + io::format_double(history[k].kld) + "\n";
    return out;
}

// n x n grid, one row of the field per line.
inline std::string grid_to_csv(const FieldGrid& g) {
    std::string out;
    for (std::size_t r = 0; r < g.n; ++r)
        out += io::join(std::span<const double>(g.values).subspan(r * g.n, g.n)) + "\n";
    return out;
}

}  // namespace capinv
