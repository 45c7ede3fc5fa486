#include "coopo/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>
#include <sstream>

namespace coopo {

namespace {

std::string cell(double v) { return std::isnan(v) ? std::string() : format_double(v); }

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

double parse_number(const std::string& s, const std::filesystem::path& path, std::size_t line) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw ParseError(path.string() + ": expected a number, got '" + s + "'", line);
    return v;
}

}  // namespace

std::string to_csv_line(const MetricRow& r) {
    if (r.run_id.find_first_of(",\"\n\r") != std::string::npos)
        throw InputError("run_id must not contain commas, quotes or newlines");
    std::ostringstream os;
    os << r.run_id << ',' << r.cycle << ',' << r.phase << ',' << r.step << ',' << cell(r.mean_return) << ','
       << cell(r.policy_loss) << ',' << cell(r.q_loss) << ',' << cell(r.v_loss) << ',' << cell(r.kl_to_prev) << ','
       << cell(r.tv_to_prev) << ',' << cell(r.adv_mean) << ',' << cell(r.adv_absmax) << ',' << r.env_steps_cum << ','
       << r.traj_cum << ',' << cell(r.wall_ms);
    return os.str();
}

MetricsWriter::MetricsWriter(const std::filesystem::path& path) {
    const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
    out_.open(path, std::ios::app);
    if (!out_) throw InputError("cannot open metrics file '" + path.string() + "'");
    if (fresh) {
        for (std::size_t i = 0; i < kMetricColumns.size(); ++i) out_ << (i ? "," : "") << kMetricColumns[i];
        out_ << '\n' << std::flush;
    }
}

void MetricsWriter::write(const MetricRow& row) { out_ << to_csv_line(row) << '\n' << std::flush; }

MetricSink MetricsWriter::sink() {
    return [this](const MetricRow& row) { write(row); };
}

std::size_t CsvTable::column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw SchemaError("missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
}

CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open '" + path.string() + "'");
    CsvTable t;
    std::string line;
    if (!std::getline(in, line)) throw SchemaError(path.string() + ": empty file");
    t.header = split(line);
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto cells = split(line);
        if (cells.size() != t.header.size())
            throw SchemaError(path.string() + " line " + std::to_string(line_no) + ": expected " +
                              std::to_string(t.header.size()) + " cells, got " + std::to_string(cells.size()));
        t.rows.push_back(std::move(cells));
    }
    return t;
}

std::vector<std::pair<double, double>> eval_curve(const CsvTable& table, const std::string& x_column,
                                                  std::size_t step_tag) {
    const std::size_t phase = table.column("phase"), step = table.column("step"), x = table.column(x_column),
                      y = table.column("mean_return");
    std::vector<std::pair<double, double>> out;
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& r = table.rows[i];
        if (r[phase] != "eval" || r[step] != std::to_string(step_tag)) continue;
        out.emplace_back(parse_number(r[x], "metrics", i + 2), parse_number(r[y], "metrics", i + 2));
    }
    return out;
}

std::vector<std::filesystem::path> export_plots(const std::filesystem::path& metrics_dir,
                                                const std::filesystem::path& out_dir, const std::string& x_column) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(metrics_dir)) throw InputError("metrics directory '" + metrics_dir.string() + "' not found");

    // figure -> curve -> x -> per-seed y values
    std::map<std::string, std::map<std::string, std::map<double, std::vector<double>>>> figures;
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(metrics_dir))
        if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw InputError("no metrics files under '" + metrics_dir.string() + "'");

    const fs::path out_abs = fs::weakly_canonical(out_dir);
    std::vector<std::string> header;
    std::size_t used = 0;
    for (const auto& f : files) {
        if (fs::weakly_canonical(f).string().starts_with(out_abs.string() + "/")) continue;
        const CsvTable t = read_csv(f);
        if (header.empty()) header = t.header;
        if (t.header != header) throw SchemaError(f.string() + ": column set differs from the other metrics files");
        if (t.header != kMetricColumns) throw SchemaError(f.string() + ": not a metrics file");
        const fs::path rel = fs::relative(f.parent_path(), metrics_dir);
        const std::string figure = rel.empty() || rel == "." ? "curves" : rel.generic_string();
        const std::size_t run_col = t.column("run_id");
        const auto points = eval_curve(t, x_column, kEvalAfter);
        if (t.rows.empty()) continue;
        std::string curve = t.rows.front()[run_col];
        if (const auto pos = curve.rfind("/s"); pos != std::string::npos) curve = curve.substr(0, pos);
        for (const auto& [x, y] : points) figures[figure][curve][x].push_back(y);
        ++used;
    }
    if (used == 0) throw InputError("no metrics files under '" + metrics_dir.string() + "'");

    std::vector<fs::path> written;
    for (const auto& [figure, curves] : figures) {
        const fs::path path = out_dir / (figure + ".csv");
        fs::create_directories(path.parent_path());
        std::ofstream os(path, std::ios::trunc);
        if (!os) throw InputError("cannot write '" + path.string() + "'");
        os << "curve,x,y,y_lo,y_hi\n";
        for (const auto& [curve, points] : curves)
            for (const auto& [x, ys] : points) {
                double sum = 0.0;
                for (double v : ys) sum += v;
                const auto [lo, hi] = std::minmax_element(ys.begin(), ys.end());
                os << curve << ',' << format_double(x) << ',' << format_double(sum / static_cast<double>(ys.size()))
                   << ',' << format_double(*lo) << ',' << format_double(*hi) << '\n';
            }
        written.push_back(path);
    }
    return written;
}

}  // namespace coopo
