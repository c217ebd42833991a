#include "demorl/report_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace demorl {

void write_run_csv(const std::string& path, const RunLog& log) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_run_csv: cannot open " + path);
    out.precision(17);
    out << "epoch,env_steps,mean_eval_return,std_eval_return,d_env_size,d_mpc_size,"
           "wall_seconds\n";
    for (const RunLogRow& r : log.rows) {
        out << r.epoch << ',' << r.env_steps << ',' << r.mean_eval_return << ','
            << r.std_eval_return << ',' << r.d_env_size << ',' << r.d_mpc_size << ','
            << r.wall_seconds << '\n';
    }
    if (!out) throw std::runtime_error("write_run_csv: write failed");
}

RunLog parse_run_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("parse_run_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line))
        throw std::runtime_error("parse_run_csv: empty file " + path);
    RunLog log;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(row, field, ',')) fields.push_back(field);
        if (fields.size() != 7)
            throw std::runtime_error("parse_run_csv: bad row '" + line + "'");
        RunLogRow r;
        r.epoch = std::size_t(std::stoull(fields[0]));
        r.env_steps = std::size_t(std::stoull(fields[1]));
        r.mean_eval_return = std::stod(fields[2]);
        r.std_eval_return = std::stod(fields[3]);
        r.d_env_size = std::size_t(std::stoull(fields[4]));
        r.d_mpc_size = std::size_t(std::stoull(fields[5]));
        r.wall_seconds = std::stod(fields[6]);
        log.rows.push_back(r);
    }
    return log;
}

CurveStats aggregate_curves(const std::vector<RunLog>& logs) {
    if (logs.empty()) throw std::runtime_error("aggregate_curves: no logs");
    std::size_t epochs = logs[0].rows.size();
    for (const RunLog& log : logs) epochs = std::min(epochs, log.rows.size());
    CurveStats stats;
    for (std::size_t e = 0; e < epochs; ++e) {
        double mean = 0.0;
        for (const RunLog& log : logs) mean += log.rows[e].mean_eval_return;
        mean /= double(logs.size());
        double var = 0.0;
        for (const RunLog& log : logs) {
            const double d = log.rows[e].mean_eval_return - mean;
            var += d * d;
        }
        stats.x.push_back(double(e));
        stats.mean.push_back(mean);
        stats.stddev.push_back(std::sqrt(var / double(logs.size())));
    }
    return stats;
}

namespace {

struct PlotScale {
    double x_lo, x_hi, y_lo, y_hi;
    double width, height, margin;

    double px(double x) const {
        return margin + (x - x_lo) / std::max(x_hi - x_lo, 1e-12) * (width - 2 * margin);
    }
    double py(double y) const {
        return height - margin -
               (y - y_lo) / std::max(y_hi - y_lo, 1e-12) * (height - 2 * margin);
    }
};

}  // namespace

void write_curve_svg(const std::string& path, const std::vector<RunLog>& logs,
                     const std::string& title) {
    const CurveStats stats = aggregate_curves(logs);
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_curve_svg: cannot open " + path);

    PlotScale sc{0.0,
                 std::max(stats.x.back(), 1.0),
                 std::numeric_limits<double>::infinity(),
                 -std::numeric_limits<double>::infinity(),
                 720.0,
                 440.0,
                 56.0};
    for (std::size_t i = 0; i < stats.mean.size(); ++i) {
        sc.y_lo = std::min(sc.y_lo, stats.mean[i] - stats.stddev[i]);
        sc.y_hi = std::max(sc.y_hi, stats.mean[i] + stats.stddev[i]);
    }
    if (sc.y_hi <= sc.y_lo) {
        sc.y_hi = sc.y_lo + 1.0;
        sc.y_lo -= 1.0;
    }

    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << sc.width
        << "\" height=\"" << sc.height << "\" viewBox=\"0 0 " << sc.width << ' '
        << sc.height << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << sc.width / 2 << "\" y=\"24\" text-anchor=\"middle\" "
           "font-family=\"sans-serif\" font-size=\"16\">"
        << title << "</text>\n";

    // axes
    out << "<line x1=\"" << sc.margin << "\" y1=\"" << sc.height - sc.margin
        << "\" x2=\"" << sc.width - sc.margin << "\" y2=\"" << sc.height - sc.margin
        << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << sc.margin << "\" y1=\"" << sc.margin << "\" x2=\""
        << sc.margin << "\" y2=\"" << sc.height - sc.margin
        << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << sc.width / 2 << "\" y=\"" << sc.height - 12
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
           "epoch</text>\n";
    out << "<text x=\"16\" y=\"" << sc.height / 2
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
           "transform=\"rotate(-90 16 "
        << sc.height / 2 << ")\">eval return</text>\n";
    out.precision(6);
    out << "<text x=\"" << sc.margin - 6 << "\" y=\"" << sc.py(sc.y_lo)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">"
        << sc.y_lo << "</text>\n";
    out << "<text x=\"" << sc.margin - 6 << "\" y=\"" << sc.py(sc.y_hi)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">"
        << sc.y_hi << "</text>\n";

    // +-1 std band across seeds (only when a band exists)
    if (logs.size() > 1) {
        out << "<path d=\"M";
        for (std::size_t i = 0; i < stats.x.size(); ++i)
            out << sc.px(stats.x[i]) << ' ' << sc.py(stats.mean[i] + stats.stddev[i])
                << (i + 1 < stats.x.size() ? " L" : " ");
        for (std::size_t i = stats.x.size(); i-- > 0;)
            out << "L" << sc.px(stats.x[i]) << ' '
                << sc.py(stats.mean[i] - stats.stddev[i]) << ' ';
        out << "Z\" fill=\"#4477aa\" fill-opacity=\"0.25\" stroke=\"none\"/>\n";
    }

    out << "<polyline fill=\"none\" stroke=\"#4477aa\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < stats.x.size(); ++i)
        out << sc.px(stats.x[i]) << ',' << sc.py(stats.mean[i]) << ' ';
    out << "\"/>\n</svg>\n";
    if (!out) throw std::runtime_error("write_curve_svg: write failed");
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_text_file: cannot open " + path);
    out << content;
    if (!out) throw std::runtime_error("write_text_file: write failed");
}

void write_demo_csv(const std::string& path, const std::vector<DemoEpisodeRow>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_demo_csv: cannot open " + path);
    out.precision(17);
    out << "episode,unguided_return,guided_return,fallback_steps\n";
    for (const DemoEpisodeRow& r : rows)
        out << r.episode << ',' << r.unguided_return << ',' << r.guided_return << ','
            << r.fallback_steps << '\n';
}

void write_ablation_csv(const std::string& path, const std::vector<AblationRow>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_ablation_csv: cannot open " + path);
    out.precision(17);
    out << "elite_fraction,median_epochs_to_threshold,per_seed\n";
    for (const AblationRow& r : rows) {
        out << r.elite_fraction << ',' << r.median_epochs_to_threshold << ',';
        for (std::size_t i = 0; i < r.per_seed_epochs.size(); ++i)
            out << r.per_seed_epochs[i] << (i + 1 < r.per_seed_epochs.size() ? ';' : ' ');
        out << '\n';
    }
}

}  // namespace demorl
