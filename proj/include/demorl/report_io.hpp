#pragma once

#include <string>
#include <vector>

#include "demorl/experiment.hpp"

namespace demorl {

void write_run_csv(const std::string& path, const RunLog& log);
RunLog parse_run_csv(const std::string& path);

struct CurveStats {
    std::vector<double> x;       // epoch index
    std::vector<double> mean;    // across seeds
    std::vector<double> stddev;  // across seeds (population)
};

CurveStats aggregate_curves(const std::vector<RunLog>& logs);

// Learning-curve plot: one line per campaign mean, +-1 std band when more
// than one seed contributed.
void write_curve_svg(const std::string& path, const std::vector<RunLog>& logs,
                     const std::string& title);

void write_text_file(const std::string& path, const std::string& content);

void write_demo_csv(const std::string& path, const std::vector<DemoEpisodeRow>& rows);

void write_ablation_csv(const std::string& path, const std::vector<AblationRow>& rows);

}  // namespace demorl
