#ifndef EXREF_HEATMAP_HPP_
#define EXREF_HEATMAP_HPP_

#include <string>
#include <vector>

namespace exref {

struct HeatmapPanel {
  std::string title;
  std::vector<std::string> tokens;
  std::vector<double> scores;  // attribution toward `predicted`
  std::string predicted;
  bool predicted_is_positive = false;
};

// Self-contained HTML with one stacked map per panel. A score that pushes
// toward the positive class is red, one that pushes away is blue; opacity is
// |score| over the largest |score| across all panels.
std::string render_heatmap(const std::vector<HeatmapPanel>& panels, const std::string& heading);
void write_heatmap(const std::vector<HeatmapPanel>& panels, const std::string& heading, const std::string& path);

}  // namespace exref

#endif  // EXREF_HEATMAP_HPP_
