#include "exref/heatmap.hpp"

#include <cmath>
#include <cstdio>

#include "exref/error.hpp"
#include "exref/io_util.hpp"

namespace exref {

namespace {

std::string escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&#39;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

std::string render_heatmap(const std::vector<HeatmapPanel>& panels, const std::string& heading) {
  double scale = 0.0;
  for (const auto& p : panels) {
    if (p.tokens.size() != p.scores.size()) throw DataError("heat map needs one score per token");
    for (double s : p.scores) scale = std::max(scale, std::abs(s));
  }
  std::string html;
  html += "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>" + escape(heading) + "</title>\n";
  html += "<style>\nbody{font-family:sans-serif;margin:2em}\n.map{margin:1em 0;line-height:2.2}\n"
          ".tok{padding:0.2em 0.35em;margin:0 1px;border-radius:3px}\n.cap{color:#555;font-size:90%}\n</style>\n";
  html += "</head>\n<body>\n<h1>" + escape(heading) + "</h1>\n";
  for (const auto& p : panels) {
    html += "<div class=\"map\">\n<div class=\"cap\">" + escape(p.title) + " &middot; predicted " +
            escape(p.predicted) + "</div>\n";
    for (std::size_t i = 0; i < p.tokens.size(); ++i) {
      const double s = p.scores[i];
      const double toward_positive = p.predicted_is_positive ? s : -s;
      const double alpha = scale > 0.0 ? std::abs(s) / scale : 0.0;
      const char* rgb = toward_positive > 0 ? "220,40,40" : "40,90,220";
      html += "<span class=\"tok\" data-score=\"" + format_double(s) + "\" style=\"background:rgba(" + rgb + "," +
              fixed(alpha, 4) + ")\">" + escape(p.tokens[i]) + "</span>\n";
    }
    html += "</div>\n";
  }
  html += "</body>\n</html>\n";
  return html;
}

void write_heatmap(const std::vector<HeatmapPanel>& panels, const std::string& heading, const std::string& path) {
  write_file(path, render_heatmap(panels, heading));
}

}  // namespace exref
