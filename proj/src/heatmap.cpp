#include "sgnet/heatmap.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace sgnet {

HeatmapFormat heatmap_format_from_string(std::string_view s) {
  if (s == "csv") return HeatmapFormat::kCsv;
  if (s == "svg") return HeatmapFormat::kSvg;
  throw std::invalid_argument("unknown heatmap format '" + std::string(s) + "'");
}

namespace {

template <typename T>
void check(const AttentionTrace<T>& trace, const std::vector<std::string>& tokens) {
  if (trace.heads.empty()) throw std::invalid_argument("heatmap: trace has no heads");
  for (const auto& a : trace.heads) {
    if (a.rows() != tokens.size() || a.cols() != tokens.size()) {
      throw ShapeError("heatmap: trace size " + std::to_string(a.rows()) + " != token count " +
                       std::to_string(tokens.size()));
    }
  }
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

constexpr int kCell = 18;
constexpr int kMargin = 70;
constexpr int kGap = 30;

}  // namespace

template <typename T>
std::string heatmap_csv(const AttentionTrace<T>& trace, const std::vector<std::string>& tokens) {
  check(trace, tokens);
  std::ostringstream out;
  out << std::setprecision(std::numeric_limits<T>::max_digits10);
  out << "head,row,col,weight\n";
  for (std::size_t h = 0; h < trace.heads.size(); ++h) {
    const auto& a = trace.heads[h];
    for (std::size_t i = 0; i < a.rows(); ++i) {
      for (std::size_t j = 0; j < a.cols(); ++j) out << h << ',' << i << ',' << j << ',' << a(i, j) << '\n';
    }
  }
  return out.str();
}

template <typename T>
std::string heatmap_svg(const AttentionTrace<T>& trace, const std::vector<std::string>& tokens) {
  check(trace, tokens);
  const int n = static_cast<int>(tokens.size());
  const int panel = kMargin + n * kCell;
  const int width = static_cast<int>(trace.heads.size()) * (panel + kGap);
  const int height = panel + kGap;
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"monospace\" font-size=\"10\">\n";
  for (std::size_t h = 0; h < trace.heads.size(); ++h) {
    const auto& a = trace.heads[h];
    const int x0 = static_cast<int>(h) * (panel + kGap);
    out << "<g class=\"head\" id=\"head" << h << "\">\n";
    out << "<text x=\"" << x0 + kMargin << "\" y=\"12\">head " << h << "</text>\n";
    for (int i = 0; i < n; ++i) {
      const auto label = xml_escape(tokens[static_cast<std::size_t>(i)]);
      const int y = kGap + kMargin + i * kCell;
      out << "<text x=\"" << x0 + kMargin - 4 << "\" y=\"" << y + kCell - 5 << "\" text-anchor=\"end\">" << label
          << "</text>\n";
      const int cx = x0 + kMargin + i * kCell + kCell / 2;
      out << "<text transform=\"translate(" << cx << "," << kGap + kMargin - 4
          << ") rotate(-90)\" text-anchor=\"start\">" << label << "</text>\n";
    }
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        const double w = std::clamp(static_cast<double>(a(i, j)), 0.0, 1.0);
        const int shade = static_cast<int>(std::lround(255.0 * (1.0 - w)));
        out << "<rect x=\"" << x0 + kMargin + j * kCell << "\" y=\"" << kGap + kMargin + i * kCell << "\" width=\""
            << kCell << "\" height=\"" << kCell << "\" fill=\"rgb(" << shade << ',' << shade << ",255)\""
            << " data-weight=\"" << a(i, j) << "\"/>\n";
      }
    }
    out << "</g>\n";
  }
  out << "</svg>\n";
  return out.str();
}

template <typename T>
void export_heatmap(const AttentionTrace<T>& trace, const std::vector<std::string>& tokens, HeatmapFormat format,
                    const std::string& path) {
  const auto text = format == HeatmapFormat::kCsv ? heatmap_csv(trace, tokens) : heatmap_svg(trace, tokens);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path);
}

#define SGNET_INSTANTIATE(T)                                                                             \
  template std::string heatmap_csv(const AttentionTrace<T>&, const std::vector<std::string>&);        \
  template std::string heatmap_svg(const AttentionTrace<T>&, const std::vector<std::string>&);        \
  template void export_heatmap(const AttentionTrace<T>&, const std::vector<std::string>&, HeatmapFormat, \
                               const std::string&);

SGNET_INSTANTIATE(float)
SGNET_INSTANTIATE(double)

#undef SGNET_INSTANTIATE

}  // namespace sgnet
