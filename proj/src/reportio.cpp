#include "stabilex/reportio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "stabilex/error.hpp"
#include "stabilex/textio.hpp"

namespace stabilex::reportio {
namespace {

namespace fs = std::filesystem;
using stability::ComparisonResult;
using stability::ExplanationMatrix;
using textio::fixed;
using textio::format_double;

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot open " + path.string() + " for writing");
  return out;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  return in;
}

void write_text(const fs::path& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
  if (!out) throw Error(ErrorKind::kIo, "write failed for " + path.string());
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

class LineReader {
 public:
  LineReader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

  bool next(std::string& line) {
    if (!std::getline(in_, line)) return false;
    ++line_no_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  }

  [[noreturn]] void reject(const std::string& why) const {
    throw Error(ErrorKind::kIngestRejected,
                source_ + " line " + std::to_string(line_no_) + ": " + why);
  }

  std::string header(std::string_view key) {
    std::string line;
    const std::string prefix = "#" + std::string(key);
    if (!next(line)) reject("missing " + prefix + " header");
    if (line == prefix) return {};
    if (line.rfind(prefix + " ", 0) != 0) reject("expected " + prefix);
    return line.substr(prefix.size() + 1);
  }

 private:
  std::istream& in_;
  std::string source_;
  int line_no_ = 0;
};

// Maps [lo, hi] onto pixel rows [bottom, top].
struct YScale {
  double lo, hi, top, bottom;
  double operator()(double v) const { return bottom - (v - lo) / (hi - lo) * (bottom - top); }
};

std::vector<double> ticks(double lo, double hi) {
  const double span = hi - lo;
  double step = std::pow(10.0, std::floor(std::log10(span)));
  if (span / step < 2.5) step /= 5.0;
  else if (span / step < 5.0) step /= 2.0;
  std::vector<double> out;
  for (double t = std::ceil(lo / step - 1e-9) * step; t <= hi + 1e-9 * span; t += step) {
    out.push_back(std::abs(t) < 1e-12 ? 0.0 : t);
  }
  return out;
}

void y_axis(std::ostringstream& svg, const YScale& y, double x_left, double x_right) {
  svg << "<line x1=\"" << fixed(x_left) << "\" y1=\"" << fixed(y.top) << "\" x2=\"" << fixed(x_left)
      << "\" y2=\"" << fixed(y.bottom) << "\" stroke=\"#000\"/>\n";
  for (double t : ticks(y.lo, y.hi)) {
    const double py = y(t);
    svg << "<line x1=\"" << fixed(x_left - 4) << "\" y1=\"" << fixed(py) << "\" x2=\"" << fixed(x_right)
        << "\" y2=\"" << fixed(py) << "\" stroke=\"#ddd\"/>\n";
    svg << "<text x=\"" << fixed(x_left - 6) << "\" y=\"" << fixed(py + 4)
        << "\" text-anchor=\"end\" font-size=\"10\">" << fixed(t, 3) << "</text>\n";
  }
}

std::string svg_open(double width, double height) {
  std::ostringstream s;
  s << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
    << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << fixed(width, 0)
    << "\" height=\"" << fixed(height, 0) << "\" viewBox=\"0 0 " << fixed(width, 0) << ' '
    << fixed(height, 0) << "\" font-family=\"sans-serif\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"#fff\"/>\n";
  return s.str();
}

fs::path companion_csv(const fs::path& svg_path) {
  auto p = svg_path;
  p.replace_extension(".csv");
  return p;
}

}  // namespace

void write_matrix(const ExplanationMatrix& matrix, std::ostream& out) {
  matrix.validate();
  for (const auto& t : matrix.tokens) {
    if (t.empty() || t.find_first_of("\t\n\r") != std::string::npos) {
      throw Error(ErrorKind::kInvalidInput, "token '" + t + "' cannot be written");
    }
  }
  for (const auto& id : matrix.model_ids) {
    if (id.empty() || id.front() == '#' || id.find_first_of("\t\n\r") != std::string::npos) {
      throw Error(ErrorKind::kInvalidInput, "model id '" + id + "' cannot be written");
    }
  }
  out << "#stabilex-expl v1\n";
  out << "#text_id " << matrix.text_id << '\n';
  out << "#label " << matrix.label << '\n';
  out << "#tokens";
  for (std::size_t i = 0; i < matrix.tokens.size(); ++i) out << (i ? '\t' : ' ') << matrix.tokens[i];
  out << '\n';
  for (std::size_t r = 0; r < matrix.rows.size(); ++r) {
    out << matrix.model_ids[r];
    for (double v : matrix.rows[r]) out << '\t' << format_double(v);
    out << '\n';
  }
}

void write_matrix(const ExplanationMatrix& matrix, const fs::path& path) {
  std::ostringstream s;
  write_matrix(matrix, s);
  write_text(path, s.str());
}

ExplanationMatrix read_matrix(std::istream& in, const std::string& source) {
  LineReader reader(in, source);
  std::string line;
  if (!reader.next(line) || line != "#stabilex-expl v1") reader.reject("missing '#stabilex-expl v1' header");
  ExplanationMatrix m;
  const auto id = textio::parse_int(reader.header("text_id"));
  if (!id) reader.reject("bad text_id");
  m.text_id = *id;
  const auto label = textio::parse_int(reader.header("label"));
  if (!label || (*label != 0 && *label != 1)) reader.reject("label must be 0 or 1");
  m.label = static_cast<int>(*label);
  const std::string token_line = reader.header("tokens");
  for (auto t : textio::split(token_line, '\t')) {
    if (t.empty()) reader.reject("empty token");
    m.tokens.emplace_back(t);
  }
  std::set<std::string> ids;
  while (reader.next(line)) {
    if (line.empty()) continue;
    const auto fields = textio::split(line, '\t');
    if (fields.size() != m.tokens.size() + 1) {
      reader.reject("expected " + std::to_string(m.tokens.size()) + " relevances, got " +
                    std::to_string(fields.size() - 1));
    }
    const std::string model_id(fields[0]);
    if (model_id.empty()) reader.reject("empty model id");
    if (!ids.insert(model_id).second) reader.reject("duplicate model id '" + model_id + "'");
    std::vector<double> row;
    row.reserve(m.tokens.size());
    for (std::size_t i = 1; i < fields.size(); ++i) {
      const auto v = textio::parse_double(fields[i]);
      if (!v) reader.reject("bad relevance '" + std::string(fields[i]) + "'");
      row.push_back(*v);
    }
    m.model_ids.push_back(model_id);
    m.rows.push_back(std::move(row));
  }
  if (m.rows.empty()) reader.reject("no relevance rows");
  return m;
}

ExplanationMatrix read_matrix(const fs::path& path) {
  auto in = open_in(path);
  return read_matrix(in, path.string());
}

std::vector<ExplanationMatrix> read_matrix_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorKind::kIo, dir.string() + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".expl") files.push_back(e.path());
  }
  std::vector<ExplanationMatrix> out;
  for (const auto& f : files) out.push_back(read_matrix(f));
  std::sort(out.begin(), out.end(),
            [](const ExplanationMatrix& a, const ExplanationMatrix& b) { return a.text_id < b.text_id; });
  for (std::size_t i = 1; i < out.size(); ++i) {
    if (out[i].text_id == out[i - 1].text_id) {
      throw Error(ErrorKind::kIngestRejected,
                  dir.string() + ": duplicate text_id " + std::to_string(out[i].text_id));
    }
  }
  return out;
}

StabilityRow make_row(const ExplanationMatrix& matrix, const stability::StabilityEstimate& estimate,
                      const std::string& tag) {
  return {matrix.text_id, matrix.label, tag,
          static_cast<int>(matrix.models() - estimate.excluded_rows.size()), estimate.mcwme,
          estimate.ci_low, estimate.ci_high};
}

void write_stability_csv(std::span<const StabilityRow> rows, std::ostream& out) {
  out << "text_id,class,tag,m,mcwme,ci_low,ci_high\n";
  for (const auto& r : rows) {
    if (r.tag.find_first_of(",\n\r\"") != std::string::npos) {
      throw Error(ErrorKind::kInvalidInput, "tag '" + r.tag + "' cannot be written to CSV");
    }
    out << r.text_id << ',' << r.label << ',' << r.tag << ',' << r.models << ','
        << format_double(r.mcwme) << ',' << format_double(r.ci_low) << ',' << format_double(r.ci_high)
        << '\n';
  }
}

void write_stability_csv(std::span<const StabilityRow> rows, const fs::path& path) {
  std::ostringstream s;
  write_stability_csv(rows, s);
  write_text(path, s.str());
}

std::vector<StabilityRow> read_stability_csv(std::istream& in) {
  LineReader reader(in, "stability csv");
  std::string line;
  if (!reader.next(line) || line != "text_id,class,tag,m,mcwme,ci_low,ci_high") reader.reject("bad header");
  std::vector<StabilityRow> out;
  while (reader.next(line)) {
    if (line.empty()) continue;
    const auto f = textio::split(line, ',');
    if (f.size() != 7) reader.reject("expected 7 fields");
    const auto id = textio::parse_int(f[0]);
    const auto label = textio::parse_int(f[1]);
    const auto m = textio::parse_int(f[3]);
    const auto v = textio::parse_double(f[4]);
    const auto lo = textio::parse_double(f[5]);
    const auto hi = textio::parse_double(f[6]);
    if (!id || !label || !m || !v || !lo || !hi) reader.reject("bad field");
    out.push_back({*id, static_cast<int>(*label), std::string(f[2]), static_cast<int>(*m), *v, *lo, *hi});
  }
  return out;
}

std::vector<StabilityRow> read_stability_csv(const fs::path& path) {
  auto in = open_in(path);
  return read_stability_csv(in);
}

ComparisonRow make_row(const ComparisonResult& r) {
  return {r.pair_id, r.diff, r.diff_ci_low, r.diff_ci_high, r.significant};
}

void write_comparison_csv(std::span<const ComparisonResult> results, std::ostream& out) {
  out << "pair_id,diff,diff_ci_low,diff_ci_high,significant\n";
  for (const auto& r : results) {
    out << r.pair_id << ',' << format_double(r.diff) << ',' << format_double(r.diff_ci_low) << ','
        << format_double(r.diff_ci_high) << ',' << (r.significant ? "true" : "false") << '\n';
  }
}

void write_comparison_csv(std::span<const ComparisonResult> results, const fs::path& path) {
  std::ostringstream s;
  write_comparison_csv(results, s);
  write_text(path, s.str());
}

std::vector<ComparisonRow> read_comparison_csv(std::istream& in) {
  LineReader reader(in, "comparison csv");
  std::string line;
  if (!reader.next(line) || line != "pair_id,diff,diff_ci_low,diff_ci_high,significant") {
    reader.reject("bad header");
  }
  std::vector<ComparisonRow> out;
  while (reader.next(line)) {
    if (line.empty()) continue;
    const auto f = textio::split(line, ',');
    if (f.size() != 5) reader.reject("expected 5 fields");
    const auto d = textio::parse_double(f[1]);
    const auto lo = textio::parse_double(f[2]);
    const auto hi = textio::parse_double(f[3]);
    if (!d || !lo || !hi) reader.reject("bad number");
    if (f[4] != "true" && f[4] != "false") reader.reject("significant must be true or false");
    out.push_back({std::string(f[0]), *d, *lo, *hi, f[4] == "true"});
  }
  return out;
}

std::vector<ComparisonRow> read_comparison_csv(const fs::path& path) {
  auto in = open_in(path);
  return read_comparison_csv(in);
}

std::string comparison_svg(std::span<const ComparisonResult> results, const std::string& tag_a,
                           const std::string& tag_b) {
  const double left = 60, right = 20, top = 50, plot_h = 280, bottom_pad = 50, step = 12;
  const double n = static_cast<double>(results.size());
  const double width = left + std::max(1.0, n) * step + right;
  const double height = top + plot_h + bottom_pad;

  double lo = 1.0, hi = 1.0;
  for (const auto& r : results) {
    for (const auto* e : {&r.estimate_a, &r.estimate_b}) {
      lo = std::min({lo, e->ci_low, e->mcwme});
      hi = std::max({hi, e->ci_high, e->mcwme});
    }
  }
  lo = std::max(-1.0, std::floor(lo * 20.0) / 20.0);
  hi = std::min(1.0, std::ceil(hi * 20.0) / 20.0);
  if (hi - lo < 0.05) lo = hi - 0.05;
  const YScale y{lo, hi, top, top + plot_h};
  auto x_of = [&](std::size_t i) { return left + (static_cast<double>(i) + 0.5) * step; };

  std::ostringstream svg;
  svg << svg_open(width, height);
  svg << "<text x=\"" << fixed(left) << "\" y=\"16\" font-size=\"12\">MCWME: " << xml_escape(tag_a)
      << " vs " << xml_escape(tag_b) << "</text>\n";
  // Legend.
  svg << "<circle cx=\"" << fixed(left + 4) << "\" cy=\"28\" r=\"3\" fill=\"#1f77b4\"/>"
      << "<text x=\"" << fixed(left + 12) << "\" y=\"32\" font-size=\"10\">" << xml_escape(tag_a)
      << "</text>\n";
  svg << "<circle cx=\"" << fixed(left + 124) << "\" cy=\"28\" r=\"3\" fill=\"#ff7f0e\"/>"
      << "<text x=\"" << fixed(left + 132) << "\" y=\"32\" font-size=\"10\">" << xml_escape(tag_b)
      << "</text>\n";
  y_axis(svg, y, left, width - right);

  const struct {
    double dx;
    const char* color;
    bool a;
  } series[] = {{-2.5, "#1f77b4", true}, {2.5, "#ff7f0e", false}};
  for (const auto& s : series) {
    svg << "<g class=\"series-" << (s.a ? 'a' : 'b') << "\" stroke=\"" << s.color << "\" fill=\""
        << s.color << "\">\n";
    for (std::size_t i = 0; i < results.size(); ++i) {
      const auto& e = s.a ? results[i].estimate_a : results[i].estimate_b;
      const double x = x_of(i) + s.dx;
      svg << "<line x1=\"" << fixed(x) << "\" y1=\"" << fixed(y(e.ci_low)) << "\" x2=\"" << fixed(x)
          << "\" y2=\"" << fixed(y(e.ci_high)) << "\"/>";
      svg << "<circle cx=\"" << fixed(x) << "\" cy=\"" << fixed(y(e.mcwme)) << "\" r=\"2\"/>\n";
    }
    svg << "</g>\n";
  }

  const auto boundary = static_cast<std::size_t>(
      std::find_if(results.begin(), results.end(),
                   [&](const ComparisonResult& r) { return r.label != results.front().label; }) -
      results.begin());
  if (boundary > 0 && boundary < results.size()) {
    const double x = left + static_cast<double>(boundary) * step;
    svg << "<line class=\"separator\" x1=\"" << fixed(x) << "\" y1=\"" << fixed(top) << "\" x2=\""
        << fixed(x) << "\" y2=\"" << fixed(top + plot_h)
        << "\" stroke=\"#555\" stroke-dasharray=\"4,3\"/>\n";
  }

  for (std::size_t i = 0; i < results.size(); ++i) {
    if (results[i].significant) continue;
    const double x = x_of(i), cy = top - 8, r = 3.5;
    svg << "<path class=\"nonsig\" d=\"M" << fixed(x - r) << ',' << fixed(cy - r) << " L" << fixed(x + r)
        << ',' << fixed(cy + r) << " M" << fixed(x - r) << ',' << fixed(cy + r) << " L" << fixed(x + r)
        << ',' << fixed(cy - r) << "\" stroke=\"#d62728\" stroke-width=\"1.5\"/>\n";
  }

  svg << "<text x=\"" << fixed(left + std::max(1.0, n) * step / 2) << "\" y=\"" << fixed(height - 12)
      << "\" text-anchor=\"middle\" font-size=\"11\">text pair (sorted by class, then id)</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

void emit_comparison_plot(std::span<const ComparisonResult> results, const std::string& tag_a,
                          const std::string& tag_b, const fs::path& svg_path) {
  write_text(svg_path, comparison_svg(results, tag_a, tag_b));
  std::ostringstream csv;
  csv << "pair_id,class,mcwme_a,ci_low_a,ci_high_a,mcwme_b,ci_low_b,ci_high_b,significant\n";
  for (const auto& r : results) {
    csv << r.pair_id << ',' << r.label << ',' << format_double(r.estimate_a.mcwme) << ','
        << format_double(r.estimate_a.ci_low) << ',' << format_double(r.estimate_a.ci_high) << ','
        << format_double(r.estimate_b.mcwme) << ',' << format_double(r.estimate_b.ci_low) << ','
        << format_double(r.estimate_b.ci_high) << ',' << (r.significant ? "true" : "false") << '\n';
  }
  write_text(companion_csv(svg_path), csv.str());
}

double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw Error(ErrorKind::kInvalidInput, "quantile of empty sample");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

std::string boxplot_svg(const ExplanationMatrix& matrix) {
  matrix.validate();
  const std::size_t n = matrix.width();
  const double left = 60, right = 20, top = 30, plot_h = 260, bottom_pad = 80, step = 40;
  const double width = left + static_cast<double>(n) * step + right;
  const double height = top + plot_h + bottom_pad;

  double lo = 0.0, hi = 0.0;
  for (const auto& row : matrix.rows) {
    for (double v : row) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (hi - lo < 1e-12) hi = lo + 1.0;
  const double pad = 0.05 * (hi - lo);
  const YScale y{lo - pad, hi + pad, top, top + plot_h};

  std::ostringstream svg;
  svg << svg_open(width, height);
  svg << "<text x=\"" << fixed(left) << "\" y=\"18\" font-size=\"12\">text " << matrix.text_id
      << ", class " << matrix.label << ", m = " << matrix.models() << "</text>\n";
  y_axis(svg, y, left, width - right);
  svg << "<line x1=\"" << fixed(left) << "\" y1=\"" << fixed(y(0.0)) << "\" x2=\"" << fixed(width - right)
      << "\" y2=\"" << fixed(y(0.0)) << "\" stroke=\"#888\"/>\n";

  for (std::size_t j = 0; j < n; ++j) {
    std::vector<double> col;
    col.reserve(matrix.models());
    for (const auto& row : matrix.rows) col.push_back(row[j]);
    std::sort(col.begin(), col.end());
    const double q1 = quantile_sorted(col, 0.25);
    const double med = quantile_sorted(col, 0.5);
    const double q3 = quantile_sorted(col, 0.75);
    const double iqr = q3 - q1;
    const double fence_lo = q1 - 1.5 * iqr, fence_hi = q3 + 1.5 * iqr;
    double whisk_lo = q1, whisk_hi = q3;
    for (double v : col) {
      if (v >= fence_lo) whisk_lo = std::min(whisk_lo, v);
      if (v <= fence_hi) whisk_hi = std::max(whisk_hi, v);
    }
    const double cx = left + (static_cast<double>(j) + 0.5) * step, half = step * 0.3;
    svg << "<g class=\"box\" stroke=\"#333\">";
    svg << "<line x1=\"" << fixed(cx) << "\" y1=\"" << fixed(y(whisk_lo)) << "\" x2=\"" << fixed(cx)
        << "\" y2=\"" << fixed(y(q1)) << "\"/>";
    svg << "<line x1=\"" << fixed(cx) << "\" y1=\"" << fixed(y(q3)) << "\" x2=\"" << fixed(cx)
        << "\" y2=\"" << fixed(y(whisk_hi)) << "\"/>";
    for (double w : {whisk_lo, whisk_hi}) {
      svg << "<line x1=\"" << fixed(cx - half / 2) << "\" y1=\"" << fixed(y(w)) << "\" x2=\""
          << fixed(cx + half / 2) << "\" y2=\"" << fixed(y(w)) << "\"/>";
    }
    svg << "<rect x=\"" << fixed(cx - half) << "\" y=\"" << fixed(y(q3)) << "\" width=\"" << fixed(2 * half)
        << "\" height=\"" << fixed(y(q1) - y(q3)) << "\" fill=\"#9ecae1\"/>";
    svg << "<line class=\"median\" x1=\"" << fixed(cx - half) << "\" y1=\"" << fixed(y(med)) << "\" x2=\""
        << fixed(cx + half) << "\" y2=\"" << fixed(y(med)) << "\" stroke=\"#d62728\" stroke-width=\"2\"/>";
    for (double v : col) {
      if (v < fence_lo || v > fence_hi) {
        svg << "<circle class=\"outlier\" cx=\"" << fixed(cx) << "\" cy=\"" << fixed(y(v))
            << "\" r=\"2\" fill=\"none\"/>";
      }
    }
    svg << "</g>\n";
    const double ly = top + plot_h + 12;
    svg << "<text x=\"" << fixed(cx) << "\" y=\"" << fixed(ly) << "\" font-size=\"10\" text-anchor=\"end\""
        << " transform=\"rotate(-45 " << fixed(cx) << ' ' << fixed(ly) << ")\">"
        << xml_escape(matrix.tokens[j]) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

void emit_boxplot(const ExplanationMatrix& matrix, const fs::path& svg_path) {
  write_text(svg_path, boxplot_svg(matrix));
}

}  // namespace stabilex::reportio
