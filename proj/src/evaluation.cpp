#include "xregion/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "xregion/error.hpp"

namespace xregion {

double accuracy_one_off(const Vector& yhat, const Vector& y, double threshold) {
  require(yhat.size() == y.size(), ErrorKind::Contract, "prediction and target lengths differ");
  require(y.size() > 0, ErrorKind::Contract, "accuracy is undefined for zero samples");
  const auto correct = ((yhat - y).array().abs() < threshold).count();
  return static_cast<double>(correct) / static_cast<double>(y.size());
}

double mean_absolute_error(const Vector& yhat, const Vector& y) {
  require(yhat.size() == y.size(), ErrorKind::Contract, "prediction and target lengths differ");
  require(y.size() > 0, ErrorKind::Contract, "MAE is undefined for zero samples");
  return (yhat - y).cwiseAbs().mean();
}

nlohmann::json MethodMetrics::to_json() const {
  return {{"accuracy", accuracy}, {"mae", mae}, {"samples", samples}, {"snapshots", snapshots}};
}

MethodMetrics MethodMetrics::from_json(const nlohmann::json& j) {
  return {j.at("accuracy").get<double>(), j.at("mae").get<double>(), j.at("samples").get<std::size_t>(),
          j.at("snapshots").get<std::size_t>()};
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json b = nlohmann::json::object();
  for (const auto& [name, m] : baselines) b[name] = m.to_json();
  return {{"held_out_region", held_out_region},
          {"proposed", proposed.to_json()},
          {"baselines", b},
          {"train_samples", train_samples},
          {"warnings", warnings},
          {"config_fingerprint", config_fingerprint},
          {"seed", seed}};
}

MetricsReport MetricsReport::from_json(const nlohmann::json& j) {
  MetricsReport r;
  try {
    r.held_out_region = j.at("held_out_region").get<std::string>();
    r.proposed = MethodMetrics::from_json(j.at("proposed"));
    for (const auto& [name, m] : j.at("baselines").items()) r.baselines[name] = MethodMetrics::from_json(m);
    r.train_samples = j.at("train_samples").get<std::map<std::string, std::size_t>>();
    r.warnings = j.at("warnings").get<std::vector<std::string>>();
    r.config_fingerprint = j.at("config_fingerprint").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::DataQuality, std::string("malformed metrics report: ") + e.what());
  }
  return r;
}

std::string config_fingerprint(const nlohmann::json& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : config.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

MethodMetrics score_predictions(const Predictor& predict, const std::vector<RegionGraph>& graphs, double threshold) {
  require(!graphs.empty(), ErrorKind::Contract, "no snapshots to evaluate");
  std::size_t total = 0;
  for (const auto& g : graphs) total += static_cast<std::size_t>(g.targets.size());
  Vector all_hat(static_cast<Eigen::Index>(total)), all_y(static_cast<Eigen::Index>(total));
  Eigen::Index pos = 0;
  for (const auto& g : graphs) {
    const Vector yhat = predict(g);
    require(yhat.size() == g.targets.size(), ErrorKind::Contract, "predictor returned the wrong number of nodes");
    all_hat.segment(pos, yhat.size()) = yhat;
    all_y.segment(pos, yhat.size()) = g.targets;
    pos += yhat.size();
  }
  MethodMetrics m;
  m.accuracy = accuracy_one_off(all_hat, all_y, threshold);
  m.mae = mean_absolute_error(all_hat, all_y);
  m.samples = total;
  m.snapshots = graphs.size();
  return m;
}

Vector predict_unseen(const ModelParams& params, const RegionGraph& graph) {
  require(graph.node_features.cols() == params.config.input_dim, ErrorKind::Contract,
          "snapshot feature width " + std::to_string(graph.node_features.cols()) + " differs from the checkpoint's " +
              std::to_string(params.config.input_dim));
  const auto s = encode(graph.node_features, graph.adjacency_norm(), params.enc_agnostic, EncodeMode::deterministic());
  return predict_demand(s.mu, params.heads.regressor);
}

MetricsReport evaluate_unseen(const ModelParams& params, const std::vector<std::string>& vocabulary,
                              const std::vector<RegionGraph>& test_graphs, double threshold) {
  require(!test_graphs.empty(), ErrorKind::Contract, "no test snapshots");
  MetricsReport report;
  std::set<std::string> regions;
  for (const auto& g : test_graphs) regions.insert(g.region_id);
  for (const auto& r : regions) {
    if (std::find(vocabulary.begin(), vocabulary.end(), r) != vocabulary.end()) {
      report.warnings.push_back("region overlap: " + r + " was seen during training");
    }
  }
  std::string joined;
  for (const auto& r : regions) joined += (joined.empty() ? "" : ",") + r;
  report.held_out_region = joined;
  report.proposed = score_predictions([&](const RegionGraph& g) { return predict_unseen(params, g); }, test_graphs,
                                      threshold);
  return report;
}

namespace {

std::string svg_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string render_svg(const std::vector<MetricsReport>& reports) {
  std::vector<std::string> methods = {"proposed"};
  for (const auto& r : reports) {
    for (const auto& [name, _] : r.baselines) {
      if (std::find(methods.begin(), methods.end(), name) == methods.end()) methods.push_back(name);
    }
  }
  static const char* kColors[] = {"#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02"};
  const int bar_w = 28, gap = 36, left = 60, top = 30, plot_h = 300;
  const int group_w = static_cast<int>(methods.size()) * bar_w;
  const int width = left + static_cast<int>(reports.size()) * (group_w + gap) + 180;
  const int height = top + plot_h + 60;

  std::ostringstream s;
  char buf[256];
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
  s << "<text x=\"" << left << "\" y=\"18\" font-family=\"sans-serif\" font-size=\"14\">"
    << "One-off accuracy on the held-out region</text>\n";
  for (int tick = 0; tick <= 10; tick += 2) {
    const double y = top + plot_h * (1.0 - tick / 10.0);
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%d\" y1=\"%.1f\" x2=\"%d\" y2=\"%.1f\" stroke=\"#ccc\"/>"
                  "<text x=\"%d\" y=\"%.1f\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">%.1f</text>\n",
                  left, y, width - 180, y, left - 6, y + 4, tick / 10.0);
    s << buf;
  }
  for (std::size_t g = 0; g < reports.size(); ++g) {
    const auto& r = reports[g];
    const int x0 = left + gap / 2 + static_cast<int>(g) * (group_w + gap);
    for (std::size_t m = 0; m < methods.size(); ++m) {
      double acc = -1.0;
      if (methods[m] == "proposed") {
        acc = r.proposed.accuracy;
      } else if (auto it = r.baselines.find(methods[m]); it != r.baselines.end()) {
        acc = it->second.accuracy;
      }
      if (acc < 0) continue;
      const double h = plot_h * acc;
      std::snprintf(buf, sizeof buf,
                    "<rect x=\"%d\" y=\"%.1f\" width=\"%d\" height=\"%.1f\" fill=\"%s\"><title>%s %.4f</title></rect>\n",
                    x0 + static_cast<int>(m) * bar_w, top + plot_h - h, bar_w - 2, h, kColors[m % 6],
                    svg_escape(methods[m]).c_str(), acc);
      s << buf;
    }
    s << "<text x=\"" << x0 + group_w / 2 << "\" y=\"" << top + plot_h + 18
      << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">" << svg_escape(r.held_out_region)
      << "</text>\n";
  }
  for (std::size_t m = 0; m < methods.size(); ++m) {
    const int y = top + 10 + static_cast<int>(m) * 20;
    s << "<rect x=\"" << width - 170 << "\" y=\"" << y << "\" width=\"12\" height=\"12\" fill=\"" << kColors[m % 6]
      << "\"/><text x=\"" << width - 152 << "\" y=\"" << y + 11 << "\" font-family=\"sans-serif\" font-size=\"12\">"
      << svg_escape(methods[m]) << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

}  // namespace

void render_report(const std::vector<MetricsReport>& reports, const std::string& out_dir) {
  namespace fs = std::filesystem;
  require(!reports.empty(), ErrorKind::Contract, "no reports to render");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  require(!ec && fs::is_directory(out_dir), ErrorKind::Io, "cannot create report directory " + out_dir);
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : reports) j.push_back(r.to_json());
  {
    std::ofstream out(fs::path(out_dir) / "metrics_report.json");
    require(static_cast<bool>(out), ErrorKind::Io, "cannot write into " + out_dir);
    out << j.dump(2) << '\n';
  }
  std::ofstream svg(fs::path(out_dir) / "accuracy_chart.svg");
  require(static_cast<bool>(svg), ErrorKind::Io, "cannot write into " + out_dir);
  svg << render_svg(reports);
}

std::vector<MetricsReport> read_report(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot read " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::DataQuality, "malformed report " + path + ": " + e.what());
  }
  std::vector<MetricsReport> out;
  for (const auto& r : j) out.push_back(MetricsReport::from_json(r));
  return out;
}

}  // namespace xregion
