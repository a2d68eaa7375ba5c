#include "shardjoin/metrics.hpp"

#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace shardjoin {

std::uint64_t ClusterMetrics::max_node_span_ns() const {
  std::uint64_t m = 0;
  for (const auto& r : nodes) {
    m = std::max(m, r.join_span_ns);
  }
  return m;
}

double intra_node_gain(const LoadReport& report) {
  if (report.join_span_ns == 0) {
    throw std::domain_error("intra-node gain undefined for a zero join span");
  }
  return static_cast<double>(report.total_load_ns()) / static_cast<double>(report.join_span_ns);
}

double speedup(double span_1, double span_n) {
  if (!(span_1 > 0.0) || !(span_n > 0.0)) {
    throw std::domain_error("speedup needs two positive spans");
  }
  return span_1 / span_n;
}

double expected_send_volume(double relation_size, std::uint32_t n) {
  if (n == 0) {
    throw std::domain_error("expected_send_volume needs n >= 1");
  }
  return relation_size * (1.0 - 1.0 / static_cast<double>(n));
}

namespace {

struct Column {
  const char* name;
  std::uint64_t LoadReport::*field;
};

const std::vector<Column>& columns() {
  static const std::vector<Column> cols = {
      {"compute_time_ns", &LoadReport::compute_time_ns},
      {"send_time_ns", &LoadReport::send_time_ns},
      {"recv_time_ns", &LoadReport::recv_time_ns},
      {"join_span_ns", &LoadReport::join_span_ns},
      {"bytes_sent", &LoadReport::bytes_sent},
      {"bytes_received", &LoadReport::bytes_received},
      {"payload_bytes_sent", &LoadReport::payload_bytes_sent},
      {"payload_bytes_received", &LoadReport::payload_bytes_received},
      {"result_send_ns", &LoadReport::result_send_ns},
      {"result_recv_ns", &LoadReport::result_recv_ns},
      {"result_bytes_sent", &LoadReport::result_bytes_sent},
      {"result_bytes_received", &LoadReport::result_bytes_received},
      {"pool_block_ns", &LoadReport::pool_block_ns},
      {"pool_blocked_acquires", &LoadReport::pool_blocked_acquires},
      {"pool_peak_bytes", &LoadReport::pool_peak_bytes},
      {"joins", &LoadReport::joins},
      {"result_entries", &LoadReport::result_entries},
      {"cluster_join_span_ns", &LoadReport::cluster_join_span_ns},
  };
  return cols;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    out.push_back(cell);
  }
  return out;
}

} // namespace

const std::vector<std::string>& load_report_columns() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v{"node_id"};
    for (const auto& c : columns()) {
      v.emplace_back(c.name);
    }
    v.emplace_back("intra_node_gain");
    return v;
  }();
  return names;
}

std::vector<std::string> load_report_row(const LoadReport& r) {
  std::vector<std::string> row{std::to_string(r.node_id)};
  for (const auto& c : columns()) {
    row.push_back(std::to_string(r.*c.field));
  }
  std::ostringstream gain;
  if (r.join_span_ns > 0) {
    gain << intra_node_gain(r);
  }
  row.push_back(gain.str());
  return row;
}

void write_load_report_csv(std::ostream& out, const std::vector<LoadReport>& reports,
                           bool header) {
  auto emit = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      out << (i ? "," : "") << cells[i];
    }
    out << '\n';
  };
  if (header) {
    emit(load_report_columns());
  }
  for (const auto& r : reports) {
    emit(load_report_row(r));
  }
}

std::vector<LoadReport> read_load_report_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) {
    return {};
  }
  const auto header = split_csv(line);
  std::vector<LoadReport> out;
  while (std::getline(in, line)) {
    if (line.empty()) {
      continue;
    }
    const auto cells = split_csv(line);
    LoadReport r;
    for (std::size_t i = 0; i < header.size() && i < cells.size(); ++i) {
      if (cells[i].empty()) {
        continue;
      }
      if (header[i] == "node_id") {
        r.node_id = static_cast<NodeId>(std::stoul(cells[i]));
        continue;
      }
      for (const auto& c : columns()) {
        if (header[i] == c.name) {
          r.*c.field = std::stoull(cells[i]);
        }
      }
    }
    out.push_back(r);
  }
  return out;
}

} // namespace shardjoin
