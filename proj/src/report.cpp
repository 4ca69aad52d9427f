#include "ssimadv/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace ssimadv {

std::string format_g6(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

std::string outcomes_to_csv(const std::vector<OutcomeRecord>& records) {
  std::string out = kOutcomesHeader;
  out += '\n';
  for (const auto& r : records) {
    out += std::to_string(r.image_id);
    out += ',';
    out += r.attack;
    out += ',';
    out += std::to_string(r.true_label);
    out += ',';
    out += std::to_string(r.adv_label);
    out += ',';
    out += r.success ? '1' : '0';
    out += ',';
    out += format_g6(r.ssim);
    out += ',';
    out += format_g6(r.l1);
    out += ',';
    out += format_g6(r.l2);
    out += ',';
    out += format_g6(r.linf);
    out += ',';
    out += format_g6(r.c_final);
    out += ',';
    out += std::to_string(r.iterations);
    out += '\n';
  }
  return out;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  fields.push_back(cur);
  return fields;
}

}  // namespace

std::vector<OutcomeRecord> parse_outcomes_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != kOutcomesHeader)
    throw std::runtime_error("outcomes csv: missing or wrong header");
  std::vector<OutcomeRecord> records;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 11)
      throw std::runtime_error("outcomes csv: line " + std::to_string(lineno) + " has " +
                               std::to_string(f.size()) + " fields, want 11");
    OutcomeRecord r;
    try {
      r.image_id = std::stoi(f[0]);
      r.attack = f[1];
      r.true_label = std::stoi(f[2]);
      r.adv_label = std::stoi(f[3]);
      r.success = std::stoi(f[4]) != 0;
      r.ssim = std::stod(f[5]);
      r.l1 = std::stod(f[6]);
      r.l2 = std::stod(f[7]);
      r.linf = std::stod(f[8]);
      r.c_final = std::stod(f[9]);
      r.iterations = std::stoll(f[10]);
    } catch (const std::exception&) {
      throw std::runtime_error("outcomes csv: unparsable value on line " +
                               std::to_string(lineno));
    }
    records.push_back(std::move(r));
  }
  return records;
}

namespace {

std::vector<std::string> attack_order(const std::vector<OutcomeRecord>& records) {
  std::vector<std::string> order;
  for (const auto& r : records) {
    if (r.attack == kSkippedAttack) continue;
    if (std::find(order.begin(), order.end(), r.attack) == order.end())
      order.push_back(r.attack);
  }
  return order;
}

}  // namespace

std::vector<TailPoint> compute_tail(const std::vector<OutcomeRecord>& records) {
  std::vector<TailPoint> tail;
  for (const auto& name : attack_order(records)) {
    int attacked = 0;
    std::vector<std::pair<double, bool>> rows;  // (ssim as printed, success)
    for (const auto& r : records)
      if (r.attack == name) {
        ++attacked;
        rows.emplace_back(std::stod(format_g6(r.ssim)), r.success);
      }
    for (int i = 0; i <= 20; ++i) {
      const double tau = i / 20.0;
      int succ = 0, above = 0;
      for (const auto& [s, ok] : rows) {
        const bool included = i == 0 || s >= tau - 1e-12;
        if (included) {
          ++above;
          if (ok) ++succ;
        }
      }
      TailPoint p;
      p.attack = name;
      p.ssim_min = tau;
      p.success_rate = attacked ? static_cast<double>(succ) / attacked : 0.0;
      p.proportion = attacked ? static_cast<double>(above) / attacked : 0.0;
      tail.push_back(std::move(p));
    }
  }
  return tail;
}

std::string tail_to_csv(const std::vector<TailPoint>& tail) {
  std::string out = kTailHeader;
  out += '\n';
  for (const auto& p : tail) {
    out += p.attack;
    out += ',';
    out += format_g6(p.ssim_min);
    out += ',';
    out += format_g6(p.success_rate);
    out += ',';
    out += format_g6(p.proportion);
    out += '\n';
  }
  return out;
}

std::vector<AttackSummary> summarize(const std::vector<OutcomeRecord>& records) {
  std::vector<AttackSummary> out;
  for (const auto& name : attack_order(records)) {
    AttackSummary s;
    s.attack = name;
    std::vector<double> ssims;
    double l1 = 0, l2 = 0, linf = 0, ssim_sum = 0;
    for (const auto& r : records) {
      if (r.attack != name) continue;
      ++s.attacked;
      if (!r.success) continue;
      ++s.successes;
      l1 += r.l1;
      l2 += r.l2;
      linf += r.linf;
      ssim_sum += r.ssim;
      ssims.push_back(r.ssim);
    }
    s.success_rate = s.attacked ? static_cast<double>(s.successes) / s.attacked : 0.0;
    if (s.successes > 0) {
      s.mean_l1 = l1 / s.successes;
      s.mean_l2 = l2 / s.successes;
      s.mean_linf = linf / s.successes;
      s.mean_ssim = ssim_sum / s.successes;
      std::sort(ssims.begin(), ssims.end());
      const size_t n = ssims.size();
      s.median_ssim = n % 2 ? ssims[n / 2] : (ssims[n / 2 - 1] + ssims[n / 2]) / 2;
      s.min_ssim = ssims.front();
    }
    out.push_back(std::move(s));
  }
  return out;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!os) throw std::runtime_error("write failed: " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_image(const Image<float>& img, const std::string& path) {
  const Shape s = img.shape;
  if (s.channels != 1 && s.channels != 3)
    throw std::invalid_argument("write_image: only 1- or 3-channel images supported");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << (s.channels == 1 ? "P5" : "P6") << "\n" << s.width << " " << s.height << "\n255\n";
  auto byte_of = [](float v) {
    const int b = static_cast<int>(std::floor(255.0f * v + 0.5f));
    return static_cast<unsigned char>(std::clamp(b, 0, 255));
  };
  const int per = s.pixels_per_channel();
  std::string bytes;
  bytes.reserve(static_cast<size_t>(s.size()));
  for (int p = 0; p < per; ++p)
    for (int c = 0; c < s.channels; ++c)
      bytes.push_back(static_cast<char>(byte_of(img.data[c * per + p])));
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw std::runtime_error("write failed: " + path);
}

void write_exhibits(const std::vector<OutcomeRecord>& records,
                    const std::vector<Image<float>>& originals_by_id, const std::string& dir,
                    int k) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  for (const auto& name : attack_order(records)) {
    std::vector<const OutcomeRecord*> winners;
    for (const auto& r : records)
      if (r.attack == name && r.success && r.image.data.size() > 0) winners.push_back(&r);
    std::sort(winners.begin(), winners.end(), [](const OutcomeRecord* a, const OutcomeRecord* b) {
      return a->ssim != b->ssim ? a->ssim < b->ssim : a->image_id < b->image_id;
    });
    if (static_cast<int>(winners.size()) > k) winners.resize(k);
    const char* ext = nullptr;
    for (size_t rank = 0; rank < winners.size(); ++rank) {
      const OutcomeRecord& r = *winners[rank];
      ext = r.image.shape.channels == 3 ? "ppm" : "pgm";
      const std::string stem = dir + "/" + name + "_worst" + std::to_string(rank + 1) +
                               "_img" + std::to_string(r.image_id);
      write_image(r.image, stem + "_adv." + ext);
      if (r.image_id >= 0 && r.image_id < static_cast<int>(originals_by_id.size()) &&
          originals_by_id[r.image_id].data.size() > 0)
        write_image(originals_by_id[r.image_id], stem + "_orig." + ext);
    }
  }
}

}  // namespace ssimadv
