#include "metasci/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace metasci {

ReportRow Report::average() const {
  ReportRow a{"average"};
  if (rows.empty()) return a;
  for (const auto& r : rows) {
    a.psnr += r.psnr;
    a.ssim += r.ssim;
    a.adapt_seconds += r.adapt_seconds;
    a.test_seconds += r.test_seconds;
  }
  const double n = static_cast<double>(rows.size());
  a.psnr /= n;
  a.ssim /= n;
  a.adapt_seconds /= n;
  a.test_seconds /= n;
  return a;
}

std::string Report::to_text() const {
  std::size_t w = 7;
  for (const auto& r : rows) w = std::max(w, r.scene.size());
  std::ostringstream os;
  os << "method: " << method << "\nconfig: " << config << "\n\n";
  os << std::left << std::setw(static_cast<int>(w)) << "scene" << std::right << std::setw(10) << "PSNR(dB)"
     << std::setw(9) << "SSIM" << std::setw(12) << "AD time(s)" << std::setw(14) << "test time(s)" << '\n';
  auto line = [&](const ReportRow& r) {
    os << std::left << std::setw(static_cast<int>(w)) << r.scene << std::right << std::fixed << std::setprecision(2)
       << std::setw(10) << r.psnr << std::setprecision(4) << std::setw(9) << r.ssim << std::setprecision(3)
       << std::setw(12) << r.adapt_seconds << std::setprecision(4) << std::setw(14) << r.test_seconds << '\n';
  };
  for (const auto& r : rows) line(r);
  os << std::string(w + 45, '-') << '\n';
  line(average());
  return os.str();
}

std::string Report::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "method,scene,psnr_db,ssim,adapt_seconds,test_seconds\n";
  for (const auto& r : rows) {
    os << method << ',' << r.scene << ',' << r.psnr << ',' << r.ssim << ',' << r.adapt_seconds << ','
       << r.test_seconds << '\n';
  }
  const ReportRow a = average();
  os << method << ',' << a.scene << ',' << a.psnr << ',' << a.ssim << ',' << a.adapt_seconds << ','
     << a.test_seconds << '\n';
  return os.str();
}

void Report::write(const std::filesystem::path& dir, const std::string& stem) const {
  std::filesystem::create_directories(dir);
  std::ofstream txt(dir / (stem + ".txt"));
  std::ofstream csv(dir / (stem + ".csv"));
  if (!txt || !csv) throw IoError("cannot write report into " + dir.string());
  txt << to_text();
  csv << to_csv();
}

GrayImage to_gray(const Image& frame) {
  GrayImage g{frame.dim(0), frame.dim(1), std::vector<std::uint8_t>(frame.size())};
  for (std::size_t i = 0; i < frame.size(); ++i) {
    g.pixels[i] = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(frame[i], 0.0, 1.0)));
  }
  return g;
}

GrayImage montage(const VideoBlock& truth, const VideoBlock& recon, std::size_t gap) {
  require_same_shape(truth.tensor(), recon.tensor(), "montage");
  const std::size_t r = truth.rows(), c = truth.cols(), f = truth.frames();
  GrayImage g{2 * r + gap, f * c + (f - 1) * gap, {}};
  g.pixels.assign(g.rows * g.cols, 255);
  for (std::size_t b = 0; b < f; ++b) {
    const GrayImage top = to_gray(truth.frame(b)), bottom = to_gray(recon.frame(b));
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) {
        const std::size_t col = b * (c + gap) + j;
        g.pixels[i * g.cols + col] = top.pixels[i * c + j];
        g.pixels[(r + gap + i) * g.cols + col] = bottom.pixels[i * c + j];
      }
  }
  return g;
}

}  // namespace metasci
