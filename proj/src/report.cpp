#include "semgen/report.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "semgen/dataio.hpp"
#include "semgen/errors.hpp"

namespace semgen {

namespace {

constexpr int kWidth = 640;
constexpr int kHeight = 400;
constexpr int kMargin = 40;

struct Canvas {
    // row-major top-down RGB; flipped to the BMP's bottom-up order on save
    std::vector<uint8_t> px;

    Canvas() : px(static_cast<size_t>(kWidth) * kHeight * 3, 255) {}

    void set(int x, int y, const std::array<uint8_t, 3>& rgb) {
        if (x < 0 || x >= kWidth || y < 0 || y >= kHeight) return;
        uint8_t* p = px.data() + (static_cast<size_t>(y) * kWidth + x) * 3;
        p[0] = rgb[0];
        p[1] = rgb[1];
        p[2] = rgb[2];
    }

    void line(int x0, int y0, int x1, int y1, const std::array<uint8_t, 3>& rgb) {
        const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
        const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
        int err = dx + dy;
        while (true) {
            set(x0, y0, rgb);
            if (x0 == x1 && y0 == y1) break;
            const int e2 = 2 * err;
            if (e2 >= dy) {
                err += dy;
                x0 += sx;
            }
            if (e2 <= dx) {
                err += dx;
                y0 += sy;
            }
        }
    }
};

void write_u16(std::ofstream& out, uint16_t v) { out.write(reinterpret_cast<char*>(&v), 2); }
void write_u32(std::ofstream& out, uint32_t v) { out.write(reinterpret_cast<char*>(&v), 4); }
void write_i32(std::ofstream& out, int32_t v) { out.write(reinterpret_cast<char*>(&v), 4); }

void save_bmp(const Canvas& canvas, const std::filesystem::path& path) {
    const int row_bytes = kWidth * 3;
    const int padding = (4 - row_bytes % 4) % 4;
    const uint32_t image_size = static_cast<uint32_t>((row_bytes + padding) * kHeight);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw RunError("render_loss_curve: cannot open " + path.string() + " for writing");
    out.write("BM", 2);
    write_u32(out, 54 + image_size);
    write_u32(out, 0);
    write_u32(out, 54);
    write_u32(out, 40); // BITMAPINFOHEADER
    write_i32(out, kWidth);
    write_i32(out, kHeight);
    write_u16(out, 1);
    write_u16(out, 24);
    write_u32(out, 0);
    write_u32(out, image_size);
    write_i32(out, 2835);
    write_i32(out, 2835);
    write_u32(out, 0);
    write_u32(out, 0);
    const char pad[3] = {0, 0, 0};
    for (int y = kHeight - 1; y >= 0; --y) {
        for (int x = 0; x < kWidth; ++x) {
            const uint8_t* p = canvas.px.data() + (static_cast<size_t>(y) * kWidth + x) * 3;
            const char bgr[3] = {static_cast<char>(p[2]), static_cast<char>(p[1]),
                                 static_cast<char>(p[0])};
            out.write(bgr, 3);
        }
        out.write(pad, padding);
    }
    if (!out) throw RunError("render_loss_curve: write failed for " + path.string());
}

} // namespace

void render_loss_curve(const std::vector<EpochLog>& log, const std::filesystem::path& bmp_path) {
    if (log.empty()) throw ValidationError("render_loss_curve: empty log");
    Canvas canvas;
    const std::array<uint8_t, 3> kBlack{0, 0, 0}, kGray{200, 200, 200}, kRed{200, 30, 30},
        kBlue{30, 30, 200};

    double lo = log.front().loss_total, hi = lo;
    for (const EpochLog& row : log) {
        lo = std::min({lo, row.loss_cls, row.loss_rec, row.loss_total});
        hi = std::max({hi, row.loss_cls, row.loss_rec, row.loss_total});
    }
    if (hi == lo) hi = lo + 1.0;

    const int x0 = kMargin, x1 = kWidth - kMargin, y0 = kHeight - kMargin, y1 = kMargin;
    auto px = [&](size_t i) {
        return log.size() == 1
                   ? x0
                   : x0 + static_cast<int>(std::lround(static_cast<double>(i) * (x1 - x0) /
                                                       static_cast<double>(log.size() - 1)));
    };
    auto py = [&](double v) {
        return y0 - static_cast<int>(std::lround((v - lo) / (hi - lo) * (y0 - y1)));
    };

    canvas.line(x0, y0, x1, y0, kBlack);
    canvas.line(x0, y0, x0, y1, kBlack);
    for (size_t i = 1; i < log.size(); ++i) {
        if (log[i].stage != log[i - 1].stage)
            canvas.line(px(i), y0, px(i), y1, kGray); // stage boundary
        canvas.line(px(i - 1), py(log[i - 1].loss_cls), px(i), py(log[i].loss_cls), kRed);
        canvas.line(px(i - 1), py(log[i - 1].loss_rec), px(i), py(log[i].loss_rec), kBlue);
        canvas.line(px(i - 1), py(log[i - 1].loss_total), px(i), py(log[i].loss_total), kBlack);
    }
    if (log.size() == 1) {
        canvas.set(px(0), py(log[0].loss_cls), kRed);
        canvas.set(px(0), py(log[0].loss_rec), kBlue);
        canvas.set(px(0), py(log[0].loss_total), kBlack);
    }
    save_bmp(canvas, bmp_path);
}

void write_metric_table(const CompareResult& result, const std::filesystem::path& csv_path) {
    std::ofstream out(csv_path);
    if (!out) throw RunError("write_metric_table: cannot open " + csv_path.string() + " for writing");
    out << "init,n,mean,sd\n";
    for (const InitSummary& s : result.inits) {
        check_csv_safe(s.init, "metric table: init");
        out << s.init << ',' << s.values.size() << ',' << format_double(s.mean) << ','
            << format_double(s.sd) << '\n';
    }
    if (!out) throw RunError("write_metric_table: write failed for " + csv_path.string());
}

} // namespace semgen
