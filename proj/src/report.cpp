#include "cowsynth/report.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <stdexcept>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "cowsynth/preprocess.hpp"

namespace cow {
namespace {

const cv::Scalar kSeriesColors[] = {
    {180, 119, 31}, {14, 127, 255}, {44, 160, 44}, {40, 39, 214}, {189, 103, 148},
};

struct AxisRange {
    double lo = 0, hi = 1;
    double scale(double v, int px_lo, int px_hi) const {
        double t = (hi > lo) ? (v - lo) / (hi - lo) : 0.5;
        return px_lo + t * (px_hi - px_lo);
    }
};

AxisRange fit_range(const std::vector<PlotSeries>& series, bool use_x) {
    AxisRange r{1e300, -1e300};
    for (const auto& s : series)
        for (double v : (use_x ? s.x : s.y)) {
            if (!std::isfinite(v)) continue;
            r.lo = std::min(r.lo, v);
            r.hi = std::max(r.hi, v);
        }
    if (r.lo > r.hi) r = {0, 1};
    if (r.lo == r.hi) {
        r.lo -= 0.5;
        r.hi += 0.5;
    }
    return r;
}

std::string tick_text(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

cv::Mat plane_to_gray(const float* p, int h, int w) {
    cv::Mat m(h, w, CV_8UC3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            float v = std::clamp(p[y * w + x], 0.f, 1.f);
            auto g = static_cast<uint8_t>(std::lround(v * 255.f));
            m.at<cv::Vec3b>(y, x) = {g, g, g};
        }
    return m;
}

cv::Mat mask_to_image(const uint8_t* p, int h, int w) {
    cv::Mat m(h, w, CV_8UC3, cv::Scalar(0, 0, 0));
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (p[y * w + x]) m.at<cv::Vec3b>(y, x) = {255, 255, 255};
    return m;
}

void put_label(cv::Mat& img, const std::string& text, cv::Point at) {
    cv::putText(img, text, at, cv::FONT_HERSHEY_SIMPLEX, 0.38,
                cv::Scalar(230, 230, 230), 1, cv::LINE_AA);
}

}  // namespace

void render_line_plot(const std::string& path, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::vector<PlotSeries>& series) {
    if (series.empty()) throw std::invalid_argument("render_line_plot: no series");
    const int W = 720, H = 480, L = 70, R = 24, T = 44, B = 52;
    cv::Mat img(H, W, CV_8UC3, cv::Scalar(255, 255, 255));

    AxisRange xr = fit_range(series, true);
    AxisRange yr = fit_range(series, false);
    auto px = [&](double v) { return int(std::lround(xr.scale(v, L, W - R))); };
    auto py = [&](double v) { return int(std::lround(yr.scale(v, H - B, T))); };

    cv::Scalar black(0, 0, 0), grey(200, 200, 200);
    cv::rectangle(img, {L, T}, {W - R, H - B}, grey);
    for (int i = 0; i <= 4; ++i) {
        double xv = xr.lo + (xr.hi - xr.lo) * i / 4.0;
        double yv = yr.lo + (yr.hi - yr.lo) * i / 4.0;
        cv::line(img, {px(xv), H - B}, {px(xv), H - B + 4}, black);
        cv::putText(img, tick_text(xv), {px(xv) - 16, H - B + 18},
                    cv::FONT_HERSHEY_SIMPLEX, 0.38, black, 1, cv::LINE_AA);
        cv::line(img, {L - 4, py(yv)}, {L, py(yv)}, black);
        cv::putText(img, tick_text(yv), {6, py(yv) + 4}, cv::FONT_HERSHEY_SIMPLEX,
                    0.38, black, 1, cv::LINE_AA);
    }
    cv::putText(img, title, {L, 26}, cv::FONT_HERSHEY_SIMPLEX, 0.55, black, 1,
                cv::LINE_AA);
    cv::putText(img, x_label, {W / 2 - 30, H - 12}, cv::FONT_HERSHEY_SIMPLEX, 0.45,
                black, 1, cv::LINE_AA);
    cv::putText(img, y_label, {8, T - 10}, cv::FONT_HERSHEY_SIMPLEX, 0.45, black, 1,
                cv::LINE_AA);

    for (size_t s = 0; s < series.size(); ++s) {
        const auto& sr = series[s];
        if (sr.x.size() != sr.y.size())
            throw std::invalid_argument("render_line_plot: x/y length mismatch");
        cv::Scalar color = kSeriesColors[s % 5];
        for (size_t i = 1; i < sr.x.size(); ++i)
            cv::line(img, {px(sr.x[i - 1]), py(sr.y[i - 1])},
                     {px(sr.x[i]), py(sr.y[i])}, color, 2, cv::LINE_AA);
        for (size_t i = 0; i < sr.x.size(); ++i)
            cv::circle(img, {px(sr.x[i]), py(sr.y[i])}, 3, color, cv::FILLED);
        int ly = T + 18 + int(s) * 18;
        cv::line(img, {W - R - 150, ly - 4}, {W - R - 126, ly - 4}, color, 2);
        cv::putText(img, sr.label, {W - R - 120, ly}, cv::FONT_HERSHEY_SIMPLEX, 0.42,
                    black, 1, cv::LINE_AA);
    }
    if (!cv::imwrite(path, img))
        throw std::runtime_error("cannot write plot " + path);
}

void plot_loss_curves(const std::string& path, const std::vector<TrainLogRow>& log,
                      int phase) {
    std::vector<PlotSeries> series;
    auto add = [&](const std::string& label, auto pick) {
        PlotSeries s{label, {}, {}};
        for (const auto& r : log)
            if (r.phase == phase) {
                s.x.push_back(r.epoch);
                s.y.push_back(pick(r));
            }
        if (!s.x.empty()) series.push_back(std::move(s));
    };
    add("l_recon", [](const TrainLogRow& r) { return r.l_recon; });
    if (phase == 2) {
        add("l_seg", [](const TrainLogRow& r) { return r.l_seg; });
        add("l_loc", [](const TrainLogRow& r) { return r.l_loc; });
        add("combined", [](const TrainLogRow& r) { return r.combined; });
    }
    if (series.empty())
        throw std::invalid_argument("no phase-" + std::to_string(phase) +
                                    " rows to plot");
    render_line_plot(path, "Training loss, phase " + std::to_string(phase), "epoch",
                     "loss", series);
}

void plot_sigma_trajectories(const std::string& path,
                             const std::vector<TrainLogRow>& log) {
    PlotSeries s1{"sigma1^2", {}, {}}, s2{"sigma2^2", {}, {}};
    for (const auto& r : log)
        if (r.phase == 2) {
            s1.x.push_back(r.epoch);
            s1.y.push_back(r.sigma1_sq);
            s2.x.push_back(r.epoch);
            s2.y.push_back(r.sigma2_sq);
        }
    if (s1.x.empty()) throw std::invalid_argument("no phase-2 rows to plot");
    render_line_plot(path, "Uncertainty weights", "epoch", "sigma^2", {s1, s2});
}

void save_montage(const std::string& path, nn::SynthModel<float>& model,
                  const DatasetManifest& m, SplitTag tag, int radius,
                  double threshold) {
    auto entries = m.split(tag);
    if (entries.empty()) throw std::invalid_argument("montage: empty split");

    struct Case {
        std::string label;
        PairedSample sample;
        InferenceResult result;
        double dice;
    };
    std::vector<Case> cases;
    for (const auto& e : entries) {
        Case c;
        c.sample = load_sample(e);
        c.result = infer_volume(model, c.sample.t2, threshold);
        c.dice = dice_score(c.result.seg, c.sample.seg);
        c.label = e.id;
        cases.push_back(std::move(c));
    }
    std::sort(cases.begin(), cases.end(),
              [](const Case& a, const Case& b) { return a.dice > b.dice; });
    std::vector<size_t> picks;
    picks.push_back(0);                      // best
    if (cases.size() > 2) picks.push_back(cases.size() / 2);  // median
    if (cases.size() > 1) picks.push_back(cases.size() - 1);  // worst
    const char* names[] = {"best", "median", "worst"};

    const int pad = 6, caption = 18;
    int h = cases[0].sample.t2.height, w = cases[0].sample.t2.width;
    int cols = 4;
    cv::Mat img(int(picks.size()) * (h + caption + pad) + pad,
                cols * (w + pad) + pad, CV_8UC3, cv::Scalar(20, 20, 20));

    for (size_t row = 0; row < picks.size(); ++row) {
        const Case& c = cases[picks[row]];
        // show the slice with the most ground-truth vessel
        size_t plane = size_t(h) * w;
        int best_z = 0;
        long best_count = -1;
        for (int z = 0; z < c.sample.seg.depth; ++z) {
            long n = 0;
            for (size_t i = 0; i < plane; ++i) n += c.sample.seg.data[z * plane + i];
            if (n > best_count) {
                best_count = n;
                best_z = z;
            }
        }
        const float* t2 = c.sample.t2.data.data() + best_z * plane;
        AttentionMap att = make_attention_map(c.sample.t2, c.sample.seg, radius);

        cv::Mat panels[4];
        panels[0] = plane_to_gray(t2, h, w);
        panels[1] = mask_to_image(c.sample.seg.data.data() + best_z * plane, h, w);
        panels[2] = mask_to_image(c.result.seg.data.data() + best_z * plane, h, w);
        panels[3] = plane_to_gray(att.map.data.data() + best_z * plane, h, w);

        int y0 = pad + int(row) * (h + caption + pad);
        char cap[96];
        std::snprintf(cap, sizeof cap, "%s: %s  dice=%.3f",
                      names[row < 3 ? row : 2], c.label.c_str(), c.dice);
        put_label(img, cap, {pad, y0 + caption - 6});
        const char* col_names[] = {"t2", "ground truth", "prediction", "attention"};
        for (int col = 0; col < cols; ++col) {
            int x0 = pad + col * (w + pad);
            panels[col].copyTo(img(cv::Rect(x0, y0 + caption, w, h)));
            if (row == 0) put_label(img, col_names[col], {x0, y0 + caption + 12});
        }
    }
    if (!cv::imwrite(path, img))
        throw std::runtime_error("cannot write montage " + path);
}

ReportFiles write_report(const std::string& out_dir,
                         const std::vector<TrainLogRow>& log,
                         nn::SynthModel<float>& model, const DatasetManifest& m,
                         SplitTag tag, int radius, double threshold) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    ReportFiles out;
    bool has_p1 = false, has_p2 = false;
    for (const auto& r : log) (r.phase == 1 ? has_p1 : has_p2) = true;

    if (has_p1) {
        std::string p = (fs::path(out_dir) / "loss_phase1.png").string();
        plot_loss_curves(p, log, 1);
        out.written.push_back(p);
    }
    if (has_p2) {
        std::string p = (fs::path(out_dir) / "loss_phase2.png").string();
        plot_loss_curves(p, log, 2);
        out.written.push_back(p);
        p = (fs::path(out_dir) / "sigma_trajectory.png").string();
        plot_sigma_trajectories(p, log);
        out.written.push_back(p);
    } else {
        out.sigma_skipped = true;
    }
    std::string p = (fs::path(out_dir) / "montage.png").string();
    save_montage(p, model, m, tag, radius, threshold);
    out.written.push_back(p);
    return out;
}

}  // namespace cow
