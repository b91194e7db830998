#include "cowsynth/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace cow {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Foreground voxels with a background face-neighbour (border = background).
std::vector<uint8_t> surface(const BinaryMask& m) {
    std::vector<uint8_t> s(m.size(), 0);
    for (int z = 0; z < m.depth; ++z)
        for (int y = 0; y < m.height; ++y)
            for (int x = 0; x < m.width; ++x) {
                if (!m.at(z, y, x)) continue;
                bool edge = z == 0 || z == m.depth - 1 || y == 0 || y == m.height - 1 ||
                            x == 0 || x == m.width - 1;
                if (edge || !m.at(z - 1, y, x) || !m.at(z + 1, y, x) ||
                    !m.at(z, y - 1, x) || !m.at(z, y + 1, x) || !m.at(z, y, x - 1) ||
                    !m.at(z, y, x + 1))
                    s[(static_cast<size_t>(z) * m.height + y) * m.width + x] = 1;
            }
    return s;
}

// Lower envelope of parabolas (exact 1D squared EDT), grid step `step` mm.
void dt1d(const double* f, double* d, int n, double step, int* v, double* zbuf) {
    int k = 0;
    v[0] = 0;
    zbuf[0] = -kInf;
    zbuf[1] = kInf;
    auto sq = [](double a) { return a * a; };
    for (int q = 1; q < n; ++q) {
        if (f[q] == kInf) continue;
        double s;
        while (true) {
            if (f[v[k]] == kInf) {
                // previous site is unreachable: replace it outright
                if (k > 0) {
                    --k;
                    continue;
                }
                v[0] = q;
                zbuf[0] = -kInf;
                zbuf[1] = kInf;
                break;
            }
            double xq = q * step, xv = v[k] * step;
            s = (f[q] + sq(xq) - (f[v[k]] + sq(xv))) / (2 * xq - 2 * xv);
            if (s <= zbuf[k]) {
                --k;
                continue;
            }
            ++k;
            v[k] = q;
            zbuf[k] = s;
            zbuf[k + 1] = kInf;
            break;
        }
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        double xq = q * step;
        while (zbuf[k + 1] < xq) ++k;
        double xv = v[k] * step;
        d[q] = (f[v[k]] == kInf) ? kInf : (xq - xv) * (xq - xv) + f[v[k]];
    }
}

// Exact squared Euclidean distance (mm^2) from every voxel to the nearest
// set voxel of `sites`, separable pass per axis.
std::vector<double> edt_sq(const std::vector<uint8_t>& sites, int depth, int height,
                           int width, const std::array<float, 3>& spacing) {
    std::vector<double> d(sites.size());
    for (size_t i = 0; i < sites.size(); ++i) d[i] = sites[i] ? 0.0 : kInf;

    int nmax = std::max({depth, height, width});
    std::vector<double> f(nmax), out(nmax), zbuf(nmax + 1);
    std::vector<int> v(nmax);
    auto idx = [&](int z, int y, int x) {
        return (static_cast<size_t>(z) * height + y) * width + x;
    };

    for (int z = 0; z < depth; ++z)  // along x
        for (int y = 0; y < height; ++y) {
            double* row = d.data() + idx(z, y, 0);
            dt1d(row, out.data(), width, spacing[2], v.data(), zbuf.data());
            std::copy(out.begin(), out.begin() + width, row);
        }
    for (int z = 0; z < depth; ++z)  // along y
        for (int x = 0; x < width; ++x) {
            for (int y = 0; y < height; ++y) f[y] = d[idx(z, y, x)];
            dt1d(f.data(), out.data(), height, spacing[1], v.data(), zbuf.data());
            for (int y = 0; y < height; ++y) d[idx(z, y, x)] = out[y];
        }
    for (int y = 0; y < height; ++y)  // along z
        for (int x = 0; x < width; ++x) {
            for (int z = 0; z < depth; ++z) f[z] = d[idx(z, y, x)];
            dt1d(f.data(), out.data(), depth, spacing[0], v.data(), zbuf.data());
            for (int z = 0; z < depth; ++z) d[idx(z, y, x)] = out[z];
        }
    return d;
}

// Distances from every set voxel of `from` to the nearest set voxel of `to`.
std::vector<double> directed_distances(const std::vector<uint8_t>& from,
                                       const std::vector<uint8_t>& to, int depth,
                                       int height, int width,
                                       const std::array<float, 3>& spacing) {
    std::vector<double> dsq = edt_sq(to, depth, height, width, spacing);
    std::vector<double> out;
    for (size_t i = 0; i < from.size(); ++i)
        if (from[i]) out.push_back(std::sqrt(dsq[i]));
    return out;
}

}  // namespace

double dice_score(const BinaryMask& pred, const BinaryMask& gt) {
    if (!pred.same_shape(gt))
        throw std::invalid_argument("dice_score: shape mismatch");
    size_t inter = 0, p = 0, g = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        bool a = pred.data[i] != 0, b = gt.data[i] != 0;
        inter += a && b;
        p += a;
        g += b;
    }
    if (p + g == 0) return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(p + g);
}

double percentile(std::vector<double> values, double q) {
    if (values.empty()) throw std::invalid_argument("percentile of empty sample");
    if (q < 0.0 || q > 1.0) throw std::invalid_argument("percentile q outside [0,1]");
    std::sort(values.begin(), values.end());
    double rank = q * static_cast<double>(values.size() - 1);
    size_t lo = static_cast<size_t>(rank);
    double frac = rank - static_cast<double>(lo);
    if (lo + 1 >= values.size()) return values.back();
    return values[lo] + frac * (values[lo + 1] - values[lo]);
}

std::optional<double> hd95(const BinaryMask& a, const BinaryMask& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("hd95: shape mismatch");
    if (a.spacing != b.spacing)
        throw std::invalid_argument("hd95: spacing mismatch");
    if (a.count_positive() == 0 || b.count_positive() == 0) return std::nullopt;

    std::vector<uint8_t> sa = surface(a), sb = surface(b);
    std::vector<double> d_ab =
        directed_distances(sa, sb, a.depth, a.height, a.width, a.spacing);
    std::vector<double> d_ba =
        directed_distances(sb, sa, a.depth, a.height, a.width, a.spacing);
    return std::max(percentile(std::move(d_ab), 0.95),
                    percentile(std::move(d_ba), 0.95));
}

MetricSummary summarize(const std::vector<double>& values) {
    MetricSummary s;
    s.n = static_cast<int>(values.size());
    if (values.empty()) return s;
    double sum = 0;
    for (double v : values) sum += v;
    s.mean = sum / s.n;
    if (s.n == 1) {
        s.ci_lo = s.ci_hi = s.mean;
        return s;
    }
    double ss = 0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    double se = std::sqrt(ss / (s.n - 1)) / std::sqrt(static_cast<double>(s.n));
    s.ci_lo = s.mean - 1.96 * se;
    s.ci_hi = s.mean + 1.96 * se;
    return s;
}

EvalSummary summarize_records(const std::vector<EvalRecord>& records) {
    if (records.empty()) throw std::invalid_argument("no evaluation records");
    EvalSummary s;
    s.n_cases = static_cast<int>(records.size());
    std::vector<double> dices, hds;
    for (const auto& r : records) {
        dices.push_back(r.dice);
        if (r.hd95)
            hds.push_back(*r.hd95);
        else
            ++s.n_hd95_missing;
    }
    s.dice = summarize(dices);
    s.hd95 = summarize(hds);
    return s;
}

void write_metrics_csv(const std::string& path, const std::vector<EvalRecord>& records) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "case_id,dice,hd95\n";
    out.precision(17);  // doubles survive the round trip
    for (const auto& r : records) {
        out << r.id << ',' << r.dice << ',';
        if (r.hd95) out << *r.hd95;
        out << '\n';
    }
    if (!out.good()) throw std::runtime_error("write failure: " + path);
}

std::vector<EvalRecord> read_metrics_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::string line;
    if (!std::getline(in, line) || line != "case_id,dice,hd95")
        throw std::runtime_error("unexpected metrics CSV header in " + path);
    std::vector<EvalRecord> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        EvalRecord r;
        std::string dice_s, hd_s;
        if (!std::getline(ss, r.id, ',') || !std::getline(ss, dice_s, ','))
            throw std::runtime_error("malformed metrics row: " + line);
        std::getline(ss, hd_s, ',');
        r.dice = std::stod(dice_s);
        if (!hd_s.empty()) r.hd95 = std::stod(hd_s);
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace cow
