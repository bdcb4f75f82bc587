#include "ss/apps/kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "ss/common/error.hpp"

namespace ss::apps {

namespace {

struct Partial {
    uint64_t count = 0;
    double sse = 0.0;
    std::vector<double> sums;
};

uint32_t nearest(const std::vector<double>& p,
                 const std::vector<std::vector<double>>& centers, double* dist2) {
    uint32_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (uint32_t c = 0; c < centers.size(); ++c) {
        double d2 = 0;
        for (size_t j = 0; j < p.size(); ++j) {
            double diff = p[j] - centers[c][j];
            d2 += diff * diff;
        }
        if (d2 < best_d) {
            best_d = d2;
            best = c;
        }
    }
    *dist2 = best_d;
    return best;
}

std::vector<std::vector<double>> read_centers(ByteReader& r, uint32_t k, uint32_t d) {
    std::vector<std::vector<double>> cs(k, std::vector<double>(d));
    for (auto& c : cs)
        for (auto& x : c) x = r.f64();
    return cs;
}

}  // namespace

Bytes kmeans_points(uint64_t n, uint32_t d, uint32_t blobs, uint64_t seed) {
    if (d == 0) throw Error(Err::BadDimension, "points need at least one coordinate");
    if (blobs == 0) blobs = 1;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> place(-50.0, 50.0);
    std::vector<std::vector<double>> centers(blobs, std::vector<double>(d));
    for (auto& c : centers)
        for (auto& x : c) x = place(rng);

    std::normal_distribution<double> noise(0.0, 1.0);
    ByteWriter w;
    for (uint64_t i = 0; i < n; ++i) {
        const auto& c = centers[rng() % blobs];
        for (uint32_t j = 0; j < d; ++j) w.f64(c[j] + noise(rng));
    }
    return w.take();
}

std::vector<std::vector<double>> parse_points(const Bytes& data, uint32_t d) {
    if (d == 0 || data.size() % (8 * size_t(d)) != 0)
        throw Error(Err::BadDimension, "byte count does not divide into points");
    ByteReader r(data);
    std::vector<std::vector<double>> pts(data.size() / (8 * size_t(d)),
                                         std::vector<double>(d));
    for (auto& p : pts)
        for (auto& x : p) x = r.f64();
    return pts;
}

void register_kmeans_udfs(sphere::UdfRegistry& reg) {
    if (reg.contains("km/assign")) return;
    // one partial per nonempty center: who, how many points, their squared
    // distance to it, and the coordinate sums for the mean update
    reg.register_segment_udf("km/assign", [](const std::vector<Bytes>& recs, const Bytes& arg) {
        ByteReader ar(arg);
        uint32_t k = ar.u32();
        uint32_t d = ar.u32();
        auto centers = read_centers(ar, k, d);

        std::vector<Partial> acc(k);
        std::vector<double> p(d);
        for (const auto& rec : recs) {
            ByteReader r(rec);
            for (auto& x : p) x = r.f64();
            double d2 = 0;
            uint32_t c = nearest(p, centers, &d2);
            auto& a = acc[c];
            if (a.sums.empty()) a.sums.assign(d, 0.0);
            ++a.count;
            a.sse += d2;
            for (uint32_t j = 0; j < d; ++j) a.sums[j] += p[j];
        }

        std::vector<sphere::Emit> out;
        for (uint32_t c = 0; c < k; ++c) {
            if (acc[c].count == 0) continue;
            ByteWriter w;
            w.u32(c);
            w.u64(acc[c].count);
            w.f64(acc[c].sse);
            for (double s : acc[c].sums) w.f64(s);
            out.emplace_back(c, w.take());
        }
        return out;
    });
}

std::vector<std::vector<double>> kmeans_init(const std::vector<std::vector<double>>& points,
                                             uint32_t k, uint64_t seed) {
    if (k == 0) throw Error(Err::InvalidInput, "need at least one center");
    if (k > points.size())
        throw Error(Err::KTooLarge, std::to_string(k) + " centers from " +
                                        std::to_string(points.size()) + " points");
    std::vector<size_t> order(points.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<std::vector<double>> centers;
    for (size_t idx : order) {
        if (std::find(centers.begin(), centers.end(), points[idx]) != centers.end()) continue;
        centers.push_back(points[idx]);
        if (centers.size() == k) return centers;
    }
    throw Error(Err::KTooLarge, "only " + std::to_string(centers.size()) +
                                    " distinct points for " + std::to_string(k) + " centers");
}

KMeansModel kmeans_run(sphere::JobRunner& jr, storage::StorageClient& files,
                       const std::vector<std::string>& inputs, uint32_t k, uint32_t d,
                       uint32_t iters, uint64_t seed, CenterTrace* trace) {
    if (d == 0) throw Error(Err::BadDimension, "points need at least one coordinate");
    Bytes all;
    for (const auto& name : inputs) {
        Bytes part = files.download(name);
        all.insert(all.end(), part.begin(), part.end());
    }
    auto points = parse_points(all, d);
    auto centers = kmeans_init(points, k, seed);

    KMeansModel m;
    m.k = k;
    m.d = d;
    uint32_t n_buckets = std::min<uint32_t>(k, 8);

    for (uint32_t it = 0; it < iters; ++it) {
        ByteWriter arg;
        arg.u32(k);
        arg.u32(d);
        for (const auto& c : centers)
            for (double x : c) arg.f64(x);

        sphere::JobSpec js;
        js.input.files = inputs;
        js.input.format = sphere::RecordFormat::fixed(8 * d);
        js.stages = {{"km/assign", n_buckets, arg.take()}};
        js.output_name = "km/partials";
        auto& h = jr.submit_job(js);
        jr.drive(h);
        auto buckets = jr.take_outputs(h);

        std::vector<Partial> acc(k);
        double inertia = 0.0;
        for (auto& [bucket, bytes] : buckets) {
            for (auto& rec : sphere::split_records(bytes,
                                                   sphere::RecordFormat::length_prefixed())) {
                ByteReader r(rec);
                uint32_t c = r.u32();
                uint64_t count = r.u64();
                double sse = r.f64();
                auto& a = acc.at(c);
                if (a.sums.empty()) a.sums.assign(d, 0.0);
                a.count += count;
                a.sse += sse;
                for (uint32_t j = 0; j < d; ++j) a.sums[j] += r.f64();
            }
        }
        for (uint32_t c = 0; c < k; ++c) {
            if (acc[c].count == 0) continue;  // nobody came: the center stays
            for (uint32_t j = 0; j < d; ++j)
                centers[c][j] = acc[c].sums[j] / double(acc[c].count);
            inertia += acc[c].sse;
        }
        m.inertia = inertia;
        ++m.iterations;
        if (trace) trace->push_back(centers);
    }
    m.centers = std::move(centers);
    return m;
}

KMeansModel kmeans_reference(const std::vector<std::vector<double>>& points,
                             std::vector<std::vector<double>> centers, uint32_t iters,
                             CenterTrace* trace) {
    KMeansModel m;
    m.k = uint32_t(centers.size());
    m.d = centers.empty() ? 0 : uint32_t(centers[0].size());

    for (uint32_t it = 0; it < iters; ++it) {
        std::vector<Partial> acc(centers.size());
        double inertia = 0.0;
        for (const auto& p : points) {
            double d2 = 0;
            uint32_t c = nearest(p, centers, &d2);
            auto& a = acc[c];
            if (a.sums.empty()) a.sums.assign(p.size(), 0.0);
            ++a.count;
            inertia += d2;
            for (size_t j = 0; j < p.size(); ++j) a.sums[j] += p[j];
        }
        for (uint32_t c = 0; c < centers.size(); ++c) {
            if (acc[c].count == 0) continue;
            for (size_t j = 0; j < centers[c].size(); ++j)
                centers[c][j] = acc[c].sums[j] / double(acc[c].count);
        }
        m.inertia = inertia;
        ++m.iterations;
        if (trace) trace->push_back(centers);
    }
    m.centers = std::move(centers);
    return m;
}

}  // namespace ss::apps
