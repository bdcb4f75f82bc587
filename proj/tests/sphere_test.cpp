#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>
#include <set>

#include "ss/cluster/sim_cluster.hpp"

using namespace ss;
using namespace ss::sphere;

#define CHECK_ERR(expr, expected)                    \
    do {                                             \
        try {                                        \
            expr;                                    \
            FAIL("expected " << err_name(expected)); \
        } catch (const Error& e_) {                  \
            CHECK(e_.code() == expected);            \
        }                                            \
    } while (0)

namespace {

Bytes rec_of(std::initializer_list<uint8_t> b) { return Bytes(b); }

// n fixed-width records; each starts with its index as a big-endian u32 so
// tests can recover identity and ordering from the bytes alone.
Bytes numbered_records(size_t n, uint32_t width, uint64_t seed = 7) {
    REQUIRE(width >= 4);
    Bytes out;
    out.reserve(n * width);
    std::mt19937_64 rng(seed);
    for (size_t i = 0; i < n; ++i) {
        ByteWriter w;
        w.u32(uint32_t(i));
        out.insert(out.end(), w.data().begin(), w.data().end());
        for (uint32_t f = 4; f < width; ++f) out.push_back(uint8_t(rng()));
    }
    return out;
}

std::multiset<Bytes> mset(const std::vector<Bytes>& v) { return {v.begin(), v.end()}; }

// Reference execution on one machine: the same segmentation (one segment per
// chunk, then one per bucket) and the same staging rules (bucket contents
// concatenate contributions in segment order), with no network anywhere.
std::map<uint32_t, std::vector<Bytes>> reference_run(cluster::SimCluster& cl,
                                                     const JobSpec& spec,
                                                     const std::map<std::string, Bytes>& data) {
    std::vector<std::vector<Bytes>> segs;
    uint64_t cs = cl.config().chunk_size;
    for (const auto& name : spec.input.files) {
        const Bytes& whole = data.at(name);
        for (size_t off = 0; off < whole.size(); off += cs) {
            size_t n = std::min<size_t>(cs, whole.size() - off);
            segs.push_back(split_records({whole.data() + off, n}, spec.input.format));
        }
    }
    for (const auto& st : spec.stages) {
        const Udf* udf = cl.udfs().find(st.udf);
        REQUIRE(udf != nullptr);
        std::vector<std::vector<Emit>> emitted(segs.size());
        for (size_t i = 0; i < segs.size(); ++i) emitted[i] = apply_udf(*udf, segs[i], st.arg);
        std::vector<std::vector<Bytes>> next;
        if (st.n_buckets == 0) {
            next.resize(segs.size());
            for (size_t i = 0; i < segs.size(); ++i)
                for (auto& [b, rec] : emitted[i]) next[i].push_back(rec);
        } else {
            next.resize(st.n_buckets);
            for (size_t i = 0; i < segs.size(); ++i)
                for (auto& [b, rec] : emitted[i]) next[b % st.n_buckets].push_back(rec);
        }
        segs = std::move(next);
    }
    std::map<uint32_t, std::vector<Bytes>> out;
    for (size_t i = 0; i < segs.size(); ++i) out[uint32_t(i)] = segs[i];
    return out;
}

// Downloads "name/bucket_<k>" files and splits them back into records.
std::map<uint32_t, std::vector<Bytes>> fetch_outputs(storage::StorageClient& c,
                                                     const std::vector<std::string>& names) {
    std::map<uint32_t, std::vector<Bytes>> out;
    for (const auto& n : names) {
        auto k = uint32_t(std::stoul(n.substr(n.rfind('_') + 1)));
        Bytes bytes = c.download(n);
        out[k] = split_records(bytes, RecordFormat::length_prefixed());
    }
    return out;
}

void register_identity(cluster::SimCluster& cl, const std::string& name = "idy") {
    cl.udfs().register_udf(name, [](std::span<const uint8_t> rec, const Bytes&) {
        return std::vector<Emit>{{0, Bytes(rec.begin(), rec.end())}};
    });
}

cluster::ClusterConfig quick(int nodes, uint64_t chunk_size, uint64_t seed,
                             int replicas = 3) {
    cluster::ClusterConfig cc;
    cc.nodes = nodes;
    cc.chunk_size = chunk_size;
    cc.seed = seed;
    cc.target_replicas = replicas;
    return cc;
}

}  // namespace

TEST_CASE("records split and join cleanly and reject torn framing") {
    Bytes fixed = {1, 2, 3, 4, 5, 6};
    auto recs = split_records(fixed, RecordFormat::fixed(2));
    REQUIRE(recs.size() == 3);
    CHECK(recs[0] == rec_of({1, 2}));
    CHECK(recs[2] == rec_of({5, 6}));

    CHECK(split_records({}, RecordFormat::fixed(4)).empty());
    CHECK(split_records({}, RecordFormat::length_prefixed()).empty());
    CHECK_ERR(split_records(fixed, RecordFormat::fixed(4)), Err::Decode);
    CHECK_ERR(split_records(fixed, RecordFormat::fixed(0)), Err::Decode);

    std::vector<Bytes> in = {rec_of({9}), {}, rec_of({7, 8, 9})};
    Bytes lp = join_length_prefixed(in);
    CHECK(lp.size() == 3 * 4 + 4);
    CHECK(split_records(lp, RecordFormat::length_prefixed()) == in);

    Bytes torn(lp.begin(), lp.end() - 1);  // last record loses a byte
    CHECK_ERR(split_records(torn, RecordFormat::length_prefixed()), Err::Decode);
    Bytes stub = {0, 0, 1};  // prefix itself is cut short
    CHECK_ERR(split_records(stub, RecordFormat::length_prefixed()), Err::Decode);
    Bytes liar = {0, 0, 0, 9, 1};  // claims nine bytes, holds one
    CHECK_ERR(split_records(liar, RecordFormat::length_prefixed()), Err::Decode);
}

TEST_CASE("the function registry takes each name only once") {
    UdfRegistry reg;
    reg.register_udf("a", [](std::span<const uint8_t>, const Bytes&) {
        return std::vector<Emit>{};
    });
    CHECK(reg.contains("a"));
    CHECK(!reg.contains("b"));
    CHECK(reg.find("b") == nullptr);
    CHECK_ERR(reg.register_udf("a",
                               [](std::span<const uint8_t>, const Bytes&) {
                                   return std::vector<Emit>{};
                               }),
              Err::DuplicateName);
    // the two kinds share one namespace
    CHECK_ERR(reg.register_segment_udf("a",
                                       [](const std::vector<Bytes>&, const Bytes&) {
                                           return std::vector<Emit>{};
                                       }),
              Err::DuplicateName);
    reg.register_segment_udf("b", [](const std::vector<Bytes>& rs, const Bytes&) {
        std::vector<Emit> out;
        for (const auto& r : rs) out.emplace_back(0, r);
        return out;
    });
    CHECK(reg.find("b")->segment != nullptr);
}

TEST_CASE("running a function keeps record order and pins failures") {
    std::vector<Bytes> recs = {rec_of({1}), rec_of({2}), rec_of({3})};

    Udf doubler;
    doubler.record = [](std::span<const uint8_t> r, const Bytes& arg) {
        std::vector<Emit> out;
        out.emplace_back(r[0], Bytes(r.begin(), r.end()));
        Bytes again(r.begin(), r.end());
        again.insert(again.end(), arg.begin(), arg.end());
        out.emplace_back(r[0] + 10, again);
        return out;
    };
    Bytes arg = {0xAA};
    auto em = apply_udf(doubler, recs, arg);
    REQUIRE(em.size() == 6);
    CHECK(em[0].first == 1);
    CHECK(em[1].first == 11);
    CHECK(em[1].second == rec_of({1, 0xAA}));
    CHECK(em[4].first == 3);

    Udf trips;
    trips.record = [](std::span<const uint8_t> r, const Bytes&) -> std::vector<Emit> {
        if (r[0] == 2) throw std::runtime_error("bad value");
        return {{0, Bytes(r.begin(), r.end())}};
    };
    uint64_t where = 99;
    CHECK_ERR(apply_udf(trips, recs, {}, &where), Err::UdfError);
    CHECK(where == 1);

    Udf whole;
    whole.segment = [](const std::vector<Bytes>& rs, const Bytes&) {
        Bytes all;
        for (const auto& r : rs) all.insert(all.end(), r.begin(), r.end());
        return std::vector<Emit>{{0, all}};
    };
    auto one = apply_udf(whole, recs, {});
    REQUIRE(one.size() == 1);
    CHECK(one[0].second == rec_of({1, 2, 3}));
}

TEST_CASE("planning walks chunks in file order and carries placement") {
    storage::FileMetadata a;
    a.name = "a";
    a.size_bytes = 300;
    a.chunk_size = 100;
    a.version = 2;
    a.chunk_crcs = {0, 0, 0};
    a.replicas = {{{"n1", 1}}, {{"n2", 1}}, {{"n3", 1}, {"n1", 1}}};
    storage::FileMetadata b;
    b.name = "b";
    b.size_bytes = 50;
    b.chunk_size = 100;
    b.version = 1;
    b.chunk_crcs = {0};
    b.replicas = {{{"n2", 1}}};

    RecordStream in;
    in.files = {"a", "b"};
    in.format = RecordFormat::fixed(10);
    auto segs = plan_segments({a, b}, in);
    REQUIRE(segs.size() == 4);
    CHECK(segs[0].file == "a");
    CHECK(segs[0].chunk_index == 0);
    CHECK(segs[0].first_record == 0);
    CHECK(segs[0].last_record == 10);
    CHECK(segs[0].version == 2);
    CHECK(segs[2].chunk_index == 2);
    CHECK(segs[2].first_record == 20);
    CHECK(segs[2].preferred.size() == 2);
    CHECK(segs[3].file == "b");
    CHECK(segs[3].first_record == 30);
    CHECK(segs[3].last_record == 35);
    for (size_t i = 0; i < segs.size(); ++i) CHECK(segs[i].id == i);

    in.total_records = 35;
    CHECK(plan_segments({a, b}, in).size() == 4);
    in.total_records = 99;
    CHECK_ERR(plan_segments({a, b}, in), Err::AdmissionFailed);
    in.total_records = 0;

    // counts are unknowable up front for length-prefixed data
    in.format = RecordFormat::length_prefixed();
    auto lazy = plan_segments({a, b}, in);
    REQUIRE(lazy.size() == 4);
    for (const auto& s : lazy) CHECK(s.first_record == s.last_record);

    storage::FileMetadata empty;
    empty.name = "e";
    empty.chunk_size = 100;
    CHECK(plan_segments({empty}, in).empty());
}

TEST_CASE("planning rejects records that straddle boundaries") {
    storage::FileMetadata f;
    f.name = "f";
    f.size_bytes = 300;
    f.chunk_size = 100;
    f.chunk_crcs = {0, 0, 0};
    f.replicas = {{{"n1", 1}}, {{"n1", 1}}, {{"n1", 1}}};

    RecordStream in;
    in.files = {"f"};
    in.format = RecordFormat::fixed(7);  // 300 % 7 != 0
    CHECK_ERR(plan_segments({f}, in), Err::AdmissionFailed);

    in.format = RecordFormat::fixed(30);  // divides 300 but not the 100-byte chunks
    CHECK_ERR(plan_segments({f}, in), Err::AdmissionFailed);

    in.format = RecordFormat::fixed(0);
    CHECK_ERR(plan_segments({f}, in), Err::AdmissionFailed);

    // a single chunk may end wherever the file does
    f.size_bytes = 90;
    f.chunk_crcs = {0};
    f.replicas = {{{"n1", 1}}};
    in.format = RecordFormat::fixed(30);
    CHECK(plan_segments({f}, in).size() == 1);
}

TEST_CASE("the scheduler prefers data-local workers and breaks ties low") {
    net::Address a{"a", 1}, b{"b", 1}, c{"c", 1};
    std::vector<Segment> segs(2);
    segs[0].id = 0;
    segs[0].preferred = {b};
    segs[1].id = 1;
    segs[1].preferred = {c};

    SchedulerState st;
    st.segments = &segs;
    st.state = {SegState::Pending, SegState::Pending};
    st.workers = {{a, true, 0}, {b, true, 0}, {c, true, 0}};

    // the holder wins even when another idle worker sorts lower
    auto pick = assign_segment(st);
    REQUIRE(pick);
    CHECK(pick->segment == 0);
    CHECK(pick->worker == b);

    // first pending segment with an idle holder, in id order
    st.workers[1].idle = false;
    pick = assign_segment(st);
    REQUIRE(pick);
    CHECK(pick->segment == 1);
    CHECK(pick->worker == c);

    // no idle holder anywhere: least-loaded idle worker takes the first
    // pending segment
    st.workers[2].idle = false;
    pick = assign_segment(st);
    REQUIRE(pick);
    CHECK(pick->segment == 0);
    CHECK(pick->worker == a);

    st.state[0] = SegState::Running;
    pick = assign_segment(st);
    REQUIRE(pick);
    CHECK(pick->segment == 1);
    CHECK(pick->worker == a);

    st.state[1] = SegState::Done;
    CHECK(!assign_segment(st));

    st.state = {SegState::Pending, SegState::Pending};
    st.workers = {{a, false, 0}, {b, false, 0}, {c, false, 0}};
    CHECK(!assign_segment(st));

    // load splits remote ties; equal load falls back to the lowest address
    segs[0].preferred.clear();
    segs[1].preferred.clear();
    st.workers = {{a, true, 5}, {b, true, 2}, {c, true, 2}};
    pick = assign_segment(st);
    REQUIRE(pick);
    CHECK(pick->segment == 0);
    CHECK(pick->worker == b);
}

TEST_CASE("bucket routing is a fixed modulus over the worker list") {
    std::vector<net::Address> ws = {{"a", 1}, {"b", 1}, {"c", 1}};
    CHECK(shuffle_route(0, ws) == ws[0]);
    CHECK(shuffle_route(1, ws) == ws[1]);
    CHECK(shuffle_route(2, ws) == ws[2]);
    CHECK(shuffle_route(5, ws) == ws[2]);
    CHECK(shuffle_route(300, ws) == ws[0]);
    CHECK_ERR(shuffle_route(0, {}), Err::Internal);
}

TEST_CASE("a one-stage job reproduces its input exactly") {
    cluster::SimCluster cl(quick(3, 2500, 11));
    cl.converge_ring();
    register_identity(cl);

    Bytes data = numbered_records(1000, 10);
    auto& c = cl.make_client("alice");
    c.upload("in/a", data);

    auto& jr = cl.make_runner("alice");
    JobSpec js;
    js.input.files = {"in/a"};
    js.input.format = RecordFormat::fixed(10);
    js.stages = {{"idy", 0, {}}};
    js.output_name = "same";

    auto& h = jr.submit_job(js);
    CHECK(h.progress().total == 4);  // 10,000 bytes in 2,500-byte chunks
    jr.drive(h);
    CHECK(h.done());
    auto prog = h.progress();
    CHECK(prog.state == 1);
    CHECK(prog.done == 4);
    CHECK(prog.records == 1000);

    auto names = jr.collect(h);
    REQUIRE(names.size() == 4);
    auto got = fetch_outputs(c, names);

    // without a shuffle each chunk's records come back where they were, in
    // the order they went in
    auto want = reference_run(cl, js, {{"in/a", data}});
    CHECK(got == want);
    std::vector<Bytes> all_in = split_records(data, js.input.format);
    std::vector<Bytes> all_out;
    for (auto& [k, recs] : got) all_out.insert(all_out.end(), recs.begin(), recs.end());
    CHECK(mset(all_out) == mset(all_in));

    // every replica held every chunk, so nothing travelled to be read
    uint64_t remote = 0, ran = 0;
    for (size_t i = 0; i < cl.size(); ++i) {
        remote += cl.worker(i).stats().remote_chunk_fetches;
        ran += cl.worker(i).stats().segments_run;
    }
    CHECK(remote == 0);
    CHECK(ran == 4);
}

TEST_CASE("shuffled outputs partition the records by bucket") {
    cluster::SimCluster cl(quick(4, 1500, 23));
    cl.converge_ring();
    cl.udfs().register_udf("by-tail", [](std::span<const uint8_t> rec, const Bytes&) {
        return std::vector<Emit>{{rec.back(), Bytes(rec.begin(), rec.end())}};
    });

    Bytes data = numbered_records(600, 10, 99);
    auto& c = cl.make_client("alice");
    c.upload("part/in", data);

    auto& jr = cl.make_runner("alice");
    JobSpec js;
    js.input.files = {"part/in"};
    js.input.format = RecordFormat::fixed(10);
    js.stages = {{"by-tail", 5, {}}};
    js.output_name = "part/out";

    auto& h = jr.submit_job(js);
    jr.drive(h);
    auto names = jr.collect(h);
    REQUIRE(names.size() == 5);
    auto got = fetch_outputs(c, names);

    size_t total = 0;
    for (auto& [k, recs] : got) {
        for (const auto& r : recs) CHECK(r.back() % 5 == k);
        total += recs.size();
    }
    CHECK(total == 600);
    CHECK(got == reference_run(cl, js, {{"part/in", data}}));
}

TEST_CASE("a two-stage job sorts records end to end") {
    cluster::SimCluster cl(quick(4, 1500, 31));
    cl.converge_ring();
    // spread by the top two bits of the leading u32, then sort each range
    cl.udfs().register_udf("top-bits", [](std::span<const uint8_t> rec, const Bytes&) {
        uint32_t v = uint32_t(rec[0]) << 24 | uint32_t(rec[1]) << 16 | uint32_t(rec[2]) << 8 |
                     rec[3];
        return std::vector<Emit>{{v >> 30, Bytes(rec.begin(), rec.end())}};
    });
    cl.udfs().register_segment_udf("sorted", [](const std::vector<Bytes>& recs, const Bytes&) {
        auto copy = recs;
        std::sort(copy.begin(), copy.end());
        std::vector<Emit> out;
        for (auto& r : copy) out.emplace_back(0, std::move(r));
        return out;
    });

    // leading u32s drawn across the whole range so every bucket gets some
    Bytes data;
    std::mt19937_64 rng(5150);
    for (int i = 0; i < 600; ++i) {
        ByteWriter w;
        w.u32(uint32_t(rng()));
        w.u32(uint32_t(rng()));
        w.u16(uint16_t(rng()));
        data.insert(data.end(), w.data().begin(), w.data().end());
    }
    auto& c = cl.make_client("alice");
    c.upload("sort/in", data);

    auto& jr = cl.make_runner("alice");
    JobSpec js;
    js.input.files = {"sort/in"};
    js.input.format = RecordFormat::fixed(10);
    js.stages = {{"top-bits", 4, {}}, {"sorted", 0, {}}};
    js.output_name = "sort/out";

    auto& h = jr.submit_job(js);
    jr.drive(h);
    auto got = fetch_outputs(c, jr.collect(h));
    REQUIRE(got.size() == 4);

    // ranges ascend with the bucket id, so the concatenation is the sort
    std::vector<Bytes> flat;
    for (auto& [k, recs] : got) flat.insert(flat.end(), recs.begin(), recs.end());
    auto want = split_records(data, js.input.format);
    std::sort(want.begin(), want.end());
    CHECK(flat == want);
    CHECK(got == reference_run(cl, js, {{"sort/in", data}}));
}

TEST_CASE("submission checks functions, inputs, and shuffle width up front") {
    cluster::SimCluster cl(quick(3, 1000, 41));
    cl.converge_ring();
    register_identity(cl);
    auto& c = cl.make_client("alice");
    c.upload("ok", numbered_records(100, 10));
    c.upload("ragged", Bytes(105, 0x5A));
    auto& jr = cl.make_runner("alice");

    JobSpec js;
    js.input.files = {"ok"};
    js.input.format = RecordFormat::fixed(10);
    js.stages = {{"idy", 0, {}}};
    js.output_name = "out";

    auto bad = js;
    bad.stages.clear();
    CHECK_ERR(jr.submit_job(bad), Err::InvalidInput);
    bad = js;
    bad.output_name.clear();
    CHECK_ERR(jr.submit_job(bad), Err::InvalidInput);
    bad = js;
    bad.stages[0].udf = "nope";
    CHECK_ERR(jr.submit_job(bad), Err::UnknownUdf);
    bad = js;
    bad.input.files.clear();
    CHECK_ERR(jr.submit_job(bad), Err::UnknownInput);
    bad = js;
    bad.input.files = {"ghost"};
    CHECK_ERR(jr.submit_job(bad), Err::UnknownInput);
    bad = js;
    bad.input.files = {"ragged"};  // 105 bytes never divides into tens
    CHECK_ERR(jr.submit_job(bad), Err::AdmissionFailed);
    bad = js;
    bad.stages[0].n_buckets = 3 * 64 + 1;  // past what three workers may hold
    CHECK_ERR(jr.submit_job(bad), Err::AdmissionFailed);

    auto& h = jr.submit_job(js);
    CHECK_ERR(jr.collect(h), Err::JobNotDone);
    jr.drive(h);
    CHECK(jr.collect(h).size() == 1);
}

TEST_CASE("a job over an empty file finishes with nothing to show") {
    cluster::SimCluster cl(quick(3, 1000, 43));
    cl.converge_ring();
    register_identity(cl);
    auto& c = cl.make_client("alice");
    c.upload("void", {});
    auto& jr = cl.make_runner("alice");

    JobSpec js;
    js.input.files = {"void"};
    js.input.format = RecordFormat::fixed(10);
    js.stages = {{"idy", 0, {}}};
    js.output_name = "vout";

    auto& h = jr.submit_job(js);
    jr.drive(h);
    CHECK(h.done());
    CHECK(h.progress().total == 0);
    CHECK(jr.collect(h).empty());
}

TEST_CASE("a poisoned record aborts the job once retries run out") {
    cluster::SimCluster cl(quick(3, 1000, 47));
    cl.converge_ring();
    auto hits = std::make_shared<int>(0);
    cl.udfs().register_udf("fussy", [hits](std::span<const uint8_t> rec,
                                           const Bytes&) -> std::vector<Emit> {
        uint32_t idx = uint32_t(rec[0]) << 24 | uint32_t(rec[1]) << 16 | uint32_t(rec[2]) << 8 |
                       rec[3];
        if (idx == 150) {
            ++*hits;
            throw std::runtime_error("cannot stomach record 150");
        }
        return {{0, Bytes(rec.begin(), rec.end())}};
    });

    Bytes data = numbered_records(300, 10);
    auto& c = cl.make_client("alice");
    c.upload("poison", data);
    auto& jr = cl.make_runner("alice");

    JobSpec js;
    js.input.files = {"poison"};
    js.input.format = RecordFormat::fixed(10);
    js.stages = {{"fussy", 0, {}}};
    js.output_name = "never";

    auto& h = jr.submit_job(js);
    CHECK_ERR(jr.drive(h), Err::JobAborted);
    CHECK(h.aborted());
    CHECK(h.progress().state == 2);
    CHECK(*hits == 4);  // the first try plus three retries
    CHECK_ERR(jr.collect(h), Err::JobAborted);
}

TEST_CASE("a transient failure retries without duplicating output") {
    cluster::SimCluster cl(quick(3, 1000, 53));
    cl.converge_ring();
    auto first = std::make_shared<bool>(true);
    cl.udfs().register_udf("hiccup", [first](std::span<const uint8_t> rec,
                                             const Bytes&) -> std::vector<Emit> {
        uint32_t idx = uint32_t(rec[0]) << 24 | uint32_t(rec[1]) << 16 | uint32_t(rec[2]) << 8 |
                       rec[3];
        if (idx == 210 && *first) {
            *first = false;
            throw std::runtime_error("transient");
        }
        return {{rec.back(), Bytes(rec.begin(), rec.end())}};
    });

    Bytes data = numbered_records(300, 10, 17);
    auto& c = cl.make_client("alice");
    c.upload("flaky/in", data);
    auto& jr = cl.make_runner("alice");

    JobSpec js;
    js.input.files = {"flaky/in"};
    js.input.format = RecordFormat::fixed(10);
    js.stages = {{"hiccup", 3, {}}};
    js.output_name = "flaky/out";

    auto& h = jr.submit_job(js);
    jr.drive(h);
    CHECK(!*first);  // the failure really happened
    auto got = fetch_outputs(c, jr.collect(h));
    CHECK(got == reference_run(cl, js, {{"flaky/in", data}}));
}

TEST_CASE("killing a worker mid-job still yields the exact result") {
    auto cc = quick(5, 1000, 61);
    cc.default_link.latency_ms = 5;  // keep segments in flight when the axe falls
    cluster::SimCluster cl(cc);
    cl.converge_ring();
    cl.udfs().register_udf("spread", [](std::span<const uint8_t> rec, const Bytes&) {
        return std::vector<Emit>{{rec.back(), Bytes(rec.begin(), rec.end())}};
    });

    Bytes data = numbered_records(800, 10, 3);
    auto& c = cl.make_client("alice");
    c.upload("hardy/in", data);
    auto& jr = cl.make_runner("alice");

    JobSpec js;
    js.input.files = {"hardy/in"};
    js.input.format = RecordFormat::fixed(10);
    js.stages = {{"spread", 7, {}}};
    js.output_name = "hardy/out";

    auto& h = jr.submit_job(js);
    bool killed = false;
    jr.drive(h, [&](double) {
        if (!killed && h.progress().done >= 1) {
            cl.kill(3);  // a worker, never the coordinator
            killed = true;
        }
    });
    CHECK(killed);
    CHECK(h.done());

    auto got = fetch_outputs(c, jr.collect(h));
    CHECK(got == reference_run(cl, js, {{"hardy/in", data}}));
    // by now the loss has surfaced one way or another
    CHECK(std::find(h.workers().begin(), h.workers().end(), cl.address(3)) ==
          h.workers().end());
}

TEST_CASE("progress is visible over the wire while a job runs") {
    auto cc = quick(2, 1000, 67);
    cc.default_link.latency_ms = 5;  // give the job some duration to observe
    cluster::SimCluster cl(cc);
    cl.converge_ring();
    register_identity(cl);

    Bytes data = numbered_records(800, 10);
    auto& c = cl.make_client("alice");
    c.upload("slow/in", data);
    auto& jr = cl.make_runner("alice");

    JobSpec js;
    js.input.files = {"slow/in"};
    js.input.format = RecordFormat::fixed(10);
    js.stages = {{"idy", 2, {}}};
    js.output_name = "slow/out";
    auto& h = jr.submit_job(js);

    auto& rt = cl.runtime();
    transport::TransportHost probe(cl.network(), {"probe", 1});
    rt.add_actor(&probe);

    std::vector<JobProgress> seen;
    rpc::AsyncCall call;
    double next_at = 0;
    sim::FnActor poller([&](double now) {
        if (!call.active()) {
            if (now < next_at) return false;
            next_at = now + 50;
            ByteWriter w;
            w.u32(h.id());
            call.start(*probe.connect(jr.host().address()), kRpcJobStatus, w.data(),
                       now + 2000);
            return true;
        }
        Bytes out;
        auto oc = call.poll(now, out);
        if (oc == rpc::AsyncCall::Outcome::Pending) return false;
        if (oc == rpc::AsyncCall::Outcome::Done) {
            ByteReader r(out);
            JobProgress p;
            p.state = r.u8();
            p.stage = r.u32();
            p.done = r.u32();
            p.total = r.u32();
            p.records = r.u64();
            seen.push_back(p);
        }
        return true;
    });
    rt.add_actor(&poller);
    jr.drive(h);
    rt.remove_actor(&poller);
    call.abandon();

    bool mid_flight = false;
    for (const auto& p : seen) mid_flight |= (p.state == 0 && p.total > 0);
    CHECK(mid_flight);

    ByteWriter w;
    w.u32(h.id());
    Bytes resp = rpc::call(rt, *probe.connect(jr.host().address()), kRpcJobStatus, w.data());
    ByteReader r(resp);
    CHECK(r.u8() == 1);
    r.u32();
    CHECK(r.u32() == r.u32());  // done == total

    ByteWriter nope;
    nope.u32(0xDEAD);
    CHECK_ERR(rpc::call(rt, *probe.connect(jr.host().address()), kRpcJobStatus, nope.data()),
              Err::NotFound);

    rt.remove_actor(&probe);
    probe.shutdown();
}

TEST_CASE("workers follow the transfer protocol step by step") {
    cluster::SimCluster cl(quick(2, 1000, 71, 1));
    cl.converge_ring();
    register_identity(cl);

    Bytes data = numbered_records(100, 10);
    auto& c = cl.make_client("alice");
    auto meta = c.upload("raw/x", data);
    REQUIRE(meta.replicas.size() == 1);
    REQUIRE(meta.replicas[0].size() == 1);
    net::Address holder = meta.replicas[0][0];
    size_t other = cl.address(0) == holder ? 1 : 0;

    auto& rt = cl.runtime();
    transport::TransportHost probe(cl.network(), {"probe", 1});
    rpc::Dispatcher pd;
    struct Seen {
        uint32_t job, stage, seg;
        SegOutcome outcome;
        uint64_t in, out;
    };
    std::vector<Seen> results;
    pd.on(kRpcSegResult, [&](const net::Address&, ByteReader& r) -> Bytes {
        Seen s;
        s.job = r.u32();
        r.u32();  // epoch
        s.stage = r.u32();
        s.seg = r.u32();
        s.outcome = SegOutcome(r.u8());
        r.u64();  // failing record, unused here
        s.in = r.u64();
        s.out = r.u64();
        results.push_back(s);
        return {};
    });
    pd.attach(probe);
    rt.add_actor(&probe);
    auto& wconn = *probe.connect(cl.address(other));

    // announce stage 0 of job 9 to the worker that does not hold the chunk
    ByteWriter ann;
    ann.u32(9);
    ann.u32(0);  // epoch
    ann.u32(0);  // stage
    ann.str("idy");
    ann.u32(0);  // no shuffle
    ann.bytes({});
    ann.u32(1);
    storage::write_address(ann, cl.address(other));
    rpc::call(rt, wconn, kRpcJobSubmit, ann.data());

    ByteWriter asg;
    asg.u32(9);
    asg.u32(0);
    asg.u32(0);
    asg.u32(0);  // segment 0
    asg.u8(0);   // straight from a stored chunk
    asg.str("raw/x");
    asg.u32(0);
    asg.u32(meta.version);
    asg.u8(uint8_t(Framing::Fixed));
    asg.u32(10);
    asg.u8(1);
    storage::write_address(asg, holder);
    rpc::call(rt, wconn, kRpcSegAssign, asg.data());

    REQUIRE(rt.wait_until([&] { return !results.empty(); }, 5000));
    CHECK(results[0].job == 9);
    CHECK(results[0].seg == 0);
    CHECK(results[0].outcome == SegOutcome::Ok);
    CHECK(results[0].in == 100);
    CHECK(results[0].out == 100);
    CHECK(cl.worker(other).stats().remote_chunk_fetches == 1);
    CHECK(cl.worker(other).stats().segments_run == 1);

    // without a shuffle the output sits on the worker under the segment id
    ByteWriter get;
    get.u32(9);
    get.u32(0);  // producing stage
    get.u32(0);  // bucket
    get.u64(0);
    get.u32(1 << 20);
    Bytes resp = rpc::call(rt, wconn, kRpcBucketGet, get.data());
    ByteReader gr(resp);
    Bytes want = join_length_prefixed(split_records(data, RecordFormat::fixed(10)));
    CHECK(gr.u64() == want.size());
    CHECK(gr.bytes() == want);

    // a fresher epoch wipes the job; the stale one is refused outright
    ByteWriter fresh;
    fresh.u32(9);
    fresh.u32(2);
    fresh.u32(0);
    fresh.str("idy");
    fresh.u32(0);
    fresh.bytes({});
    fresh.u32(1);
    storage::write_address(fresh, cl.address(other));
    rpc::call(rt, wconn, kRpcJobSubmit, fresh.data());
    Bytes resp2 = rpc::call(rt, wconn, kRpcBucketGet, get.data());
    ByteReader gr2(resp2);
    CHECK(gr2.u64() == 0);  // the earlier output went with the old epoch

    ByteWriter stale;
    stale.u32(9);
    stale.u32(1);
    stale.u32(0);
    stale.str("idy");
    stale.u32(0);
    stale.bytes({});
    stale.u32(1);
    storage::write_address(stale, cl.address(other));
    CHECK_ERR(rpc::call(rt, wconn, kRpcJobSubmit, stale.data()), Err::Internal);

    // ending the job forgets it entirely
    ByteWriter end;
    end.u32(9);
    rpc::call(rt, wconn, kRpcJobEnd, end.data());
    CHECK_ERR(rpc::call(rt, wconn, kRpcBucketGet, get.data()), Err::Internal);

    rt.remove_actor(&probe);
    probe.shutdown();
}

TEST_CASE("bucket transfers are idempotent and keyed by sender") {
    cluster::SimCluster cl(quick(2, 1000, 73));
    cl.converge_ring();
    register_identity(cl);
    auto& rt = cl.runtime();

    transport::TransportHost alpha(cl.network(), {"alpha", 1});
    transport::TransportHost beta(cl.network(), {"beta", 1});
    rt.add_actor(&alpha);
    rt.add_actor(&beta);
    auto& ca = *alpha.connect(cl.address(0));
    auto& cb = *beta.connect(cl.address(0));

    ByteWriter ann;
    ann.u32(11);
    ann.u32(0);
    ann.u32(1);  // receiving stage
    ann.str("idy");
    ann.u32(2);
    ann.bytes({});
    ann.u32(1);
    storage::write_address(ann, cl.address(0));
    rpc::call(rt, ca, kRpcJobSubmit, ann.data());

    Bytes ten = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    auto put = [&](transport::Connection& conn, uint32_t seg, uint64_t off, uint64_t total,
                   std::span<const uint8_t> piece) {
        ByteWriter w;
        w.u32(11);
        w.u32(0);
        w.u32(0);  // producing stage
        w.u32(1);  // bucket
        w.u32(seg);
        w.u64(off);
        w.u64(total);
        w.bytes(piece);
        return rpc::call(rt, conn, kRpcBucketPut, w.data());
    };
    auto bucket_now = [&]() {
        ByteWriter g;
        g.u32(11);
        g.u32(0);
        g.u32(1);
        g.u64(0);
        g.u32(1 << 20);
        Bytes resp = rpc::call(rt, ca, kRpcBucketGet, g.data());
        ByteReader r(resp);
        r.u64();
        return r.bytes();
    };

    // alpha starts a split transfer; beta lands a whole one in between
    put(ca, 3, 0, 10, {ten.data(), 6});
    put(cb, 3, 0, 4, {ten.data(), 4});
    put(ca, 3, 6, 10, {ten.data() + 6, 4});
    CHECK(bucket_now() == ten);  // alpha finished last, intact

    // replaying the same transfer changes nothing
    put(ca, 3, 0, 10, {ten.data(), 6});
    put(ca, 3, 6, 10, {ten.data() + 6, 4});
    CHECK(bucket_now() == ten);

    // contributions line up by segment id, not arrival order
    put(cb, 2, 0, 3, {ten.data() + 7, 3});
    Bytes want = {7, 8, 9};
    want.insert(want.end(), ten.begin(), ten.end());
    CHECK(bucket_now() == want);

    // a piece out of step is turned away
    ByteWriter oos;
    oos.u32(11);
    oos.u32(0);
    oos.u32(0);
    oos.u32(1);
    oos.u32(5);
    oos.u64(3);  // nothing staged at offset three
    oos.u64(9);
    oos.bytes({ten.data(), 3});
    CHECK_ERR(rpc::call(rt, ca, kRpcBucketPut, oos.data()), Err::Decode);

    rt.remove_actor(&alpha);
    rt.remove_actor(&beta);
    alpha.shutdown();
    beta.shutdown();
}
