#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "pfgcn/data.hpp"

using namespace pfgcn;

namespace {

std::string temp_path(const char* name) { return ::testing::TempDir() + name; }

void write_lines(const std::string& path, std::initializer_list<std::string> lines) {
    std::ofstream out(path);
    for (const auto& l : lines) out << l << '\n';
}

const std::string header = R"({"format":"pfgcn-skeleton","version":1,"n_classes":2,"joints":2,"topology":[[0,1]]})";

SkeletonSequence ramp(std::size_t frames) {
    SkeletonSequence s;
    s.joints = 2;
    s.frames = frames;
    s.coords.resize(2 * frames * 3);
    for (std::size_t j = 0; j < 2; ++j)
        for (std::size_t t = 0; t < frames; ++t)
            for (std::size_t c = 0; c < 3; ++c) s.coord(j, t, c) = 100.0 * j + 10.0 * c + static_cast<double>(t);
    return s;
}

double sq_distance(const SkeletonSequence& a, const SkeletonSequence& b) {
    double d = 0;
    for (std::size_t i = 0; i < a.coords.size(); ++i) d += (a.coords[i] - b.coords[i]) * (a.coords[i] - b.coords[i]);
    return d;
}

}  // namespace

TEST(Synthetic, ShapesAndSplit) {
    auto ds = generate_synthetic(SyntheticSpec{8, 72, 15, 32, 3});
    EXPECT_NO_THROW(ds.validate());
    EXPECT_EQ(ds.sequences.size(), 8u * 72u);
    EXPECT_EQ(ds.topology.size(), 14u);
    for (const auto& s : ds.sequences) {
        EXPECT_EQ(s.joints, 15u);
        EXPECT_EQ(s.frames, 32u);
        EXPECT_EQ(s.coords.size(), 15u * 32u * 3u);
    }
    EXPECT_EQ(ds.train.size(), 400u);
    EXPECT_EQ(ds.test.size(), 176u);
    std::vector<int> per_class(8, 0);
    for (auto i : ds.train) ++per_class[ds.sequences[i].label];
    for (int c : per_class) EXPECT_EQ(c, 50);
}

TEST(Synthetic, SeedDeterminism) {
    EXPECT_EQ(generate_synthetic(3, 5, 4, 6, 11), generate_synthetic(3, 5, 4, 6, 11));
    EXPECT_NE(generate_synthetic(3, 5, 4, 6, 11).sequences, generate_synthetic(3, 5, 4, 6, 12).sequences);
    EXPECT_THROW(generate_synthetic(0, 5, 4, 6, 1), DataError);
}

TEST(Synthetic, ClassesSeparate) {
    auto ds = generate_synthetic(SyntheticSpec{4, 20, 15, 32, 5});
    double inter = 0, intra = 0;
    std::size_t n_inter = 0, n_intra = 0;
    for (std::size_t a = 0; a < ds.sequences.size(); ++a)
        for (std::size_t b = a + 1; b < ds.sequences.size(); ++b) {
            const double d = sq_distance(ds.sequences[a], ds.sequences[b]);
            if (ds.sequences[a].label == ds.sequences[b].label) {
                intra += d;
                ++n_intra;
            } else {
                inter += d;
                ++n_inter;
            }
        }
    EXPECT_GT(inter / double(n_inter), intra / double(n_intra));
}

TEST(NodeSignal, EqualFrameCountCopies) {
    auto s = ramp(4);
    auto u = to_node_signal(s, 4);
    EXPECT_EQ(u.shape(), (Shape{12, 2}));
    for (std::size_t t = 0; t < 4; ++t)
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t j = 0; j < 2; ++j) EXPECT_EQ(u.at(3 * t + c, j), s.coord(j, t, c));
    // idempotent at equal counts
    SkeletonSequence back = s;
    for (std::size_t t = 0; t < 4; ++t)
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t j = 0; j < 2; ++j) back.coord(j, t, c) = u.at(3 * t + c, j);
    EXPECT_EQ(to_node_signal(back, 4).values(), u.values());
}

TEST(NodeSignal, ConstantTrajectoryStaysConstant) {
    SkeletonSequence s = ramp(5);
    for (std::size_t j = 0; j < 2; ++j)
        for (std::size_t t = 0; t < 5; ++t)
            for (std::size_t c = 0; c < 3; ++c) s.coord(j, t, c) = 1.5 + j + c;
    for (std::size_t T : {1u, 3u, 7u, 20u}) {
        auto u = to_node_signal(s, T);
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t c = 0; c < 3; ++c)
                for (std::size_t j = 0; j < 2; ++j) EXPECT_DOUBLE_EQ(u.at(3 * t + c, j), 1.5 + j + c);
    }
}

TEST(NodeSignal, LinearResampling) {
    auto s = ramp(3);  // values 0,1,2 along time
    auto u = to_node_signal(s, 2);
    EXPECT_EQ(u.at(0, 0), 0.0);   // x at first frame
    EXPECT_EQ(u.at(3, 0), 2.0);   // x at last frame; midpoint 1 is dropped
    auto up = to_node_signal(s, 5);
    for (std::size_t t = 0; t < 5; ++t) EXPECT_DOUBLE_EQ(up.at(3 * t + 1, 1), 110.0 + 0.5 * t);
}

TEST(NodeSignal, EmptySequenceIsRejected) {
    SkeletonSequence s;
    s.joints = 2;
    EXPECT_THROW(to_node_signal(s, 3), DataError);
    EXPECT_THROW(to_node_signal(ramp(3), 0), DataError);
}

TEST(Adjacency, ChainIdentityAndSymmetry) {
    EXPECT_EQ(skeleton_adjacency({{0, 1}, {1, 2}}, 3).values(), (std::vector<double>{1, 1, 0, 1, 1, 1, 0, 1, 1}));
    EXPECT_EQ(skeleton_adjacency({}, 4).values(), Tensor::identity(4).values());
    auto a = skeleton_adjacency({{0, 3}, {2, 1}, {4, 0}}, 5);
    EXPECT_EQ(a.values(), transpose(a).values());
    EXPECT_THROW(skeleton_adjacency({{0, 5}}, 5), DataError);
}

TEST(Jsonl, RoundTrip) {
    auto ds = generate_synthetic(3, 4, 5, 6, 21);
    auto path = temp_path("pfgcn_roundtrip.jsonl");
    write_skeleton_jsonl(ds, path);
    EXPECT_EQ(load_skeleton_jsonl(path, false), ds);
    auto normalized = ds;
    normalize_per_joint(normalized);
    auto loaded = load_skeleton_jsonl(path);
    ASSERT_EQ(loaded.sequences.size(), normalized.sequences.size());
    for (std::size_t i = 0; i < loaded.sequences.size(); ++i)
        for (std::size_t k = 0; k < loaded.sequences[i].coords.size(); ++k)
            EXPECT_NEAR(loaded.sequences[i].coords[k], normalized.sequences[i].coords[k], 1e-12);
    std::remove(path.c_str());
}

TEST(Jsonl, WithoutSplitsFallsBackToStratified) {
    auto path = temp_path("pfgcn_nosplit.jsonl");
    const std::string rec0 = R"({"label":0,"joints":2,"coords":[[[0,0,0],[1,1,1]],[[2,2,2],[3,3,3]]]})";
    const std::string rec1 = R"({"label":1,"joints":2,"coords":[[[0,1,0],[1,0,1]],[[2,0,2],[3,0,3]]]})";
    write_lines(path, {header, rec0, rec0, rec1, rec1});
    auto ds = load_skeleton_jsonl(path, false);
    EXPECT_EQ(ds.sequences.size(), 4u);
    EXPECT_EQ(ds.train.size() + ds.test.size(), 4u);
    EXPECT_EQ(ds.sequences[0].coord(1, 1, 2), 3.0);
    std::remove(path.c_str());
}

TEST(Jsonl, Rejections) {
    auto path = temp_path("pfgcn_bad.jsonl");
    write_lines(path, {});
    EXPECT_THROW(load_skeleton_jsonl(path), DataError);

    write_lines(path, {header, R"({"label":2,"joints":2,"coords":[[[0,0,0]],[[1,1,1]]]})"});
    EXPECT_THROW(load_skeleton_jsonl(path), DataError);

    write_lines(path, {header, R"({"label":0,"joints":3,"coords":[[[0,0,0]],[[1,1,1]],[[2,2,2]]]})"});
    EXPECT_THROW(load_skeleton_jsonl(path), SchemaError);

    write_lines(path, {header, R"({"label":0,"joints":2,"coords":[[[0,0,0]],[[1,1,1],[2,2,2]]]})"});
    EXPECT_THROW(load_skeleton_jsonl(path), SchemaError);

    write_lines(path, {header, R"({"label":0,"joints":2,"coords":[[[0,0,0]],[[1,1,1]]]})", "{not json"});
    try {
        load_skeleton_jsonl(path);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find(":3:"), std::string::npos) << e.what();
    }

    write_lines(path, {R"({"label":0})"});
    EXPECT_THROW(load_skeleton_jsonl(path), ParseError);

    std::remove(path.c_str());
    EXPECT_THROW(load_skeleton_jsonl(path), DataError);
}

TEST(Normalization, UsesTrainingStatisticsOnly) {
    auto ds = generate_synthetic(SyntheticSpec{4, 20, 6, 16, 31});
    normalize_per_joint(ds);
    for (std::size_t j = 0; j < ds.joints; ++j) {
        double train_sum = 0, test_sum = 0, train_sq = 0;
        std::size_t train_n = 0, test_n = 0;
        for (auto i : ds.train)
            for (std::size_t t = 0; t < 16; ++t)
                for (std::size_t c = 0; c < 3; ++c) {
                    const double v = ds.sequences[i].coord(j, t, c);
                    train_sum += v;
                    train_sq += v * v;
                    ++train_n;
                }
        for (auto i : ds.test)
            for (std::size_t t = 0; t < 16; ++t) test_sum += ds.sequences[i].coord(j, t, 0), ++test_n;
        EXPECT_NEAR(train_sum / double(train_n), 0.0, 1e-10);
        EXPECT_NEAR(train_sq / (double(train_n) / 3.0), 1.0, 1e-10);  // RMS distance per frame is 1
        EXPECT_NE(test_sum / double(test_n), 0.0);
    }
}

TEST(Signals, FlattenedLayout) {
    auto ds = generate_synthetic(2, 3, 4, 10, 41);
    auto set = make_signals(ds, ds.train, 5);
    EXPECT_EQ(set.channels, 15u);
    EXPECT_EQ(set.nodes, 4u);
    EXPECT_EQ(set.size(), ds.train.size());
    auto u = to_node_signal(ds.sequences[ds.train[1]], 5);
    EXPECT_TRUE(std::equal(u.values().begin(), u.values().end(), set.signals.begin() + 60));
    EXPECT_EQ(set.labels[1], ds.sequences[ds.train[1]].label);
}
