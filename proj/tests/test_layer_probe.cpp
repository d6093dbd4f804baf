#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "estimekit/layer_probe.hpp"

using namespace estimekit;

namespace {

// CLS, regular rows..., SEP at every layer; rows[k] lists the regular rows of layer k.
LayerEmbeddingSet doc(const std::vector<std::vector<std::vector<float>>>& rows, std::vector<float> cls = {1, 1}) {
    LayerEmbeddingSet s;
    for (const auto& layer : rows) {
        const auto dim = static_cast<Eigen::Index>(layer.front().size());
        RowMatrix m(static_cast<Eigen::Index>(layer.size() + 2), dim);
        for (Eigen::Index j = 0; j < dim; ++j) {
            m(0, j) = cls[static_cast<std::size_t>(j)];
            m(m.rows() - 1, j) = 1;
        }
        for (std::size_t i = 0; i < layer.size(); ++i)
            for (Eigen::Index j = 0; j < dim; ++j) m(static_cast<Eigen::Index>(i + 1), j) = layer[i][static_cast<std::size_t>(j)];
        s.layers.push_back(m);
    }
    return s;
}

LayerEmbeddingSet random_doc(std::mt19937& rng, int layers, Eigen::Index positions, Eigen::Index dim) {
    std::normal_distribution<float> g;
    LayerEmbeddingSet s;
    for (int k = 0; k < layers; ++k) {
        RowMatrix m(positions, dim);
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
        s.layers.push_back(m);
    }
    return s;
}

double cos(const Eigen::RowVectorXf& a, const Eigen::RowVectorXf& b) {
    return a.cast<double>().dot(b.cast<double>()) / (a.cast<double>().norm() * b.cast<double>().norm());
}

} // namespace

TEST(NormProfile, EuclideanNormOfSingleToken) {
    const auto p = norm_profile({doc({{{3, 4}}})}, TokenClass::regular, DocRole::summary);
    ASSERT_EQ(p.per_layer_value.size(), 1u);
    EXPECT_DOUBLE_EQ(p.per_layer_value[0], 5.0);
    EXPECT_EQ(p.n_documents, 1u);
    EXPECT_EQ(p.doc_role, DocRole::summary);
}

TEST(NormProfile, AveragesDocumentMeansNotTokens) {
    // doc 1: one token of norm 2; doc 2: three tokens of norm 4
    const auto a = doc({{{2, 0}}});
    const auto b = doc({{{4, 0}, {0, 4}, {0, -4}}});
    EXPECT_DOUBLE_EQ(norm_profile({a, b}, TokenClass::regular, DocRole::text).per_layer_value[0], 3.0);
}

TEST(NormProfile, ClsClassUsesFirstRow) {
    const auto p = norm_profile({doc({{{1, 0}}, {{1, 0}}}, {6, 8})}, TokenClass::cls, DocRole::text);
    EXPECT_EQ(p.per_layer_value, (std::vector<double>{10.0, 10.0}));
}

TEST(NormProfile, InvariantUnderDocumentOrder) {
    std::mt19937 rng(3);
    std::vector<LayerEmbeddingSet> docs;
    for (int d = 0; d < 6; ++d) docs.push_back(random_doc(rng, 4, 5 + d, 6));
    const auto fwd = norm_profile(docs, TokenClass::regular, DocRole::text);
    std::reverse(docs.begin(), docs.end());
    const auto rev = norm_profile(docs, TokenClass::regular, DocRole::text);
    for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(fwd.per_layer_value[k], rev.per_layer_value[k], 1e-12);
}

TEST(NormProfile, EmptyClassOrEmptyInputIsAnError) {
    LayerEmbeddingSet only_special;
    only_special.layers = {RowMatrix::Ones(2, 2)};
    EXPECT_THROW(norm_profile({only_special}, TokenClass::regular, DocRole::text), std::invalid_argument);
    EXPECT_THROW(norm_profile({}, TokenClass::regular, DocRole::text), std::invalid_argument);
    LayerEmbeddingSet empty;
    empty.layers = {RowMatrix(0, 2)};
    EXPECT_THROW(norm_profile({empty}, TokenClass::cls, DocRole::text), std::invalid_argument);
}

TEST(IncrementNormProfile, IdenticalAndOrthogonalLayers) {
    const auto p = increment_norm_profile({doc({{{1, 0}}, {{1, 0}}, {{0, 1}}})}, TokenClass::regular, DocRole::text);
    ASSERT_EQ(p.per_layer_value.size(), 2u);
    EXPECT_DOUBLE_EQ(p.per_layer_value[0], 0.0);
    EXPECT_DOUBLE_EQ(p.per_layer_value[1], std::sqrt(2.0));
}

TEST(IncrementNormProfile, TriangleBoundOnRandomTokens) {
    std::mt19937 rng(5);
    const auto d = random_doc(rng, 6, 12, 8);
    for (std::size_t k = 0; k + 1 < d.layers.size(); ++k)
        for (Eigen::Index i = 1; i < 11; ++i) {
            const double inc = (d.layers[k + 1].row(i) - d.layers[k].row(i)).cast<double>().norm();
            EXPECT_LE(inc, d.layers[k + 1].row(i).cast<double>().norm() + d.layers[k].row(i).cast<double>().norm() + 1e-12);
        }
    const auto p = increment_norm_profile({d}, TokenClass::regular, DocRole::text);
    for (std::size_t k = 0; k < 5; ++k) {
        double want = 0;
        for (Eigen::Index i = 1; i < 11; ++i) want += (d.layers[k + 1].row(i).cast<double>() - d.layers[k].row(i).cast<double>()).norm();
        EXPECT_NEAR(p.per_layer_value[k], want / 10, 1e-12);
    }
}

TEST(NeighborCosineProfile, IdenticalAndOrthogonal) {
    const auto p = neighbor_cosine_profile({doc({{{2, 0}}, {{5, 0}}, {{0, 3}}})}, TokenClass::regular, DocRole::text);
    EXPECT_DOUBLE_EQ(p.per_layer_value[0], 1.0);
    EXPECT_DOUBLE_EQ(p.per_layer_value[1], 0.0);
}

TEST(NeighborCosineProfile, StaysInUnitInterval) {
    std::mt19937 rng(8);
    std::vector<LayerEmbeddingSet> docs;
    for (int d = 0; d < 4; ++d) docs.push_back(random_doc(rng, 5, 9, 4));
    for (auto c : {TokenClass::cls, TokenClass::regular})
        for (double v : neighbor_cosine_profile(docs, c, DocRole::text).per_layer_value) {
            EXPECT_GE(v, -1.0);
            EXPECT_LE(v, 1.0);
        }
}

TEST(CosineHistogram, BinGeometry) {
    EXPECT_EQ(CosineHistogram::bin_of(-1.0), 0);
    EXPECT_EQ(CosineHistogram::bin_of(0.0), 100);
    EXPECT_EQ(CosineHistogram::bin_of(0.005), 100);
    EXPECT_EQ(CosineHistogram::bin_of(0.999), 199);
    EXPECT_EQ(CosineHistogram::bin_of(1.0), 199);
    EXPECT_EQ(CosineHistogram::bin_of(1.0 + 1e-12), 199);
    EXPECT_NEAR(CosineHistogram::bin_lower(1) - CosineHistogram::bin_lower(0), 0.01, 1e-15);
    EXPECT_NEAR(CosineHistogram::bin_lower(199) + 0.01, 1.0, 1e-15);
}

TEST(CosineHistogram, IdenticalVectorsFillTopBin) {
    const auto h = pairwise_cosine_histogram({doc({{{1, 2}, {1, 2}, {1, 2}, {1, 2}}})});
    ASSERT_EQ(h.frequencies.size(), 1u);
    EXPECT_DOUBLE_EQ(h.frequencies[0][199], 1.0);
    EXPECT_EQ(h.pair_counts[0], 6u);
}

TEST(CosineHistogram, OrthogonalPairLandsInZeroBin) {
    const auto h = pairwise_cosine_histogram({doc({{{1, 0}, {0, 1}}})});
    EXPECT_DOUBLE_EQ(h.frequencies[0][static_cast<std::size_t>(CosineHistogram::bin_of(0.0))], 1.0);
}

TEST(CosineHistogram, FiveRandomVectorsMatchAllPairsOracle) {
    std::mt19937 rng(55);
    const auto d = random_doc(rng, 1, 7, 3);
    std::vector<double> want(200, 0.0);
    for (Eigen::Index i = 1; i <= 5; ++i)
        for (Eigen::Index j = i + 1; j <= 5; ++j) {
            const double c = cos(d.layers[0].row(i), d.layers[0].row(j));
            want[static_cast<std::size_t>(std::min(199.0, std::floor((c + 1) / 0.01 + 1e-9)))] += 0.1;
        }
    const auto h = pairwise_cosine_histogram({d});
    EXPECT_EQ(h.pair_counts[0], 10u);
    for (std::size_t b = 0; b < 200; ++b) EXPECT_NEAR(h.frequencies[0][b], want[b], 1e-12) << b;
}

TEST(CosineHistogram, RowsNormalizeAndShortDocumentsAreSkipped) {
    std::mt19937 rng(60);
    std::vector<LayerEmbeddingSet> docs{random_doc(rng, 3, 20, 5), random_doc(rng, 3, 3, 5), random_doc(rng, 3, 11, 5)};
    const auto h = pairwise_cosine_histogram(docs);
    EXPECT_EQ(h.n_documents, 2u);
    for (std::size_t k = 0; k < 3; ++k) {
        EXPECT_NEAR(std::accumulate(h.frequencies[k].begin(), h.frequencies[k].end(), 0.0), 1.0, 1e-12);
        EXPECT_EQ(h.pair_counts[k], 18u * 17 / 2 + 9u * 8 / 2);
    }
    EXPECT_THROW(pairwise_cosine_histogram({random_doc(rng, 2, 3, 5)}), std::invalid_argument);
}

TEST(CosineHistogram, LongDocumentsAreSampledReproducibly) {
    std::mt19937 rng(61);
    const std::vector<LayerEmbeddingSet> docs{random_doc(rng, 2, 40, 4)};
    HistogramOptions opt;
    opt.max_tokens_per_document = 10;
    opt.seed = 7;
    const auto a = pairwise_cosine_histogram(docs, opt);
    const auto b = pairwise_cosine_histogram(docs, opt);
    EXPECT_EQ(a.pair_counts[0], 45u);
    EXPECT_EQ(a.frequencies, b.frequencies);
    opt.seed = 8;
    EXPECT_NE(pairwise_cosine_histogram(docs, opt).frequencies, a.frequencies);
}

TEST(CosineHistogram, WorkerCountDoesNotChangeResult) {
    std::mt19937 rng(62);
    std::vector<LayerEmbeddingSet> docs;
    for (int d = 0; d < 9; ++d) docs.push_back(random_doc(rng, 3, 15, 6));
    HistogramOptions one, many;
    one.workers = 1;
    many.workers = 4;
    EXPECT_EQ(pairwise_cosine_histogram(docs, one).frequencies, pairwise_cosine_histogram(docs, many).frequencies);
}

TEST(ProbeCsv, HeaderNamesClassRoleModelAndAveraging) {
    const auto p = norm_profile({doc({{{3, 4}}, {{0, 1}}})}, TokenClass::cls, DocRole::summary);
    std::ostringstream o;
    write_profile_csv(o, p, "tiny");
    std::istringstream in(o.str());
    std::string header, cols, row;
    std::getline(in, header);
    std::getline(in, cols);
    std::getline(in, row);
    for (auto key : {"class=CLS", "role=summary", "model=tiny", "averaging="}) EXPECT_NE(header.find(key), std::string::npos);
    EXPECT_EQ(cols, "layer,value");
    EXPECT_EQ(row.substr(0, 2), "0,");

    std::ostringstream h;
    write_histogram_csv(h, pairwise_cosine_histogram({doc({{{1, 0}, {0, 1}}})}), "tiny", DocRole::text);
    std::istringstream hin(h.str());
    std::getline(hin, header);
    std::getline(hin, cols);
    EXPECT_EQ(std::count(cols.begin(), cols.end(), ','), 200);
}
