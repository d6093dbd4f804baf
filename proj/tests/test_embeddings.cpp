#include <gtest/gtest.h>

#include <cstdlib>

#include "estimekit/provider.hpp"
#include "test_support.hpp"

using namespace estimekit;
using test_support::data_dir;
using test_support::TempDir;

namespace {

struct TinyModels {
    std::shared_ptr<const BertEncoder> encoder = std::make_shared<const BertEncoder>(data_dir() / "tiny_sim");
    WordPieceTokenizer tokenizer{Vocab::load(data_dir() / "tiny_sim" / "vocab.txt")};
    EmbeddingTable raw{data_dir() / "tiny_raw"};
};

const TinyModels& tiny() {
    static const TinyModels m;
    return m;
}

ExtractionConfig tiny_config(const std::filesystem::path& cache) {
    ExtractionConfig c;
    c.model_id = (data_dir() / "tiny_sim").string();
    c.raw_model_id = (data_dir() / "tiny_raw").string();
    c.cache_dir = cache.string();
    return c;
}

double cosine(const Eigen::RowVectorXf& a, const Eigen::RowVectorXf& b) {
    return a.cast<double>().dot(b.cast<double>()) / (a.cast<double>().norm() * b.cast<double>().norm());
}

} // namespace

// One-at-a-time masking reproduced by the reference implementation.
TEST(Extraction, OneAtATimeMaskingMatchesReference) {
    const auto golden = test_support::read_json(data_dir() / "masked_golden.json");
    const auto seq = tiny().tokenizer.tokenize(golden["text"].get<std::string>());
    ASSERT_EQ(seq.token_ids, golden["ids"].get<std::vector<TokenId>>());
    const auto plan = plan_masked_passes(seq, 512, 256, 512);
    const auto set = extract_masked_embeddings(seq, plan, *tiny().encoder, tiny().tokenizer.mask_id(), "tiny");
    const auto& want = golden["embeddings"];
    ASSERT_EQ(set.layers.size(), want.size());
    double worst = 0;
    for (std::size_t k = 0; k < set.layers.size(); ++k)
        for (Eigen::Index i = 0; i < set.layers[k].rows(); ++i)
            for (Eigen::Index j = 0; j < set.layers[k].cols(); ++j)
                worst = std::max(worst, std::fabs(set.layers[k](i, j) - want[k][i][j].get<double>()));
    EXPECT_LT(worst, 2e-4);
}

TEST(Extraction, LayerCountAndFiniteness) {
    const auto seq = tiny().tokenizer.tokenize(test_support::doc("fixture_b.txt"));
    const auto set = extract_masked_embeddings(seq, plan_masked_passes(seq, 512, 256, 8), *tiny().encoder,
                                               tiny().tokenizer.mask_id(), "tiny");
    EXPECT_EQ(set.layers.size(), 5u);
    EXPECT_EQ(set.num_positions(), seq.size());
    EXPECT_TRUE(set.all_finite());
}

TEST(Extraction, IsBitwiseDeterministic) {
    const auto seq = tiny().tokenizer.tokenize(test_support::doc("fixture_c.txt"));
    const auto plan = plan_masked_passes(seq, 512, 256, 8);
    const auto a = extract_masked_embeddings(seq, plan, *tiny().encoder, tiny().tokenizer.mask_id(), "tiny");
    const auto b = extract_masked_embeddings(seq, plan, *tiny().encoder, tiny().tokenizer.mask_id(), "tiny");
    for (std::size_t k = 0; k < a.layers.size(); ++k) EXPECT_TRUE((a.layers[k].array() == b.layers[k].array()).all());
}

TEST(Extraction, SameTokenInDifferentContextsDiffers) {
    const auto seq = tiny().tokenizer.tokenize(test_support::doc("probe_two_sentences.txt"));
    const auto set = extract_masked_embeddings(seq, plan_masked_passes(seq, 512, 256, 8), *tiny().encoder,
                                               tiny().tokenizer.mask_id(), "tiny");
    std::vector<Eigen::Index> bank;
    for (std::size_t i = 0; i < seq.size(); ++i)
        if (seq.token_strings[i] == "bank") bank.push_back(static_cast<Eigen::Index>(i));
    ASSERT_EQ(bank.size(), 2u);
    for (int k = 1; k <= set.num_layers(); ++k)
        EXPECT_LT(cosine(set.layer(k).row(bank[0]), set.layer(k).row(bank[1])), 1.0 - 1e-6) << "layer " << k;
}

TEST(Extraction, LongTextUsesSeveralWindows) {
    const auto seq = tiny().tokenizer.tokenize(test_support::doc("article_600.txt"));
    const auto plan = plan_masked_passes(seq, 64, 32, 8);
    ASSERT_GT(plan.windows.size(), 1u);
    CountingEncoder counter(tiny().encoder);
    const auto set = extract_masked_embeddings(seq, plan, counter, tiny().tokenizer.mask_id(), "tiny");
    EXPECT_EQ(counter.calls(), plan.num_passes());
    EXPECT_TRUE(set.all_finite());
    for (Eigen::Index i = 0; i < set.layer(3).rows(); ++i) EXPECT_GT(set.layer(3).row(i).norm(), 0.0f);
}

TEST(Extraction, WindowLongerThanModelContextIsRejected) {
    const auto seq = tiny().tokenizer.tokenize("the cat");
    const auto plan = plan_masked_passes(seq, 1024, 256, 8);
    EXPECT_THROW(extract_masked_embeddings(seq, plan, *tiny().encoder, tiny().tokenizer.mask_id(), "tiny"),
                 std::invalid_argument);
}

TEST(RawEmbeddings, RowsDependOnTokenIdOnly) {
    const auto seq = tiny().tokenizer.tokenize("the cat saw the dog and the cat ran");
    const auto raw = lookup_raw_embeddings(seq, tiny().raw, "raw");
    for (std::size_t i = 0; i < seq.size(); ++i)
        for (std::size_t j = 0; j < seq.size(); ++j)
            if (seq.token_ids[i] == seq.token_ids[j])
                EXPECT_TRUE((raw.rows.row(static_cast<Eigen::Index>(i)).array() ==
                             raw.rows.row(static_cast<Eigen::Index>(j)).array())
                                .all());
}

TEST(RawEmbeddings, CosinesMatchTableDump) {
    const auto golden = test_support::read_json(data_dir() / "raw_golden.json");
    const auto seq = tiny().tokenizer.tokenize("cat dog");
    const auto raw = lookup_raw_embeddings(seq, tiny().raw, "raw");
    EXPECT_NEAR(cosine(raw.rows.row(1), raw.rows.row(1)), 1.0, 1e-12);
    EXPECT_NEAR(cosine(raw.rows.row(1), raw.rows.row(2)), golden["cat_dog"].get<double>(), 1e-6);
}

TEST(RawEmbeddings, OutOfVocabularyIdThrows) {
    TokenSequence seq = tiny().tokenizer.tokenize("cat");
    seq.token_ids[1] = 99999;
    EXPECT_THROW(lookup_raw_embeddings(seq, tiny().raw, "raw"), std::out_of_range);
}

TEST(Cache, SecondCallRunsNoInference) {
    TempDir dir;
    EmbeddingProvider first(tiny_config(dir.path()));
    const auto a = first.embed(test_support::doc("fixture_a.txt"));
    EXPECT_GT(first.forward_calls(), 0u);

    EmbeddingProvider second(tiny_config(dir.path()));
    const auto b = second.embed(test_support::doc("fixture_a.txt"));
    EXPECT_EQ(second.forward_calls(), 0u);
    EXPECT_EQ(second.cache()->hits(), 1u);
    for (std::size_t k = 0; k < a.layers.layers.size(); ++k)
        EXPECT_TRUE((a.layers.layers[k].array() == b.layers.layers[k].array()).all());
    EXPECT_TRUE((a.raw.rows.array() == b.raw.rows.array()).all());

    const auto path = dir.path() / EmbeddingProvider::doc_key(test_support::doc("fixture_a.txt")) /
                      (first.fingerprint() + ".embar");
    EXPECT_TRUE(std::filesystem::exists(path));
}

TEST(Cache, ChangedMinGapIsAMiss) {
    TempDir dir;
    auto cfg = tiny_config(dir.path());
    EmbeddingProvider first(cfg);
    first.embed("the river rose");
    cfg.min_gap = 4;
    EmbeddingProvider second(cfg);
    EXPECT_NE(first.fingerprint(), second.fingerprint());
    second.embed("the river rose");
    EXPECT_GT(second.forward_calls(), 0u);
    EXPECT_EQ(second.cache()->misses(), 1u);
}

TEST(Cache, HalfPrecisionRoundTripIsClose) {
    const auto seq = tiny().tokenizer.tokenize(test_support::doc("fixture_b.txt"));
    LayerEmbeddingSet fresh = extract_masked_embeddings(seq, plan_masked_passes(seq, 512, 256, 8), *tiny().encoder,
                                                        tiny().tokenizer.mask_id(), "tiny");
    RawEmbeddingSet raw = lookup_raw_embeddings(seq, tiny().raw, "raw");
    const auto back = embar::decode(embar::encode(fresh, raw, "fp"));
    ASSERT_EQ(back.layers.layers.size(), fresh.layers.size());
    for (std::size_t k = 0; k < fresh.layers.size(); ++k) {
        const auto& f = fresh.layers[k];
        const auto& h = back.layers.layers[k];
        for (Eigen::Index i = 0; i < f.size(); ++i)
            EXPECT_LE(std::fabs(f.data()[i] - h.data()[i]), 1e-2 * std::fabs(f.data()[i]) + 1e-6);
    }
    EXPECT_EQ(back.layers.mask_plan_fingerprint, fresh.mask_plan_fingerprint);
    EXPECT_EQ(back.raw.model_id, "raw");
}

TEST(Cache, CorruptFileIsRecomputedAndOverwritten) {
    TempDir dir;
    const std::string text = "the baker opens at six";
    std::filesystem::path path;
    {
        EmbeddingProvider p(tiny_config(dir.path()));
        p.embed(text);
        path = dir.path() / EmbeddingProvider::doc_key(text) / (p.fingerprint() + ".embar");
    }
    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(-5, std::ios::end);
        f.write("XXXXX", 5);
    }
    EmbeddingProvider p(tiny_config(dir.path()));
    p.embed(text);
    EXPECT_EQ(p.cache()->recovered(), 1u);
    EXPECT_GT(p.forward_calls(), 0u);
    EXPECT_NO_THROW(embar::decode(test_support::read_text(path)));
}

TEST(Cache, EnvironmentVariableSetsDefaultLocation) {
    TempDir dir;
    ::setenv("ESTIMEKIT_CACHE_DIR", dir.path().c_str(), 1);
    EXPECT_EQ(resolve_cache_dir(), dir.path());
    EXPECT_EQ(resolve_cache_dir("explicit"), std::filesystem::path("explicit"));
    ::unsetenv("ESTIMEKIT_CACHE_DIR");
    EXPECT_EQ(resolve_cache_dir(), std::filesystem::path("cache"));
}

TEST(Provider, MismatchedVocabulariesAreAHardError) {
    TempDir dir;
    const auto other = dir.path() / "other_raw";
    std::filesystem::create_directories(other);
    for (auto f : {"config.json", "model.safetensors"})
        std::filesystem::copy_file(data_dir() / "tiny_raw" / f, other / f);
    auto vocab = test_support::read_text(data_dir() / "tiny_raw" / "vocab.txt");
    vocab.replace(vocab.find("cat"), 3, "cot");
    std::ofstream(other / "vocab.txt") << vocab;
    auto cfg = tiny_config(dir.path());
    cfg.raw_model_id = other.string();
    EXPECT_THROW(EmbeddingProvider{cfg}, std::runtime_error);
}

TEST(Provider, UnknownModelIdIsReported) {
    ::unsetenv("ESTIMEKIT_MODEL_DIR");
    EXPECT_THROW(resolve_model_dir("bert-large-uncased-whole-word-masking"), ModelNotFound);
}

TEST(Extraction, WorkerCountDoesNotChangeResult) {
    const auto seq = tiny().tokenizer.tokenize(test_support::doc("article_600.txt"));
    const auto plan = plan_masked_passes(seq, 64, 32, 8);
    const auto one = extract_masked_embeddings(seq, plan, *tiny().encoder, tiny().tokenizer.mask_id(), "tiny", 1);
    const auto four = extract_masked_embeddings(seq, plan, *tiny().encoder, tiny().tokenizer.mask_id(), "tiny", 4);
    for (std::size_t k = 0; k < one.layers.size(); ++k)
        EXPECT_TRUE((one.layers[k].array() == four.layers[k].array()).all()) << k;
}

TEST(Provider, CachedAndUncachedRunsReturnIdenticalValues) {
    TempDir dir;
    auto cfg = tiny_config(dir.path());
    EmbeddingProvider cached(cfg);
    cfg.use_cache = false;
    EmbeddingProvider uncached(cfg);
    const auto text = test_support::doc("fixture_c.txt");
    cached.embed(text);
    const auto warm = cached.embed(text);
    const auto cold = uncached.embed(text);
    EXPECT_EQ(cached.cache()->hits(), 1u);
    EXPECT_EQ(uncached.cache(), nullptr);
    for (std::size_t k = 0; k < warm.layers.layers.size(); ++k)
        EXPECT_TRUE((warm.layers.layers[k].array() == cold.layers.layers[k].array()).all());
    EXPECT_TRUE((warm.raw.rows.array() == cold.raw.rows.array()).all());
}
