// Copyright Contributors to the posefree3d project
// SPDX-License-Identifier: Apache-2.0

#include "posefree/discriminator.hpp"
#include "posefree/errors.hpp"

#include <gtest/gtest.h>

using namespace posefree;

namespace {

DiscriminatorConfig small(DiscKind kind, int64_t m = 6) {
    DiscriminatorConfig cfg;
    cfg.variant = {kind, m};
    cfg.image_resolution = 16;
    cfg.base_channels = 4;
    cfg.hidden = 12;
    return cfg;
}

ImagePair random_pair(int64_t b, int64_t res = 16) {
    return {torch::rand({b, 3, res, res}) * 2 - 1, torch::rand({b, 3, res, res}) * 2 - 1};
}

} // namespace

TEST(Discriminator, VariantNamesRoundTrip) {
    for (auto kind : {DiscKind::PoseConditioned, DiscKind::Regression, DiscKind::Implicit, DiscKind::RegressionImplicit})
        EXPECT_EQ(DiscVariant::parse_kind(DiscVariant::kind_name(kind)), kind);
    EXPECT_THROW(DiscVariant::parse_kind("gan"), ConfigError);
    EXPECT_THROW((DiscVariant{DiscKind::Implicit, 1}).validate(), ConfigError);
}

TEST(Discriminator, HeadsFollowTheVariant) {
    struct Case {
        DiscKind kind;
        bool pose;
        bool embed;
    };
    for (const auto& c : {Case{DiscKind::PoseConditioned, false, false}, Case{DiscKind::Regression, true, false},
                          Case{DiscKind::Implicit, false, true}, Case{DiscKind::RegressionImplicit, true, true}}) {
        Discriminator d(small(c.kind), 0);
        const auto pair = random_pair(3);
        std::optional<torch::Tensor> cond;
        if (c.kind == DiscKind::PoseConditioned) cond = torch::rand({3, 2});
        const auto out = discriminate(d, pair, cond);
        EXPECT_EQ(out.logit.sizes(), torch::IntArrayRef({3}));
        EXPECT_EQ(out.pose_estimate.has_value(), c.pose);
        EXPECT_EQ(out.embedding.has_value(), c.embed);
        if (out.pose_estimate) EXPECT_EQ(out.pose_estimate->sizes(), torch::IntArrayRef({3, 2}));
        if (out.embedding) {
            EXPECT_EQ(out.embedding->sizes(), torch::IntArrayRef({3, 6}));
            EXPECT_LT((out.embedding->norm(2, -1) - 1.0).abs().max().item<double>(), 1e-6);
        }
    }
}

TEST(Discriminator, ConditionContract) {
    Discriminator cond(small(DiscKind::PoseConditioned), 0);
    Discriminator plain(small(DiscKind::Implicit), 0);
    const auto pair = random_pair(2);
    EXPECT_THROW(discriminate(cond, pair, std::nullopt), ContractViolation);
    EXPECT_THROW(discriminate(plain, pair, torch::rand({2, 2})), ContractViolation);
    EXPECT_THROW(discriminate(cond, pair, torch::rand({2, 3})), ContractViolation);
    EXPECT_THROW(discriminate(plain, random_pair(2, 32), std::nullopt), ContractViolation);
}

TEST(Discriminator, ConditionChangesTheLogit) {
    Discriminator d(small(DiscKind::PoseConditioned), 4);
    const auto pair = random_pair(2);
    const auto a = discriminate(d, pair, torch::zeros({2, 2})).logit;
    const auto b = discriminate(d, pair, torch::ones({2, 2})).logit;
    EXPECT_FALSE(torch::allclose(a, b));
}

TEST(Discriminator, SharedPartsAreIdenticalAcrossVariants) {
    Discriminator reg(small(DiscKind::Regression), 9);
    Discriminator imp(small(DiscKind::Implicit), 9);
    Discriminator both(small(DiscKind::RegressionImplicit), 9);
    const auto pair = random_pair(2);
    const auto h = reg->features(pair);
    EXPECT_TRUE(torch::equal(h, imp->features(pair)));
    EXPECT_TRUE(torch::equal(h, both->features(pair)));
    EXPECT_TRUE(torch::equal(reg->pose_head->weight, both->pose_head->weight));
    EXPECT_TRUE(torch::equal(imp->embed_head->weight, both->embed_head->weight));
    EXPECT_TRUE(torch::equal(discriminate(reg, pair, std::nullopt).logit,
                             discriminate(both, pair, std::nullopt).logit));
}

TEST(Discriminator, NormalizationHandlesZeroAndTinyVectors) {
    const auto zero = normalize_embedding(torch::zeros({2, 4}));
    EXPECT_FALSE(torch::isnan(zero).any().item<bool>());
    const auto tiny = normalize_embedding(torch::full({1, 4}, 1e-6, torch::kFloat64));
    EXPECT_NEAR(tiny.norm().item<double>(), 1.0, 1e-12);
    const auto big = normalize_embedding(torch::tensor({{3e10, 4e10}}, torch::kFloat64));
    EXPECT_NEAR(big[0][0].item<double>(), 0.6, 1e-15);
}
