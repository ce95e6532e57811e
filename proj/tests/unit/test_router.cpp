#include <fstream>
#include <thread>

#include "doctest.h"
#include "dnet/error.hpp"
#include "dnet/router.hpp"
#include "dnet/synth.hpp"
#include "helpers.hpp"

using namespace dnet;

namespace {

DenoiseModel model_for(const NoiseSpec& spec, std::uint64_t seed) {
  NetworkConfig c;
  c.depth = 2;
  c.feed_channels = 3;
  c.seed = seed;
  return DenoiseModel{c, init_weights(c), spec, {}};
}

Classifier tiny_classifier(std::vector<std::string> names) {
  ClassifierConfig c;
  c.trunk = {{2, true}};
  c.fc = {names.size()};
  c.input_side = 8;
  c.class_names = std::move(names);
  Classifier clf(c);
  clf.mark_trained();
  return clf;
}

}  // namespace

TEST_CASE("oracle routing is bit-identical to denoising with the chosen model") {
  const NoiseSpec g25 = NoiseSpec::gaussian(25);
  auto faces = std::make_shared<const DenoiseModel>(model_for(g25, 1));
  auto all = std::make_shared<const DenoiseModel>(model_for(g25, 2));
  DenoiserRegistry reg;
  reg.add("face", g25, faces);
  reg.add(kAgnosticClass, g25, all);
  const GrayImage img = synth_scene_corpus(1, 40, 44, 3)[0];
  const RouteResult r = route_denoise(img, reg, OracleLabel{"face"}, g25);
  CHECK(r.label == "face");
  CHECK(!r.fallback);
  CHECK(r.probabilities.empty());
  CHECK(r.image.pixels == denoise_image(img, *faces).pixels);
  const RouteResult a = route_denoise(img, reg, OracleLabel{kAgnosticClass}, g25);
  CHECK(a.image.pixels == denoise_image(img, *all).pixels);
}

TEST_CASE("unknown labels fall back to the agnostic model") {
  const NoiseSpec g25 = NoiseSpec::gaussian(25);
  auto all = std::make_shared<const DenoiseModel>(model_for(g25, 2));
  DenoiserRegistry reg;
  reg.add(kAgnosticClass, g25, all);
  const GrayImage img(30, 30, 0.5);
  const RouteResult r = route_denoise(img, reg, OracleLabel{"cat"}, g25);
  CHECK(r.fallback);
  CHECK(r.label == kAgnosticClass);
  CHECK(r.image.pixels == denoise_image(img, *all).pixels);
  CHECK_THROWS_AS(route_denoise(img, reg, OracleLabel{"cat"}, NoiseSpec::gaussian(50)), InvalidArgument);
}

TEST_CASE("classifier routing reports probabilities") {
  const NoiseSpec p4 = NoiseSpec::poisson(4);
  DenoiserRegistry reg;
  reg.add("a", p4, std::make_shared<const DenoiseModel>(model_for(p4, 1)));
  reg.add("b", p4, std::make_shared<const DenoiseModel>(model_for(p4, 2)));
  reg.add(kAgnosticClass, p4, std::make_shared<const DenoiseModel>(model_for(p4, 3)));
  const Classifier clf = tiny_classifier({"a", "b"});
  const GrayImage img(30, 30, 0.5);
  const RouteResult r = route_denoise(img, reg, &clf, p4);
  CHECK(r.probabilities.size() == 2);
  CHECK(r.label == clf.classify(img).name);
  const Classifier* none = nullptr;
  CHECK_THROWS_AS(route_denoise(img, reg, none, p4), InvalidArgument);
}

TEST_CASE("registry validation requires an agnostic entry per noise spec") {
  DenoiserRegistry reg;
  const NoiseSpec g = NoiseSpec::gaussian(15);
  reg.add("face", g, std::make_shared<const DenoiseModel>(model_for(g, 1)));
  CHECK_THROWS_AS(reg.validate(), InvalidArgument);
  reg.add(kAgnosticClass, g, std::make_shared<const DenoiseModel>(model_for(g, 2)));
  CHECK_NOTHROW(reg.validate());
}

TEST_CASE("registry files load lazily, once, with relative paths") {
  testutil::TempDir dir("reg");
  const NoiseSpec g = NoiseSpec::gaussian(25);
  save_model(model_for(g, 1), dir / "face.dnet");
  save_model(model_for(g, 2), dir / "all.dnet");
  save_model(model_for(NoiseSpec::gaussian(50), 3), dir / "wrong.dnet");
  {
    std::ofstream out(dir / "reg.json");
    out << nlohmann::json{{"entries",
                           {{{"class", "face"}, {"noise", g.to_json()}, {"model", "face.dnet"}},
                            {{"class", "agnostic"}, {"noise", g.to_json()}, {"model", "all.dnet"}},
                            {{"class", "tree"}, {"noise", g.to_json()}, {"model", "wrong.dnet"}}}}}
               .dump();
  }
  const DenoiserRegistry reg = DenoiserRegistry::load(dir / "reg.json");
  CHECK(reg.loads() == 0);
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t) threads.emplace_back([&] { reg.lookup("face", g); });
  for (auto& t : threads) t.join();
  CHECK(reg.loads() == 1);
  const auto a = reg.lookup("face", g);
  const auto b = reg.lookup("face", g);
  CHECK(a.model.get() == b.model.get());
  CHECK(reg.loads() == 1);
  CHECK_THROWS_AS(reg.lookup("tree", g), InvalidArgument);

  reg.save(dir / "copy.json");
  const DenoiserRegistry again = DenoiserRegistry::load(dir / "copy.json");
  CHECK(again.lookup("face", g).model->weights == a.model->weights);

  {
    std::ofstream out(dir / "broken.json");
    out << "{not json";
  }
  CHECK_THROWS_AS(DenoiserRegistry::load(dir / "broken.json"), InvalidArgument);
  CHECK_THROWS_AS(DenoiserRegistry::load(dir / "absent.json"), Error);
}

TEST_CASE("paired evaluation uses one realization for every route") {
  const NoiseSpec g25 = NoiseSpec::gaussian(25);
  LabeledCorpus corpus = synth_texture_corpus(2, 40, 5);
  DenoiserRegistry reg;
  auto shared = std::make_shared<const DenoiseModel>(model_for(g25, 1));
  for (const auto& name : corpus.class_names) reg.add(name, g25, shared);
  reg.add(kAgnosticClass, g25, shared);
  const Classifier clf = tiny_classifier(corpus.class_names);
  const auto records = evaluate_routing(corpus, reg, clf, g25, 2, 7);
  REQUIRE(records.size() == corpus.items.size() * 2);
  for (const auto& r : records) {
    // one model everywhere, so every route must agree exactly
    CHECK(r.psnr_agnostic == r.psnr_oracle);
    CHECK(r.psnr_oracle == r.psnr_classifier);
  }
  const std::string csv = paired_csv(records);
  CHECK(csv.rfind("image,realization,true_class,predicted_class,psnr_noisy,psnr_agnostic,psnr_oracle,psnr_classifier\n",
                  0) == 0);
}
