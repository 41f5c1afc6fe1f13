#include <doctest.h>

#include <fstream>
#include <sstream>

#include "test_support.hpp"
#include "uqevo/estimators.hpp"
#include "uqevo/feature_store.hpp"
#include "uqevo/metrics.hpp"

using namespace uqevo;

namespace {

Dataset from_text(const std::string& text, Task task = Task::binary) {
  std::istringstream in(text);
  return parse_jsonl(in, "inline", task);
}

}  // namespace

TEST_CASE("load minimal well-formed binary file") {
  Dataset d = from_text(
      R"({"id":"a","quality":1,"tokens":[{"lp":-1.0,"ent":0.5}]})"
      "\n"
      R"({"id":"b","quality":0,"tokens":[{"lp":-2.0,"ent":1.0}]})"
      "\n");
  CHECK(d.samples.size() == 2);
  CHECK(d.task == Task::binary);
  CHECK(d.samples[0].id == "a");
  CHECK(d.samples[0].logprobs == std::vector<double>{-1.0});
  CHECK(d.samples[1].quality == 0.0);
}

TEST_CASE("binary dataset rejects fractional quality") {
  CHECK_THROWS_WITH_AS(
      from_text(R"({"id":"a","quality":0.5,"tokens":[{"lp":-1.0,"ent":0.5}]})"
                "\n"
                R"({"id":"b","quality":0,"tokens":[{"lp":-1.0,"ent":0.5}]})"
                "\n"),
      doctest::Contains("quality not in {0,1}"), DatasetError);
}

TEST_CASE("loader reports line numbers for malformed JSON") {
  CHECK_THROWS_WITH_AS(
      from_text(R"({"id":"a","quality":1,"tokens":[{"lp":-1.0,"ent":0.5}]})"
                "\n"
                "{not json\n"),
      doctest::Contains("line 2"), DatasetError);
}

TEST_CASE("loader rejects schema violations") {
  const char* good = R"({"id":"b","quality":0,"tokens":[{"lp":-1.0,"ent":0.5}]})";
  SUBCASE("unknown top-level key") {
    CHECK_THROWS_WITH_AS(
        from_text(std::string(R"({"id":"a","quality":1,"tokens":[{"lp":-1,"ent":1}],"extra":1})") +
                  "\n" + good + "\n"),
        doctest::Contains("unknown key"), DatasetError);
  }
  SUBCASE("positive logprob") {
    CHECK_THROWS_WITH_AS(
        from_text(std::string(R"({"id":"a","quality":1,"tokens":[{"lp":0.5,"ent":1}]})") +
                  "\n" + good + "\n"),
        doctest::Contains("lp > 0"), DatasetError);
  }
  SUBCASE("negative entropy") {
    CHECK_THROWS_AS(
        from_text(std::string(R"({"id":"a","quality":1,"tokens":[{"lp":-0.5,"ent":-1}]})") +
                  "\n" + good + "\n"),
        DatasetError);
  }
  SUBCASE("empty tokens") {
    CHECK_THROWS_AS(from_text(std::string(R"({"id":"a","quality":1,"tokens":[]})") + "\n" +
                              good + "\n"),
                    DatasetError);
  }
  SUBCASE("duplicate ids") {
    CHECK_THROWS_WITH_AS(
        from_text(std::string(good) + "\n" +
                  R"({"id":"b","quality":1,"tokens":[{"lp":-1.0,"ent":0.5}]})" + "\n"),
        doctest::Contains("duplicate id"), DatasetError);
  }
  SUBCASE("single-class binary") {
    CHECK_THROWS_WITH_AS(
        from_text(std::string(good) + "\n" +
                  R"({"id":"c","quality":0,"tokens":[{"lp":-1.0,"ent":0.5}]})" + "\n"),
        doctest::Contains("single class"), DatasetError);
  }
  SUBCASE("continuous quality outside [0,1]") {
    CHECK_THROWS_AS(
        from_text(std::string(R"({"id":"a","quality":1.5,"tokens":[{"lp":-1,"ent":1}]})") +
                      "\n" + good + "\n",
                  Task::continuous),
        DatasetError);
  }
}

TEST_CASE("write/load roundtrip is identity on samples") {
  Dataset d;
  d.name = "rt";
  d.task = Task::continuous;
  std::mt19937_64 rng(42);
  for (int i = 0; i < 25; ++i) {
    auto s = testsup::random_sample(rng);
    s.id = "s" + std::to_string(i);
    s.quality = static_cast<double>(i) / 25.0;
    s.channels["gap"] = std::vector<double>(s.size(), 0.25 * i);
    if (i % 3 == 0) s.meta["src"] = "unit";
    d.samples.push_back(std::move(s));
  }
  d.required_channels = {"gap"};

  std::ostringstream out;
  write_jsonl(d, out);
  std::istringstream in(out.str());
  Dataset back = parse_jsonl(in, "rt", Task::continuous);
  CHECK(back.samples == d.samples);
  CHECK(back.task == d.task);
  CHECK(back.required_channels == d.required_channels);
}

TEST_CASE("generate_synthetic is deterministic and byte-stable") {
  SyntheticConfig cfg;
  cfg.n_samples = 50;
  cfg.min_len = 4;
  cfg.max_len = 12;
  cfg.planted_weights = {{"mean_logprob", 2.0}};
  cfg.noise = 0.5;
  cfg.seed = 9;
  Dataset a = generate_synthetic(cfg);
  Dataset b = generate_synthetic(cfg);
  CHECK(a == b);

  std::ostringstream ta, tb;
  write_jsonl(a, ta);
  write_jsonl(b, tb);
  CHECK(ta.str() == tb.str());
}

TEST_CASE("planted mean_logprob signal is recoverable") {
  SyntheticConfig cfg;
  cfg.n_samples = 1000;
  cfg.min_len = 5;
  cfg.max_len = 25;
  cfg.planted_weights = {{"mean_logprob", 3.0}};
  cfg.noise = 0.1;
  cfg.seed = 7;
  Dataset d = generate_synthetic(cfg);
  CHECK(d.samples.size() == 1000);

  // The planted scorer, negated mean logprob, must detect incorrect samples.
  std::vector<double> uncertainty, quality;
  for (const auto& s : d.samples) {
    double sum = 0;
    for (double lp : s.logprobs) sum += lp;
    uncertainty.push_back(-(sum / static_cast<double>(s.size())));
    quality.push_back(s.quality);
  }
  CHECK(roc_auc(uncertainty, quality) >= 0.85);
}

TEST_CASE("overwhelming noise drowns the planted signal") {
  SyntheticConfig cfg;
  cfg.n_samples = 2000;
  cfg.min_len = 5;
  cfg.max_len = 15;
  cfg.planted_weights = {{"mean_logprob", 3.0}};
  cfg.noise = 1000.0;
  cfg.seed = 11;
  Dataset d = generate_synthetic(cfg);
  std::vector<double> uncertainty, quality;
  for (const auto& s : d.samples) {
    double sum = 0;
    for (double lp : s.logprobs) sum += lp;
    uncertainty.push_back(-(sum / static_cast<double>(s.size())));
    quality.push_back(s.quality);
  }
  CHECK(roc_auc(uncertainty, quality) == doctest::Approx(0.5).epsilon(0.12));
}

TEST_CASE("generate_synthetic rejects unknown planted features") {
  SyntheticConfig cfg;
  cfg.n_samples = 10;
  cfg.min_len = 2;
  cfg.max_len = 4;
  cfg.planted_weights = {{"not_a_feature", 1.0}};
  CHECK_THROWS_WITH_AS(generate_synthetic(cfg), doctest::Contains("not_a_feature"),
                       DatasetError);
}

TEST_CASE("split_dataset basics") {
  SyntheticConfig cfg;
  cfg.n_samples = 100;
  cfg.min_len = 3;
  cfg.max_len = 6;
  cfg.seed = 3;
  cfg.noise = 10.0;  // quality ~ coin flip
  Dataset d = generate_synthetic(cfg);

  auto [train, test] = split_dataset(d, 0.8, 17);
  CHECK(train.samples.size() + test.samples.size() == d.samples.size());

  std::set<std::string> train_ids, test_ids;
  for (const auto& s : train.samples) train_ids.insert(s.id);
  for (const auto& s : test.samples) test_ids.insert(s.id);
  for (const auto& id : test_ids) CHECK(train_ids.count(id) == 0);
  CHECK(train_ids.size() + test_ids.size() == d.samples.size());

  auto [train2, test2] = split_dataset(d, 0.8, 17);
  CHECK(train2 == train);
  CHECK(test2 == test);
}

TEST_CASE("split_dataset stratification keeps class balance") {
  Dataset d;
  d.name = "bal";
  d.task = Task::binary;
  for (int i = 0; i < 100; ++i) {
    auto s = testsup::make_sample("s" + std::to_string(i), {-1.0 - i * 0.01}, {0.5});
    s.quality = i < 50 ? 0.0 : 1.0;
    d.samples.push_back(std::move(s));
  }
  auto [train, test] = split_dataset(d, 0.8, 5);
  auto count_ones = [](const Dataset& ds) {
    int c = 0;
    for (const auto& s : ds.samples) c += s.quality == 1.0 ? 1 : 0;
    return c;
  };
  int train_ones = count_ones(train);
  int test_ones = count_ones(test);
  CHECK(std::abs(train_ones - (static_cast<int>(train.samples.size()) - train_ones)) <= 1);
  CHECK(std::abs(test_ones - (static_cast<int>(test.samples.size()) - test_ones)) <= 1);
}

TEST_CASE("split_dataset rejects degenerate fractions") {
  Dataset d;
  d.name = "tiny";
  d.task = Task::binary;
  for (int i = 0; i < 10; ++i) {
    auto s = testsup::make_sample("s" + std::to_string(i), {-1.0}, {0.5});
    s.quality = i % 2 == 0 ? 0.0 : 1.0;
    d.samples.push_back(std::move(s));
  }
  CHECK_THROWS_AS(split_dataset(d, 0.999, 1), DatasetError);
  CHECK_THROWS_AS(split_dataset(d, 1.5, 1), DatasetError);
}

TEST_CASE("mixed pool of 5,536 claims loads with its full size") {
  // Equal thirds from three sources, concatenated into one JSONL stream.
  std::ostringstream mix;
  int counts[3] = {1845, 1845, 1846};
  int emitted = 0;
  for (int source = 0; source < 3; ++source) {
    SyntheticConfig cfg;
    cfg.n_samples = counts[source];
    cfg.min_len = 2;
    cfg.max_len = 4;
    cfg.noise = 10.0;
    cfg.seed = 100 + static_cast<std::uint64_t>(source);
    Dataset part = generate_synthetic(cfg);
    for (auto& s : part.samples) {
      s.id = "src" + std::to_string(source) + "-" + s.id;
      s.meta["source"] = "pool" + std::to_string(source);
      ++emitted;
    }
    write_jsonl(part, mix);
  }
  REQUIRE(emitted == 5536);
  std::istringstream in(mix.str());
  Dataset pool = parse_jsonl(in, "mixture", Task::binary);
  CHECK(pool.samples.size() == 5536);
}

TEST_CASE("load_dataset via file path") {
  auto dir = testsup::fresh_dir("fs");
  auto path = (dir / "mini.jsonl").string();
  {
    std::ofstream out(path);
    out << R"({"id":"a","quality":1,"tokens":[{"lp":-1.0,"ent":0.5}]})" << "\n"
        << R"({"id":"b","quality":0,"tokens":[{"lp":-2.0,"ent":1.0}]})" << "\n";
  }
  Dataset d = load_dataset(path, Task::binary);
  CHECK(d.name == "mini");
  CHECK(d.samples.size() == 2);
  CHECK_THROWS_AS(load_dataset((dir / "absent.jsonl").string(), Task::binary),
                  DatasetError);
}
