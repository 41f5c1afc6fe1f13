#include <doctest.h>

#include <cmath>
#include <limits>
#include <set>

#include "test_support.hpp"
#include "uqevo/dsl.hpp"
#include "uqevo/estimators.hpp"

using namespace uqevo;
using namespace uqevo::dsl;
using testsup::make_sample;

TEST_CASE("parse and evaluate the seed baseline") {
  Program p = parse("-sum(lp)");
  CHECK(p.ast.kind == Expr::Kind::neg);
  CHECK(p.ast.children[0].kind == Expr::Kind::call);
  CHECK(evaluate(p, make_sample("a", {-1.0, -1.0}, {0, 0})) == 2.0);
}

TEST_CASE("syntax errors carry 1-based byte offsets") {
  try {
    parse("mean(lp");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.offset == 8);
    CHECK(std::string(e.what()).find("expected ')'") != std::string::npos);
    CHECK(std::string(e.what()).find("syntax error") != std::string::npos);
  }

  CHECK_THROWS_WITH_AS(parse("frobnicate(lp)"), doctest::Contains("unknown function"),
                       ParseError);
  CHECK_THROWS_WITH_AS(parse("frobnicate"), doctest::Contains("unknown identifier"),
                       ParseError);
  CHECK_THROWS_WITH_AS(parse("lp"), doctest::Contains("scalar"), ParseError);
  CHECK_THROWS_WITH_AS(parse("sum(n)"), doctest::Contains("array"), ParseError);
  CHECK_THROWS_WITH_AS(parse("corr(n, lp)"), doctest::Contains("array"), ParseError);
  CHECK_THROWS_WITH_AS(parse("clip(lp)"), doctest::Contains("3 argument"), ParseError);
  CHECK_THROWS_AS(parse(""), ParseError);
  CHECK_THROWS_AS(parse("1 +"), ParseError);
  CHECK_THROWS_AS(parse("let lp = 1 in lp"), ParseError);
}

TEST_CASE("precedence: unary minus binds tighter than power") {
  SequenceSample s = make_sample("p", {-2.0, -2.0}, {0, 0});
  // mean(lp) = -2; (-mean(lp))^2 = 4 under unary-first precedence.
  CHECK(evaluate(parse("-mean(lp) ^ 2"), s) == 4.0);
  CHECK(evaluate(parse("-(mean(lp) ^ 2)"), s) == -4.0);
  CHECK(evaluate(parse("2 ^ 3 ^ 2"), s) == 512.0);   // right-associative
  CHECK(evaluate(parse("(2 ^ 3) ^ 2"), s) == 64.0);
  CHECK(evaluate(parse("1 + 2 * 3"), s) == 7.0);
  CHECK(evaluate(parse("2 ^ -1"), s) == 0.5);
  CHECK(evaluate(parse("1 - 2 - 3"), s) == -4.0);    // left-associative
  CHECK(evaluate(parse("8 / 4 / 2"), s) == 1.0);
  CHECK(evaluate(parse("1 < 2"), s) == 1.0);
  CHECK(evaluate(parse("1 >= 2"), s) == 0.0);
  CHECK(evaluate(parse("mean(lp) = -2"), s) == 1.0);
}

TEST_CASE("total evaluation semantics") {
  SequenceSample s = make_sample("t", {-1.0}, {0.5});
  CHECK(evaluate(parse("1 / (n - n)"), s) == 0.0);
  CHECK(evaluate(parse("exp(-mean(lp))"), s) == doctest::Approx(std::exp(1.0)));
  CHECK(evaluate(parse("log(0 - 5)"), s) ==
        std::log(std::numeric_limits<double>::epsilon()));
  CHECK(evaluate(parse("log(0)"), s) ==
        std::log(std::numeric_limits<double>::epsilon()));
  CHECK(evaluate(parse("sqrt(0 - 4)"), s) == 0.0);      // NaN sanitized
  CHECK(evaluate(parse("10 ^ 400"), s) == 0.0);         // overflow sanitized
  CHECK(evaluate(parse("corr(lp, lp)"), s) == 0.0);  // n < 2
  SequenceSample s3 = make_sample("t3", {-1.0, -2.0, -3.0}, {0, 0, 0});
  CHECK(evaluate(parse("corr(pos, pos * 0)"), s3) == 0.0);  // zero variance
  CHECK(evaluate(parse("clip(5, 0, 1)"), s) == 1.0);
  CHECK(evaluate(parse("clip(0 - 5, 0 - 1, 1)"), s) == -1.0);
  CHECK(evaluate(parse("if(1 < 2, 10, 20)"), s) == 10.0);
  CHECK(evaluate(parse("if(2 < 1, 10, 20)"), s) == 20.0);
  CHECK(evaluate(parse("let x = mean(lp) in x * x"), s) == 1.0);
  CHECK(evaluate(parse("sum(if(lp < -0.5, lp, pos))"), s) == -1.0);
  CHECK(evaluate(parse("first(weights_exp(0.5))"), make_sample("w", {-1, -1, -1}, {0, 0, 0})) ==
        1.0 / 7.0);
}

TEST_CASE("channels evaluate when present and fail loudly when absent") {
  SequenceSample s = make_sample("c", {-1.0, -2.0}, {0.5, 0.5});
  s.channels["gap"] = {0.25, 0.75};
  CHECK(evaluate(parse("sum(ch(\"gap\"))"), s) == 1.0);
  CHECK_THROWS_WITH_AS(evaluate(parse("sum(ch(\"missing\"))"), s),
                       doctest::Contains("unknown channel"), EvalError);
  CHECK(channel_references(parse("mean(ch(\"a\")) + max(ch(\"a\"))").ast) ==
        std::vector<std::string>{"a"});
  auto refs = channel_references(parse("sum(ch(\"b\") + ch(\"a\"))").ast);
  CHECK(refs == std::vector<std::string>{"a", "b"});
}

TEST_CASE("DSL baselines match built-in estimators bit-exactly") {
  Program sp = parse("-sum(lp)");
  Program ppl = parse("exp(-mean(lp))");
  Program ent = parse("mean(ent)");
  Program pcorr = parse("-corr(lp, pos)");

  std::mt19937_64 rng(10);
  for (int t = 0; t < 1000; ++t) {
    auto s = testsup::random_sample(rng, 1, 40);
    CHECK(evaluate(sp, s) == seq_log_prob_uncertainty(s));
    CHECK(evaluate(ppl, s) == perplexity_uncertainty(s));
    CHECK(evaluate(ent, s) == mean_token_entropy(s));
    CHECK(evaluate(pcorr, s) ==
          doctest::Approx(position_logprob_correlation(s)).epsilon(1e-12));
  }
}

TEST_CASE("canonical printing normalizes whitespace and is idempotent") {
  CHECK(canonicalize("  - sum( lp )") == "-sum(lp)");
  CHECK(canonicalize("corr( lp ,  pos )") == "corr(lp,pos)");
  CHECK(canonicalize("1+2 * mean( ent )") == "1 + 2 * mean(ent)");
  CHECK(canonicalize("let  x=1 in x+ n") == "let x = 1 in x + n");

  for (const char* src :
       {"-sum(lp)", "exp(-mean(lp))", "(1 + mean(lp)) * (2 - n)",
        "-mean(lp) ^ 2", "-(mean(lp) ^ 2)", "2 ^ 3 ^ 2", "(2 ^ 3) ^ 2",
        "let x = mean(lp) in x * (x + 1)", "dot(weights_exp(0.8),lp) * -1",
        "if(mean(lp) < -1, 1, 0) + sum(ch(\"g\"))"}) {
    std::string once = canonicalize(src);
    CHECK(canonicalize(once) == once);
    CHECK(parse(once).ast == parse(src).ast);
  }
}

TEST_CASE("parse-print roundtrip holds for random ASTs") {
  std::mt19937_64 rng(11);
  GenOptions opts;
  opts.channels = {"g1", "g2"};
  for (int t = 0; t < 1000; ++t) {
    Expr ast = random_expr(rng, ValType::scalar, 1 + static_cast<int>(rng() % 4), opts);
    std::string printed = canonical_print(ast);
    CAPTURE(printed);
    Program back = parse(printed);
    CHECK(back.ast == ast);
  }
}

TEST_CASE("random programs always evaluate to finite scalars") {
  std::mt19937_64 rng(12);
  GenOptions opts;
  for (int t = 0; t < 500; ++t) {
    Program p = random_program(rng, 3, opts);
    auto s = testsup::random_sample(rng, 1, 20);
    double v = evaluate(p, s);
    CAPTURE(p.source);
    CHECK(std::isfinite(v));
  }
}

TEST_CASE("complexity of the seed baseline") {
  ComplexityReport r = complexity(parse("-sum(lp)"));
  CHECK(r.line_count == 1);
  CHECK(r.ast_nodes == 3);
  CHECK(r.unary_ops == 1);
  CHECK(r.binary_ops == 0);
  CHECK(r.halstead_volume == doctest::Approx(3.0 * std::log2(3.0)).epsilon(1e-15));
}

TEST_CASE("complexity degenerate and structural properties") {
  ComplexityReport single = complexity(parse("n"));
  CHECK(single.ast_nodes == 1);
  CHECK(single.halstead_volume == 0.0);

  std::mt19937_64 rng(13);
  for (int t = 0; t < 200; ++t) {
    Program p = random_program(rng, 3, {});
    ComplexityReport r = complexity(p);
    CHECK(r.ast_nodes >= r.unary_ops + r.binary_ops);
    CHECK(r.line_count >= 1);
    CHECK(r.halstead_volume >= 0.0);
  }
}

TEST_CASE("complexity ignores whitespace except for line count") {
  Program a = parse("mean(lp) + n");
  Program b = parse("mean( lp )\n  + n");
  ComplexityReport ra = complexity(a);
  ComplexityReport rb = complexity(b);
  CHECK(ra.line_count == 1);
  CHECK(rb.line_count == 2);
  rb.line_count = ra.line_count;
  CHECK(ra == rb);
}

TEST_CASE("mutate_random is deterministic per seed") {
  Program p = parse("-sum(lp)");
  std::mt19937_64 rng1(99), rng2(99);
  Program a = mutate_random(p, rng1);
  Program b = mutate_random(p, rng2);
  CHECK(a.source == b.source);
  CHECK(a.ast == b.ast);
}

TEST_CASE("mutations type-check, evaluate, and diversify") {
  Program p = parse("-sum(lp)");
  std::mt19937_64 rng(14);
  std::set<std::string> sources;
  auto sample = testsup::random_sample(rng, 5, 15);
  for (int t = 0; t < 1000; ++t) {
    Program m = mutate_random(p, rng);
    CHECK(type_of(m.ast) == ValType::scalar);
    CHECK(std::isfinite(evaluate(m, sample)));
    sources.insert(m.source);
  }
  CHECK(sources.size() >= 10);
}

TEST_CASE("feature references and the advisory max-feature lint") {
  Program p = parse("let x = mean(lp) in x + corr(ent, pos) * first(ch(\"g\"))");
  CHECK(feature_references(p.ast) ==
        std::vector<std::string>{"ch:g", "ent", "lp", "pos"});
  CHECK(lint_max_features(p, 4).empty());
  std::string warning = lint_max_features(p, 3);
  CHECK(warning.find("4 distinct features") != std::string::npos);

  // Let-bound names are intermediates, not inputs.
  Program simple = parse("let t = sum(lp) in t * t");
  CHECK(feature_references(simple.ast) == std::vector<std::string>{"lp"});
}

TEST_CASE("chained mutation keeps canonical source parseable") {
  std::mt19937_64 rng(15);
  Program p = parse("-sum(lp)");
  for (int step = 0; step < 60; ++step) {
    p = mutate_random(p, rng);
    Program reparsed = parse(p.source);
    CHECK(reparsed.ast == p.ast);
  }
}
