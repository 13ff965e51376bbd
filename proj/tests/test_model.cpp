#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <random>

#include "gaslt/gradcheck.hpp"
#include "gaslt/model.hpp"
#include "gaslt/objectives.hpp"

using namespace gaslt;
using namespace gaslt::model;
using data::Vocabulary;

namespace {

Tensor randn(std::size_t r, std::size_t c, std::uint64_t seed,
             bool grad = false) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::vector<double> v(r * c);
  for (double& x : v) x = n01(rng);
  return Tensor({r, c}, std::move(v), grad);
}

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.d_model = 16;
  cfg.heads = 2;
  cfg.encoder_layers = 1;
  cfg.decoder_layers = 1;
  cfg.window = 3;
  cfg.ff_dim = 24;
  cfg.dropout = 0.0;
  cfg.vocab_size = 8;
  cfg.input_dim = 5;
  return cfg;
}

std::map<std::string, Tensor> param_map(const Translator& m) {
  std::map<std::string, Tensor> out;
  for (const auto& [name, t] : m.named_parameters()) out.emplace(name, t);
  return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape() == b.shape());
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::fabs(a.values()[i] - b.values()[i]));
  return worst;
}

// smallest distance of any gloss sampling position to an integer
double min_kink_distance(const std::vector<attention::AttentionMap>& maps) {
  double worst = 1e30;
  for (const auto& m : maps) {
    for (double p : m.positions)
      worst = std::min(worst, std::fabs(p - std::round(p)));
  }
  return worst;
}

}  // namespace

TEST_CASE("config defaults and validation") {
  ModelConfig cfg;
  CHECK(cfg.d_model == 512);
  CHECK(cfg.heads == 8);
  CHECK(cfg.encoder_layers == 2);
  CHECK(cfg.decoder_layers == 2);
  CHECK(cfg.window == 7);
  CHECK(cfg.dropout == 0.5);
  CHECK(cfg.variant == attention::Variant::kGloss);
  CHECK(cfg.aggregation == Aggregation::kMean);

  cfg.vocab_size = 10;
  cfg.input_dim = 3;
  CHECK_NOTHROW(cfg.validate());

  ModelConfig bad = cfg;
  bad.d_model = 15;  // odd
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.heads = 5;  // 512 % 5 != 0
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.window = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.dropout = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.vocab_size = 3;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.input_dim = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.ff_dim = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  CHECK(aggregation_from_string("max") == Aggregation::kMax);
  CHECK(aggregation_name(Aggregation::kCls) == "cls");
  CHECK_THROWS_AS(aggregation_from_string("banana"), ConfigError);
}

TEST_CASE("config round trips through key=value form") {
  ModelConfig cfg = tiny_config();
  cfg.variant = attention::Variant::kSliding;
  cfg.aggregation = Aggregation::kCls;
  cfg.dropout = 0.25;
  KeyValues kv;
  config_to_kv(cfg, kv);
  const ModelConfig back = config_from_kv(kv);
  CHECK(back.d_model == cfg.d_model);
  CHECK(back.heads == cfg.heads);
  CHECK(back.encoder_layers == cfg.encoder_layers);
  CHECK(back.decoder_layers == cfg.decoder_layers);
  CHECK(back.window == cfg.window);
  CHECK(back.ff_dim == cfg.ff_dim);
  CHECK(back.dropout == cfg.dropout);
  CHECK(back.variant == cfg.variant);
  CHECK(back.aggregation == cfg.aggregation);
  CHECK(back.vocab_size == cfg.vocab_size);
  CHECK(back.input_dim == cfg.input_dim);

  // ff_dim tracks d_model when not given explicitly
  const ModelConfig derived = config_from_kv(
      KeyValues::parse("d_model=64\nheads=4\nvocab_size=10\ninput_dim=3\n"));
  CHECK(derived.ff_dim == 256);
}

TEST_CASE("positional encoding formula") {
  // pos 0: sin 0 = 0, cos 0 = 1, alternating
  const std::vector<double> zero = positional_encoding(0, 6);
  CHECK(zero == std::vector<double>{0, 1, 0, 1, 0, 1});

  // pos=1, d=4: angles 1 and 1/10000^(2/4) = 1e-2
  const std::vector<double> one = positional_encoding(1, 4);
  CHECK(one[0] == doctest::Approx(std::sin(1.0)).epsilon(1e-12));
  CHECK(one[1] == doctest::Approx(std::cos(1.0)).epsilon(1e-12));
  CHECK(one[2] == doctest::Approx(std::sin(0.01)).epsilon(1e-12));
  CHECK(one[3] == doctest::Approx(std::cos(0.01)).epsilon(1e-12));

  CHECK(positional_encoding(9, 8) == positional_encoding(9, 8));
  CHECK_THROWS_AS(positional_encoding(0, 5), ConfigError);

  const Tensor table = positional_table(3, 4);
  CHECK(table.rows() == 3);
  for (std::size_t d = 0; d < 4; ++d)
    CHECK(table.values()[2 * 4 + d] == positional_encoding(2, 4)[d]);
}

TEST_CASE("embed_video: identity path and relu cutoff") {
  ModelConfig cfg = tiny_config();
  cfg.d_model = 4;
  cfg.heads = 2;
  cfg.input_dim = 4;
  cfg.ff_dim = 8;
  cfg.window = 1;
  Translator m(cfg, 3);
  auto params = param_map(m);

  // W = I, b = 0: fresh running stats make eval BN a near-identity
  auto& w = params.at("embed_video.w").mutable_values();
  std::fill(w.begin(), w.end(), 0.0);
  for (std::size_t i = 0; i < 4; ++i) w[i * 4 + i] = 1.0;

  const Tensor pos_frames({2, 4}, {1.0, 2.0, 3.0, 4.0,  //
                                   0.5, 0.25, 8.0, 2.0});
  const Tensor out = m.embed_video(pos_frames, false);
  for (std::size_t t = 0; t < 2; ++t) {
    const std::vector<double> pe = positional_encoding(t, 4);
    for (std::size_t d = 0; d < 4; ++d) {
      CHECK(out.values()[t * 4 + d] ==
            doctest::Approx(pos_frames.values()[t * 4 + d] + pe[d])
                .epsilon(1e-4));
    }
  }

  // all-negative pre-activations die in the relu: output is exactly f_pos
  const Tensor neg_frames({2, 4}, std::vector<double>(8, -3.0));
  const Tensor dead = m.embed_video(neg_frames, false);
  for (std::size_t t = 0; t < 2; ++t) {
    const std::vector<double> pe = positional_encoding(t, 4);
    for (std::size_t d = 0; d < 4; ++d)
      CHECK(dead.values()[t * 4 + d] == pe[d]);
  }

  CHECK_THROWS_AS(m.embed_video(randn(2, 7, 1), false), ShapeError);
}

TEST_CASE("embed_video matches a hand-composed pipeline") {
  const ModelConfig cfg = tiny_config();
  Translator m(cfg, 11);
  auto params = param_map(m);
  const Tensor frames = randn(6, cfg.input_dim, 21);

  ops::BatchNormState fresh(cfg.d_model);
  Tensor h = ops::linear(frames, params.at("embed_video.w"),
                         params.at("embed_video.b"));
  h = ops::batch_norm(h, params.at("embed_video.gamma"),
                      params.at("embed_video.beta"), fresh, false);
  h = ops::relu(h);
  h = ops::add(h, positional_table(6, cfg.d_model));

  CHECK(max_abs_diff(m.embed_video(frames, false), h) == 0.0);
}

TEST_CASE("training embeds normalize with pre-update running statistics") {
  const ModelConfig cfg = tiny_config();
  Translator m(cfg, 11);
  const Tensor frames = randn(6, cfg.input_dim, 33);

  // a training forward normalizes exactly like eval with the stats as they
  // stood before the call, so no row sees the rest of its own sequence
  const Tensor before = m.embed_video(frames, false);
  const Tensor trained = m.embed_video(frames, true);
  CHECK(max_abs_diff(trained, before) == 0.0);

  // ...but it folds the rows into the running statistics as a side effect
  const Tensor after = m.embed_video(frames, false);
  CHECK(max_abs_diff(after, before) > 0.0);
}

TEST_CASE("teacher forcing stays causal in training mode") {
  // two fresh models share every parameter and running statistic; only a
  // future input token differs, so earlier logit rows must match bitwise
  const ModelConfig cfg = tiny_config();  // dropout 0
  const Tensor frames = randn(6, cfg.input_dim, 8);
  const std::vector<int> inputs = {Vocabulary::kBos, 4, 5, 6, 7};
  const std::vector<int> altered = {Vocabulary::kBos, 4, 5, 1, 7};

  Translator ma(cfg, 13), mb(cfg, 13);
  const Tensor la = ma.decode_logits(ma.encode(frames, true), inputs, true);
  const Tensor lb = mb.decode_logits(mb.encode(frames, true), altered, true);
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t c = 0; c < cfg.vocab_size; ++c) {
      CHECK(la.values()[r * cfg.vocab_size + c] ==
            lb.values()[r * cfg.vocab_size + c]);
    }
  }
}

TEST_CASE("embed_text: position is the only difference between equal tokens") {
  const ModelConfig cfg = tiny_config();
  Translator m(cfg, 5);
  const std::vector<int> ids = {5, 4, 4, 4, 4, 5};
  const Tensor out = m.embed_text(ids, false);
  REQUIRE(out.rows() == 6);

  const std::vector<double> p0 = positional_encoding(0, cfg.d_model);
  const std::vector<double> p5 = positional_encoding(5, cfg.d_model);
  for (std::size_t d = 0; d < cfg.d_model; ++d) {
    const double got = out.values()[0 * cfg.d_model + d] -
                       out.values()[5 * cfg.d_model + d];
    CHECK(got == doctest::Approx(p0[d] - p5[d]).epsilon(1e-12));
  }

  const Tensor empty = m.embed_text(std::vector<int>{}, false);
  CHECK(empty.rows() == 0);
  CHECK(empty.cols() == cfg.d_model);

  CHECK_THROWS_AS(m.embed_text(std::vector<int>{99}, false), ContractError);
}

TEST_CASE("encoder: zero layers is the identity stack") {
  ModelConfig cfg = tiny_config();
  cfg.encoder_layers = 0;
  Translator m(cfg, 17);
  const Tensor frames = randn(5, cfg.input_dim, 3);
  const EncoderOutput enc = m.encode(frames, false);
  CHECK(max_abs_diff(enc.hidden, m.embed_video(frames, false)) == 0.0);
  CHECK(enc.maps.empty());
}

TEST_CASE("encoder: zeroed output projections reduce to the residuals") {
  const ModelConfig cfg = tiny_config();
  Translator m(cfg, 23);
  auto params = param_map(m);
  for (const char* name : {"enc0.attn.w_out", "enc0.attn.b_out",
                           "enc0.mlp.w2", "enc0.mlp.b2"}) {
    auto& v = params.at(name).mutable_values();
    std::fill(v.begin(), v.end(), 0.0);
  }
  const Tensor frames = randn(5, cfg.input_dim, 4);
  const EncoderOutput enc = m.encode(frames, false);
  CHECK(max_abs_diff(enc.hidden, m.embed_video(frames, false)) == 0.0);
}

TEST_CASE("encoder equals the hand-composed pre-norm composition") {
  ModelConfig cfg = tiny_config();
  cfg.encoder_layers = 2;
  Translator m(cfg, 31);
  auto params = param_map(m);
  const Tensor frames = randn(5, cfg.input_dim, 6);

  Tensor x = m.embed_video(frames, false);
  for (int layer = 0; layer < 2; ++layer) {
    const std::string p = "enc" + std::to_string(layer);
    attention::MultiHeadParams attn;
    for (std::size_t h = 0; h < cfg.heads; ++h) {
      const std::string hp = p + ".attn.h" + std::to_string(h) + ".";
      attention::HeadParams head;
      head.w_q = params.at(hp + "w_q");
      head.w_k = params.at(hp + "w_k");
      head.w_v = params.at(hp + "w_v");
      head.w_offset = params.at(hp + "w_offset");
      head.positions = cfg.window;
      attn.heads.push_back(head);
    }
    attn.w_out = params.at(p + ".attn.w_out");
    attn.b_out = params.at(p + ".attn.b_out");

    const Tensor normed = ops::layer_norm(x, params.at(p + ".attn_norm.gain"),
                                          params.at(p + ".attn_norm.bias"));
    const Tensor z = ops::add(
        x, attention::multi_head(normed, cfg.variant, attn).output);
    const Tensor normed2 = ops::layer_norm(z, params.at(p + ".mlp_norm.gain"),
                                           params.at(p + ".mlp_norm.bias"));
    const Tensor inner = ops::relu(
        ops::linear(normed2, params.at(p + ".mlp.w1"),
                    params.at(p + ".mlp.b1")));
    x = ops::add(z, ops::linear(inner, params.at(p + ".mlp.w2"),
                                params.at(p + ".mlp.b2")));
  }

  const EncoderOutput enc = m.encode(frames, false);
  CHECK(max_abs_diff(enc.hidden, x) < 1e-12);
  CHECK(max_abs_diff(enc.sentence, ops::mean_rows(x)) < 1e-12);
  CHECK(enc.maps.size() == 2 * cfg.heads);
  CHECK(enc.maps.front().layer == 0);
  CHECK(enc.maps.back().layer == 1);
}

TEST_CASE("sentence embedding modes") {
  const Tensor h({2, 2}, {1, 2, 3, 4});
  CHECK(sentence_embedding(h, Aggregation::kMean).values() ==
        std::vector<double>{2, 3});
  const Tensor h2({2, 2}, {1, 4, 3, 2});
  CHECK(sentence_embedding(h2, Aggregation::kMax).values() ==
        std::vector<double>{3, 4});
  CHECK(sentence_embedding(h2, Aggregation::kCls).values() ==
        std::vector<double>{1, 4});

  const Tensor single({1, 3}, {7, 8, 9});
  for (Aggregation mode :
       {Aggregation::kMean, Aggregation::kMax, Aggregation::kCls}) {
    CHECK(sentence_embedding(single, mode).values() ==
          std::vector<double>{7, 8, 9});
  }
  CHECK_THROWS_AS(sentence_embedding(Tensor({0, 3}, {}), Aggregation::kMean),
                  ContractError);
}

TEST_CASE("cls aggregation prepends a learned frame") {
  ModelConfig cfg = tiny_config();
  cfg.aggregation = Aggregation::kCls;
  Translator m(cfg, 9);
  const Tensor frames = randn(4, cfg.input_dim, 2);
  const EncoderOutput enc = m.encode(frames, false);
  CHECK(enc.hidden.rows() == 5);  // CLS + 4 frames
  for (std::size_t d = 0; d < cfg.d_model; ++d)
    CHECK(enc.sentence.values()[d] == enc.hidden.values()[d]);
  CHECK(enc.maps.front().query_len == 5);
}

TEST_CASE("teacher-forced logits have shape M x V and are causal") {
  const ModelConfig cfg = tiny_config();
  Translator m(cfg, 13);
  const EncoderOutput enc = m.encode(randn(6, cfg.input_dim, 8), false);

  const std::vector<int> inputs = {Vocabulary::kBos, 4, 5, 6, 7};
  const Tensor logits = m.decode_logits(enc, inputs, false);
  CHECK(logits.rows() == 5);
  CHECK(logits.cols() == cfg.vocab_size);

  // altering the input at position 3 must leave rows 0..2 untouched
  const std::vector<int> altered = {Vocabulary::kBos, 4, 5, 1, 7};
  const Tensor other = m.decode_logits(enc, altered, false);
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t c = 0; c < cfg.vocab_size; ++c) {
      CHECK(logits.values()[r * cfg.vocab_size + c] ==
            other.values()[r * cfg.vocab_size + c]);
    }
  }

  CHECK_THROWS_AS(m.decode_logits(enc, std::vector<int>{}, false),
                  ContractError);

  std::vector<attention::AttentionMap> maps;
  m.decode_logits(enc, inputs, false, &maps);
  CHECK(maps.size() == 2 * cfg.heads);  // self + cross of the single layer
  CHECK(maps[0].query_len == 5);
  CHECK(maps[cfg.heads].key_len == 6);  // cross keys = frames
}

TEST_CASE("greedy decoding stops on an immediate EOS scorer") {
  const ModelConfig cfg = tiny_config();
  Translator m(cfg, 29);
  auto params = param_map(m);
  auto& w = params.at("output.w").mutable_values();
  std::fill(w.begin(), w.end(), 0.0);
  auto& b = params.at("output.b").mutable_values();
  std::fill(b.begin(), b.end(), 0.0);
  b[Vocabulary::kEos] = 10.0;

  const EncoderOutput enc = m.encode(randn(5, cfg.input_dim, 1), false);
  const std::vector<int> out = m.greedy_decode(enc, 16);
  CHECK(out == std::vector<int>{Vocabulary::kBos, Vocabulary::kEos});

  // decodes to the empty sentence
  std::vector<data::Sample> empty_corpus(1);
  empty_corpus[0].words = {"a"};
  const data::Vocabulary vocab = data::Vocabulary::build(empty_corpus);
  CHECK(vocab.decode(out).empty());

  CHECK(m.beam_decode(enc, 16, 4) ==
        std::vector<int>{Vocabulary::kBos, Vocabulary::kEos});
  CHECK_THROWS_AS(m.greedy_decode(enc, 0), ConfigError);
  CHECK_THROWS_AS(m.beam_decode(enc, 4, 0), ConfigError);
}

TEST_CASE("beam width one reproduces greedy decoding") {
  for (std::uint64_t seed : {1ull, 2ull, 3ull, 4ull}) {
    const ModelConfig cfg = tiny_config();
    Translator m(cfg, seed);
    const EncoderOutput enc =
        m.encode(randn(7, cfg.input_dim, seed + 50), false);
    CHECK(m.beam_decode(enc, 9, 1) == m.greedy_decode(enc, 9));
  }
}

TEST_CASE("wider beams still return a BOS-led hypothesis") {
  const ModelConfig cfg = tiny_config();
  Translator m(cfg, 41);
  const EncoderOutput enc = m.encode(randn(6, cfg.input_dim, 42), false);
  const std::vector<int> out = m.beam_decode(enc, 6, 3);
  REQUIRE(!out.empty());
  CHECK(out.front() == Vocabulary::kBos);
  CHECK(out.size() <= 7);  // BOS + at most max_len tokens
}

TEST_CASE("padding invariance is exact at true length") {
  const ModelConfig cfg = tiny_config();
  Translator m(cfg, 37);
  const Tensor exact = randn(7, cfg.input_dim, 70);

  // same frames with three rows of pad garbage appended
  std::vector<double> padded_values = exact.values();
  padded_values.resize(10 * cfg.input_dim, 9.0);
  const Tensor padded({10, cfg.input_dim}, std::move(padded_values));

  const EncoderOutput a = m.encode(exact, false);
  const EncoderOutput b = m.encode(padded, false, 7);
  CHECK(max_abs_diff(a.hidden, b.hidden) < 1e-9);
  CHECK(max_abs_diff(a.sentence, b.sentence) < 1e-9);

  const std::vector<int> inputs = {Vocabulary::kBos, 4, 5};
  CHECK(max_abs_diff(m.decode_logits(a, inputs, false),
                     m.decode_logits(b, inputs, false)) < 1e-9);

  CHECK_THROWS_AS(m.encode(exact, false, 8), ContractError);
  CHECK_THROWS_AS(m.encode(Tensor({0, cfg.input_dim}, {}), false),
                  ContractError);
}

TEST_CASE("same seed, same model: outputs are bitwise reproducible") {
  const ModelConfig cfg = tiny_config();
  Translator a(cfg, 99);
  Translator b(cfg, 99);
  const auto pa = a.named_parameters();
  const auto pb = b.named_parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].first == pb[i].first);
    CHECK(pa[i].second.values() == pb[i].second.values());
  }

  const Tensor frames = randn(6, cfg.input_dim, 7);
  const EncoderOutput ea = a.encode(frames, false);
  const EncoderOutput eb = b.encode(frames, false);
  CHECK(ea.hidden.values() == eb.hidden.values());
  CHECK(a.greedy_decode(ea, 8) == b.greedy_decode(eb, 8));

  Translator c(cfg, 100);
  CHECK(c.named_parameters()[0].second.values() != pa[0].second.values());
}

TEST_CASE("frames_to_tensor converts and slices") {
  data::FeatureSequence seq;
  seq.frames = 3;
  seq.dim = 2;
  seq.values = {1.5f, 2.5f, 3.5f, 4.5f, 5.5f, 6.5f};
  const Tensor full = frames_to_tensor(seq);
  CHECK(full.rows() == 3);
  CHECK(full.values()[5] == 6.5);
  const Tensor cut = frames_to_tensor(seq, 2);
  CHECK(cut.rows() == 2);
  CHECK(cut.values() == std::vector<double>{1.5, 2.5, 3.5, 4.5});
  CHECK_THROWS_AS(frames_to_tensor(seq, 4), ContractError);
}

TEST_CASE("checkpoint round trip is bit-exact") {
  const auto dir = std::filesystem::temp_directory_path() / "gaslt_ckpt";
  std::filesystem::create_directories(dir);
  const ModelConfig cfg = tiny_config();
  Translator m(cfg, 55);

  // move the running statistics off their defaults first
  const Tensor frames = randn(6, cfg.input_dim, 5);
  (void)m.encode(frames, true);
  m.save_checkpoint(dir / "model.ckpt");

  Translator back = Translator::load_checkpoint(dir / "model.ckpt");
  CHECK(back.config().d_model == cfg.d_model);
  CHECK(back.config().variant == cfg.variant);

  const auto pa = m.named_parameters();
  const auto pb = back.named_parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i)
    CHECK(pa[i].second.values() == pb[i].second.values());
  for (std::size_t i = 0; i < m.named_buffers().size(); ++i)
    CHECK(*m.named_buffers()[i].second == *back.named_buffers()[i].second);

  const EncoderOutput ea = m.encode(frames, false);
  const EncoderOutput eb = back.encode(frames, false);
  CHECK(ea.hidden.values() == eb.hidden.values());
  CHECK(m.greedy_decode(ea, 8) == back.greedy_decode(eb, 8));

  // corrupt files are rejected with distinct errors
  {
    std::ofstream f(dir / "junk.ckpt", std::ios::binary);
    f << "JUNKdata";
  }
  CHECK_THROWS_WITH_AS(Translator::load_checkpoint(dir / "junk.ckpt"),
                       doctest::Contains("bad magic"), IoError);

  std::ifstream in(dir / "model.ckpt", std::ios::binary);
  std::string raw((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
  {
    std::ofstream f(dir / "short.ckpt", std::ios::binary);
    f.write(raw.data(), static_cast<std::streamsize>(raw.size() / 2));
  }
  CHECK_THROWS_WITH_AS(Translator::load_checkpoint(dir / "short.ckpt"),
                       doctest::Contains("truncated"), IoError);
  {
    std::string versioned = raw;
    versioned[4] = 3;
    std::ofstream f(dir / "vers.ckpt", std::ios::binary);
    f.write(versioned.data(), static_cast<std::streamsize>(versioned.size()));
  }
  CHECK_THROWS_WITH_AS(Translator::load_checkpoint(dir / "vers.ckpt"),
                       doctest::Contains("version 3"), IoError);
  CHECK_THROWS_AS(Translator::load_checkpoint(dir / "absent.ckpt"), IoError);

  std::filesystem::remove_all(dir);
}

TEST_CASE("end-to-end gradients match finite differences") {
  ModelConfig cfg = tiny_config();  // T=6, M=3, d=16, 1+1 layers
  bool checked = false;
  for (std::uint64_t seed = 1; seed <= 12 && !checked; ++seed) {
    Translator m(cfg, seed);
    auto params = m.named_parameters();

    // fractional sampling positions: randomize the offset maps, then skip
    // seeds that leave any position near the interpolation kinks
    std::mt19937_64 rng(seed * 77 + 1);
    std::normal_distribution<double> n01(0.0, 1.0);
    for (auto& [name, t] : params) {
      if (name.find("w_offset") != std::string::npos) {
        for (double& v : t.mutable_values()) v = 0.9 * n01(rng);
      }
    }

    const Tensor frames_a = randn(6, cfg.input_dim, seed * 3 + 1);
    const Tensor frames_b = randn(5, cfg.input_dim, seed * 3 + 2);
    {
      NoGradGuard no_grad;
      const double gap =
          std::min(min_kink_distance(m.encode(frames_a, false).maps),
                   min_kink_distance(m.encode(frames_b, false).maps));
      if (gap < 1e-3) continue;
    }

    const std::vector<int> inputs = {Vocabulary::kBos, 4, 5};
    const std::vector<int> targets = {4, 5, Vocabulary::kEos};
    auto forward = [&]() {
      const EncoderOutput enc_a = m.encode(frames_a, false);
      const EncoderOutput enc_b = m.encode(frames_b, false);
      const Tensor ce = objectives::label_smoothed_ce(
          m.decode_logits(enc_a, inputs, false), targets, 0.1);
      const Tensor kt =
          objectives::kt_loss(enc_a.sentence, enc_b.sentence, 0.7);
      return ops::add(ce, kt);
    };

    const Tensor loss = forward();
    loss.backward();

    double worst = 0.0;
    std::string worst_name;
    for (auto& [name, t] : params) {
      // parameters the loss never touches (the CLS frame under mean
      // aggregation) legitimately carry a zero gradient
      const std::vector<double> analytic =
          t.has_grad() ? t.grad() : std::vector<double>(t.size(), 0.0);
      std::vector<double>& live = t.mutable_values();
      const std::vector<double> saved = live;
      auto probe = [&](std::span<const double> point) {
        std::copy(point.begin(), point.end(), live.begin());
        NoGradGuard no_grad;
        return forward().item();
      };
      const std::vector<double> numeric =
          gradcheck::finite_diff_grad(probe, saved, 1e-5);
      live = saved;
      const double err = gradcheck::max_rel_error(analytic, numeric);
      if (err > worst) {
        worst = err;
        worst_name = name;
      }
    }
    CHECK_MESSAGE(worst < 1e-4, "worst parameter: " << worst_name);
    checked = true;
  }
  CHECK_MESSAGE(checked, "no kink-free seed found");
}
