// Python bindings for the headline operations: the attention kernels, the
// evaluation metrics, corpus generation and the translator round trip.
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>
#include <utility>

#include "gaslt/attention.hpp"
#include "gaslt/bench.hpp"
#include "gaslt/data.hpp"
#include "gaslt/kv.hpp"
#include "gaslt/metrics.hpp"
#include "gaslt/model.hpp"
#include "gaslt/segments.hpp"
#include "gaslt/tensor.hpp"

namespace py = pybind11;
using namespace gaslt;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor tensor_2d(const Array& a, const char* name) {
  if (a.ndim() != 2) {
    throw ShapeError(std::string(name) + " must be a 2-d array");
  }
  const auto rows = static_cast<std::size_t>(a.shape(0));
  const auto cols = static_cast<std::size_t>(a.shape(1));
  std::vector<double> values(a.data(), a.data() + rows * cols);
  return Tensor({rows, cols}, std::move(values));
}

py::array_t<double> array_2d(const std::vector<double>& values,
                             std::size_t rows, std::size_t cols) {
  py::array_t<double> out({rows, cols});
  std::memcpy(out.mutable_data(), values.data(),
              values.size() * sizeof(double));
  return out;
}

py::array_t<double> array_2d(const Tensor& t) {
  return array_2d(t.values(), t.rows(), t.cols());
}

DenseMatrix matrix_2d(const Array& a, const char* name) {
  if (a.ndim() != 2) {
    throw ShapeError(std::string(name) + " must be a 2-d array");
  }
  DenseMatrix m(static_cast<std::size_t>(a.shape(0)),
                static_cast<std::size_t>(a.shape(1)));
  std::memcpy(m.data.data(), a.data(), m.data.size() * sizeof(double));
  return m;
}

py::dict map_to_dict(const attention::AttentionMap& map) {
  py::dict d;
  d["layer"] = map.layer;
  d["head"] = map.head;
  d["weights"] = array_2d(map.weights, map.query_len, map.key_len);
  if (map.gloss()) {
    d["positions"] = array_2d(map.positions, map.query_len, map.key_len);
  } else {
    d["positions"] = py::none();
  }
  return d;
}

data::SyntheticSpec spec_from_kwargs(std::size_t gloss_vocab,
                                     std::size_t feature_dim,
                                     std::size_t min_segment,
                                     std::size_t max_segment,
                                     std::size_t min_glosses,
                                     std::size_t max_glosses, double noise,
                                     bool reorder, std::size_t train_size,
                                     std::size_t dev_size,
                                     std::size_t test_size,
                                     std::uint64_t seed) {
  data::SyntheticSpec spec;
  spec.gloss_vocab = gloss_vocab;
  spec.feature_dim = feature_dim;
  spec.min_segment = min_segment;
  spec.max_segment = max_segment;
  spec.min_glosses = min_glosses;
  spec.max_glosses = max_glosses;
  spec.noise = noise;
  spec.reorder = reorder;
  spec.train_size = train_size;
  spec.dev_size = dev_size;
  spec.test_size = test_size;
  spec.seed = seed;
  return spec;
}

model::ModelConfig config_from_dict(const py::dict& d) {
  KeyValues kv;
  for (const auto& item : d) {
    kv.set(py::cast<std::string>(item.first),
           py::cast<std::string>(py::str(item.second)));
  }
  return model::config_from_kv(kv);
}

py::dict config_to_dict(const model::ModelConfig& c) {
  KeyValues kv;
  model::config_to_kv(c, kv);
  py::dict d;
  for (const auto& [key, value] : kv.entries()) d[py::str(key)] = value;
  return d;
}

}  // namespace

PYBIND11_MODULE(_gaslt, m) {
  m.doc() = "gloss-attention translation toolkit";

  // --- attention kernels ---------------------------------------------------
  m.def(
      "gloss_attention",
      [](const Array& x, const Array& w_q, const Array& w_k, const Array& w_v,
         const Array& w_offset) {
        NoGradGuard no_grad;
        attention::HeadParams p;
        p.w_q = tensor_2d(w_q, "w_q");
        p.w_k = tensor_2d(w_k, "w_k");
        p.w_v = tensor_2d(w_v, "w_v");
        p.w_offset = tensor_2d(w_offset, "w_offset");
        p.positions = static_cast<int>(p.w_offset.rows());
        const attention::AttentionResult res =
            attention::gloss_attention(tensor_2d(x, "x"), p);
        return py::make_tuple(array_2d(res.output), map_to_dict(res.map));
      },
      py::arg("x"), py::arg("w_q"), py::arg("w_k"), py::arg("w_v"),
      py::arg("w_offset"),
      "Gloss attention over (T x d_in) input; returns (output, map) where "
      "map holds the (T x N) weights and fractional sampling positions.");

  m.def(
      "self_attention",
      [](const Array& x, const Array& w_q, const Array& w_k,
         const Array& w_v) {
        NoGradGuard no_grad;
        attention::HeadParams p;
        p.w_q = tensor_2d(w_q, "w_q");
        p.w_k = tensor_2d(w_k, "w_k");
        p.w_v = tensor_2d(w_v, "w_v");
        const attention::AttentionResult res =
            attention::self_attention(tensor_2d(x, "x"), p);
        return py::make_tuple(array_2d(res.output), map_to_dict(res.map));
      },
      py::arg("x"), py::arg("w_q"), py::arg("w_k"), py::arg("w_v"),
      "Full scaled dot-product self-attention; returns (output, map).");

  // --- metrics ---------------------------------------------------------------
  m.def("bleu", &metrics::bleu, py::arg("hypotheses"), py::arg("references"),
        py::arg("n_max") = 4,
        "Corpus BLEU-1..n_max (uniform weights, brevity penalty).");
  m.def("rouge_l", &metrics::rouge_l, py::arg("hypothesis"),
        py::arg("reference"), py::arg("beta") = 1.2);
  m.def("rouge_l_corpus", &metrics::rouge_l_corpus, py::arg("hypotheses"),
        py::arg("references"), py::arg("beta") = 1.2);
  m.def(
      "asd",
      [](const Array& a, const Array& b) {
        return metrics::asd(matrix_2d(a, "a"), matrix_2d(b, "b"));
      },
      py::arg("a"), py::arg("b"),
      "Mean absolute off-diagonal gap between two similarity matrices.");
  m.def(
      "cad",
      [](const Array& weights, double delta) {
        return metrics::cad(matrix_2d(weights, "weights"), delta);
      },
      py::arg("weights"), py::arg("delta") = 0.1,
      "Banded diagonal mass of an attention-weight matrix.");
  m.def(
      "embedding_similarity",
      [](const Array& e) {
        const DenseMatrix s =
            metrics::embedding_similarity(matrix_2d(e, "embeddings"));
        return array_2d(s.data, s.rows, s.cols);
      },
      py::arg("embeddings"),
      "Pairwise cosine similarities of the embedding rows.");

  // --- data ------------------------------------------------------------------
  m.def(
      "generate_corpus",
      [](const std::filesystem::path& out_dir, std::size_t gloss_vocab,
         std::size_t feature_dim, std::size_t min_segment,
         std::size_t max_segment, std::size_t min_glosses,
         std::size_t max_glosses, double noise, bool reorder,
         std::size_t train_size, std::size_t dev_size, std::size_t test_size,
         std::uint64_t seed) {
        const data::SyntheticSpec spec = spec_from_kwargs(
            gloss_vocab, feature_dim, min_segment, max_segment, min_glosses,
            max_glosses, noise, reorder, train_size, dev_size, test_size,
            seed);
        return data::write_corpus(out_dir, spec,
                                  data::generate_corpus_with_segments(spec));
      },
      py::arg("out_dir"), py::arg("gloss_vocab") = 20,
      py::arg("feature_dim") = 64, py::arg("min_segment") = 8,
      py::arg("max_segment") = 20, py::arg("min_glosses") = 3,
      py::arg("max_glosses") = 8, py::arg("noise") = 0.1,
      py::arg("reorder") = true, py::arg("train_size") = 500,
      py::arg("dev_size") = 50, py::arg("test_size") = 50,
      py::arg("seed") = 42,
      "Writes a synthetic segmented-feature corpus; returns the sample "
      "count.");

  py::class_<data::Vocabulary>(m, "Vocabulary")
      .def_static("load", &data::Vocabulary::load, py::arg("path"))
      .def("__len__", &data::Vocabulary::size)
      .def("encode", &data::Vocabulary::encode, py::arg("words"),
           "BOS + token ids + EOS.")
      .def(
          "decode",
          [](const data::Vocabulary& v, const std::vector<int>& ids) {
            return v.decode(ids);
          },
          py::arg("ids"), "Drops control tokens, stops at EOS.");

  // --- benchmark ---------------------------------------------------------------
  m.def(
      "run_bench",
      [](const std::vector<std::size_t>& t_values, int window, std::size_t d,
         const std::vector<std::string>& variants, int repeats,
         std::uint64_t seed) {
        py::list rows;
        for (const bench::BenchRow& r :
             bench::run_bench(t_values, window, d, variants, repeats, seed)) {
          py::dict row;
          row["variant"] = r.variant;
          row["frames"] = r.frames;
          row["median_seconds"] = r.median_seconds;
          row["score_evals"] = r.score_evals;
          rows.append(std::move(row));
        }
        return rows;
      },
      py::arg("t_values"), py::arg("window") = 7, py::arg("dim") = 64,
      py::arg("variants") = std::vector<std::string>{"gloss", "self"},
      py::arg("repeats") = 3, py::arg("seed") = 42,
      "Times single attention heads; score_evals counts are exact.");

  // --- translator ----------------------------------------------------------
  py::class_<model::Translator>(m, "Translator")
      .def(py::init([](const py::dict& config, std::uint64_t seed) {
             return model::Translator(config_from_dict(config), seed);
           }),
           py::arg("config"), py::arg("seed") = 42,
           "Fresh model from a config dict (d_model, heads, ..., vocab_size, "
           "input_dim).")
      .def_static("load", &model::Translator::load_checkpoint,
                  py::arg("path"))
      .def("save", &model::Translator::save_checkpoint, py::arg("path"))
      .def_property_readonly(
          "config",
          [](const model::Translator& t) { return config_to_dict(t.config()); })
      .def(
          "translate_ids",
          [](model::Translator& t, const Array& frames, std::size_t beam,
             std::size_t max_len) {
            NoGradGuard no_grad;
            const model::EncoderOutput enc =
                t.encode(tensor_2d(frames, "frames"), false);
            return beam <= 1 ? t.greedy_decode(enc, max_len)
                             : t.beam_decode(enc, max_len, beam);
          },
          py::arg("frames"), py::arg("beam") = 1, py::arg("max_len") = 32,
          "Decodes (T x input_dim) frames to raw token ids.")
      .def(
          "translate",
          [](model::Translator& t, const Array& frames,
             const data::Vocabulary& vocab, std::size_t beam,
             std::size_t max_len) {
            NoGradGuard no_grad;
            const model::EncoderOutput enc =
                t.encode(tensor_2d(frames, "frames"), false);
            const std::vector<int> ids =
                beam <= 1 ? t.greedy_decode(enc, max_len)
                          : t.beam_decode(enc, max_len, beam);
            return vocab.decode(ids);
          },
          py::arg("frames"), py::arg("vocab"), py::arg("beam") = 1,
          py::arg("max_len") = 32,
          "Decodes (T x input_dim) frames to words.")
      .def(
          "attention_maps",
          [](model::Translator& t, const Array& frames) {
            NoGradGuard no_grad;
            const model::EncoderOutput enc =
                t.encode(tensor_2d(frames, "frames"), false);
            py::list maps;
            for (const attention::AttentionMap& map : enc.maps) {
              maps.append(map_to_dict(map));
            }
            return maps;
          },
          py::arg("frames"),
          "Encoder attention maps of one sample, layer-major.");
}
