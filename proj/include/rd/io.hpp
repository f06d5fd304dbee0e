#pragma once

#include <stdexcept>
#include <string>

#include "rd/dictionary_builder.hpp"
#include "rd/harness.hpp"
#include "rd/normalization.hpp"

namespace rd {

/// Malformed or truncated on-disk artifact; message names the offending field.
struct FileFormatError : std::runtime_error {
    explicit FileFormatError(const std::string& what) : std::runtime_error(what) {}
};

// Binary formats, little-endian throughout. Embeddings and dictionaries are
// f32 on disk; model files are f64. All writers go through a temp file and
// rename on success.

// "RDEM" v1: count u32, dim u32, payload count*dim f32 row-major.
void write_embedding_file(const std::string& path, const EmbeddingSet& e);
EmbeddingSet read_embedding_file(const std::string& path);

// "RDDC" v1: atoms u32, dim u32, normalized u8, payload atoms*dim f32.
void write_dictionary_file(const std::string& path, const Dictionary& d);
Dictionary read_dictionary_file(const std::string& path);

// "RDMD" v1: f, N, k, num_classes u32; lambda, epsilon f64; flags u8;
// sections f64 in order: encoder, W^G, W^E, gamma, beta, dictionary,
// head weights, head bias.
void write_model_file(const std::string& path, const Model& m);
Model read_model_file(const std::string& path);

}  // namespace rd
