#pragma once

// Delimited-text readers and writers for the on-disk formats:
//
//   expression:  sample_id,<gene_id>,...          one row per sample
//   metadata:    sample_id,tissue,dataset_tag
//   responses:   sample_id,perturbation_id,value,study_tag
//   predictions: sample_id,perturbation_id,prediction
//
// Writers emit LF line endings and 17 significant digits so that a
// write -> load -> write cycle is byte-identical.

#include <filesystem>
#include <optional>
#include <string>

#include "leap/dataset.hpp"

namespace leap::io {

std::string format_real(double v);
double parse_real(std::string_view cell, std::size_t line, std::size_t column);

ExpressionMatrix load_expression(const std::filesystem::path& path,
                                 const std::optional<std::filesystem::path>& metadata = std::nullopt);
void write_expression(const std::filesystem::path& path, const ExpressionMatrix& m);
void write_metadata(const std::filesystem::path& path, const ExpressionMatrix& m);

ResponseTable load_responses(const std::filesystem::path& path);
void write_responses(const std::filesystem::path& path, const ResponseTable& table);

PredictionTable load_predictions(const std::filesystem::path& path);
void write_predictions(const std::filesystem::path& path, const PredictionTable& table);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace leap::io
