#pragma once

// Layered ensemble: R autoencoder representations, and per representation
// the K cross-validation fold regressors of every perturbation. A prediction
// is the unweighted mean of all R*K regressor outputs.

#include <map>
#include <set>
#include <string>
#include <vector>

#include "leap/damae.hpp"
#include "leap/dataset.hpp"
#include "leap/preprocess.hpp"
#include "leap/regress.hpp"
#include "leap/serialize.hpp"

namespace leap {

struct FitOptions {
  // Draw a different CV split for each representation slot. Used to build
  // many-regressors-on-one-representation ensembles by repeating one model.
  bool vary_folds_across_representations = false;
};

struct LeapEnsemble {
  PreprocessModel preprocess;
  std::vector<damae::DamaeModel> representations;
  // perturbation id -> one fit per representation
  std::map<std::string, std::vector<regress::PerturbationFit>> fits;
  regress::TuneConfig tune;
  FitOptions options;
  std::vector<std::string> warnings;

  std::vector<std::string> perturbations() const;
  std::size_t regressor_count(const std::string& perturbation) const;
};

/// Embeds `expr` with every representation and tunes one regressor set per
/// (representation, perturbation). Perturbations with fewer labeled samples
/// than folds are skipped with a warning.
LeapEnsemble fit_leap(const ExpressionMatrix& expr, const ResponseTable& responses, const PreprocessModel& preprocess,
                      std::vector<damae::DamaeModel> representations, const regress::TuneConfig& tune,
                      const FitOptions& options = {});

/// Mean over all representations and fold models.
PredictionTable predict(const LeapEnsemble& ens, const ExpressionMatrix& expr,
                        const std::vector<std::string>& perturbation_ids);

/// Mean restricted to the listed representation indices.
PredictionTable predict_partial(const LeapEnsemble& ens, const ExpressionMatrix& expr,
                                const std::vector<std::string>& perturbation_ids,
                                const std::vector<std::size_t>& representations);

/// Single model per perturbation refit on all training rows (needs tune.refit_full).
PredictionTable predict_refit(const LeapEnsemble& ens, const ExpressionMatrix& expr,
                              const std::vector<std::string>& perturbation_ids, std::size_t representation = 0);

/// PS-KNN baseline: per perturbation, mean response of the k nearest labeled
/// training samples in standardized gene space.
PredictionTable predict_knn_baseline(const ExpressionMatrix& train, const ResponseTable& responses,
                                     const ExpressionMatrix& test, const std::vector<std::string>& perturbation_ids,
                                     std::size_t k = 5);

/// Sections: config, preprocess, damae/<r>, fits. `config_json` is stored verbatim.
Bundle to_bundle(const LeapEnsemble& ens, const std::string& config_json);
LeapEnsemble from_bundle(const Bundle& bundle);

}  // namespace leap
