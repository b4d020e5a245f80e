#pragma once

// JSON views of models, configurations and evaluation reports.

#include <json.hpp>

#include "djqe/core.hpp"
#include "djqe/regressor.hpp"
#include "djqe/value_estimator.hpp"

namespace djqe {

using json = nlohmann::ordered_json;

inline json to_json(const FittedModel& model) {
    json j;
    j["kind"] = model.kind() == ModelKind::mlp ? "mlp" : "constant_mean";
    j["output_clamp"] = model.output_clamp();
    j["input_dim"] = model.input_dim();
    if (model.kind() == ModelKind::constant_mean) {
        j["value"] = model.constant_value();
        return j;
    }
    j["layers"] = json::array();
    for (std::size_t k = 0; k < model.layers().size(); ++k) {
        const auto& l = model.layers()[k];
        j["layers"].push_back({{"in", l.in},
                               {"out", l.out},
                               {"activation", k + 1 < model.layers().size() ? "tanh" : "linear"},
                               {"weights", l.weights},
                               {"bias", l.bias}});
    }
    return j;
}

inline json to_json(const MlpSpec& s) {
    json j{{"hidden_layers", s.hidden_layers},
           {"hidden_width", s.hidden_width},
           {"epochs", s.epochs},
           {"learning_rate", s.learning_rate},
           {"batch_size", s.batch_size},
           {"optimizer", to_string(s.optimizer)},
           {"weight_decay", s.weight_decay}};
    j["output_clamp"] = s.output_clamp ? json(*s.output_clamp) : json(nullptr);
    return j;
}

inline json to_json(const EvalConfig& c) {
    json j;
    j["m"] = c.m ? json(*c.m) : json(nullptr);
    j["gamma_grid"] = c.gamma_grid;
    j["folds"] = c.folds;
    j["cv_folds"] = c.cv_folds;
    j["mlp"] = to_json(c.mlp);
    j["seed"] = c.seed;
    j["clip_eps"] = c.clip_eps;
    j["estimator_variant"] = to_string(c.variant);
    j["partitioner"] = to_string(c.partitioner);
    j["threads"] = c.threads;
    return j;
}

inline json to_json(const EvalReport& r) {
    json j;
    j["value"] = r.value;
    j["n"] = r.n;
    j["m"] = r.m;
    j["policy"] = r.policy;
    j["estimator_variant"] = to_string(r.variant);
    j["partitioner"] = to_string(r.partitioner);
    j["gamma"] = r.gamma;
    j["gamma_grid"] = r.gamma_grid;
    j["gamma_cv_losses"] = r.gamma_cv_losses;
    j["folds"] = json::array();
    for (const auto& f : r.folds) {
        j["folds"].push_back({{"fold", f.fold_id},
                              {"changepoints", f.changepoints},
                              {"changepoint_locations", f.changepoint_locations},
                              {"objective", f.objective},
                              {"partial_sum", f.partial_sum},
                              {"train_size", f.train_size},
                              {"test_size", f.test_size},
                              {"interval_counts", f.interval_counts},
                              {"candidate_evaluations", f.evaluations},
                              {"interval_fits", f.fits}});
    }
    j["diagnostics"] = {{"propensity_evaluations", r.propensity_evals}, {"propensity_clip_rate", r.clip_rate}};
    return j;
}

}  // namespace djqe
