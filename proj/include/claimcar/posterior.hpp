#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "claimcar/data.hpp"
#include "claimcar/parameters.hpp"
#include "claimcar/spatial.hpp"
#include "claimcar/spline.hpp"

namespace claimcar {

// Everything log_posterior needs, immutable after construction.  Records are
// grouped by identical (city, year, brand, category, exposure) keys — the
// only lossless aggregation — and sorted by city so each evaluation
// partition touches a contiguous city range.
struct ModelInputs {
    Dataset data;  // original per-record arrays (prediction, reporting)

    // Aggregated groups (weight = record count, sum_y = summed claims).
    std::vector<double> log_exposure;
    std::vector<double> sum_y;
    std::vector<double> weight;
    std::vector<std::int32_t> brand;
    std::vector<std::int32_t> category;
    std::vector<std::int32_t> city;
    std::vector<std::int32_t> year;

    SplineBasis basis;
    SplineDesign design;  // rows = groups
    AdjacencyGraph graph;
    BlockLayout layout;
    std::vector<double> z;          // J x M, row-major copy of city covariates
    double log_factorial_sum = 0.0;  // sum_i log(y_i!) over records
    std::vector<std::size_t> partition_bounds;  // deterministic reduction
    int threads = 1;

    std::size_t n_groups() const { return log_exposure.size(); }
    std::size_t n_records() const { return data.N(); }
    std::size_t n_partitions() const { return partition_bounds.size() - 1; }
};

// basis_override replaces the data-derived basis (e.g. prediction with a
// training basis, or degenerate synthetic exposures).
ModelInputs build_model_inputs(Dataset data, const SplineConfig& spline, AdjacencyGraph graph,
                               int threads = 1, const SplineBasis* basis_override = nullptr);

// Joint log-posterior with exact analytic gradient, evaluated in one pass
// over the groups.  The likelihood reduction runs over fixed partitions
// combined in partition order, so results do not depend on the thread count.
// A non-finite value is returned as -inf (callers treat it as a rejection).
class Posterior {
public:
    explicit Posterior(std::shared_ptr<const ModelInputs> inputs);
    // Non-owning: the caller keeps `inputs` alive for the Posterior's lifetime.
    explicit Posterior(const ModelInputs& inputs);

    int dim() const { return inputs_->layout.d; }
    const ModelInputs& inputs() const { return *inputs_; }

    double value_and_grad(std::span<const double> theta, std::span<double> grad);
    double value(std::span<const double> theta);

private:
    struct PartitionAcc {
        double value = 0.0;
        std::vector<double> dc, dv1, dv2, q, r_local;
        std::int32_t city_lo = 0;
    };

    void eval_partition(std::size_t p, std::span<const double> theta);

    std::shared_ptr<const ModelInputs> inputs_;
    std::vector<double> eta_, lambda_, resid_;  // group-length buffers
    std::vector<double> u_, r_;                 // city-length
    std::vector<double> s_, q_, suffix_;        // year-length
    std::vector<double> scratch_grad_;
    std::vector<PartitionAcc> parts_;
};

// lambda_i per record; throws if any rate overflows, naming the record.
std::vector<double> predict_rates(const ParameterBlock& p, const ModelInputs& inputs);

// Model portion of the fit manifest: layout, basis knots, graph hash,
// cardinalities, prior settings, d.
std::string model_manifest_json(const ModelInputs& inputs);

}  // namespace claimcar
