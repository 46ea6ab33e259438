#include <cmath>
#include <atomic>
#include <functional>
#include <thread>
#include <span>
#include <vector>

#include <json.hpp>

#include "gograd/experiments.hpp"
#include "gograd/oracle.hpp"

namespace gograd {

namespace {

struct SuiteIntegrand {
  std::string name;
  std::function<double(double)> f;
  std::function<double(double)> df;
};

std::vector<SuiteIntegrand> suite_integrands() {
  const double c = 0.7;
  return {
      {"y", [](double y) { return y; }, [](double) { return 1.0; }},
      {"y^2", [](double y) { return y * y; }, [](double y) { return 2.0 * y; }},
      {"(y-c)^2", [c](double y) { return (y - c) * (y - c); },
       [c](double y) { return 2.0 * (y - c); }},
      {"exp(-y^2/10)", [](double y) { return std::exp(-y * y / 10.0); },
       [](double y) { return -0.2 * y * std::exp(-y * y / 10.0); }},
  };
}

struct GridEntry {
  Family family;
  std::vector<double> params;
};

std::vector<GridEntry> suite_grid() {
  return {
      {Family::kDelta, {1.3}},
      {Family::kBernoulli, {0.3}},
      {Family::kNormal, {0.5, 1.2}},
      {Family::kLogNormal, {0.2, 0.5}},
      {Family::kGamma, {2.0, 3.0}},
      {Family::kGamma, {0.5, 1.0}},
      {Family::kBeta, {2.0, 3.0}},
      {Family::kExponential, {1.5}},
      {Family::kWeibull, {1.0, 2.0}},
      {Family::kLaplace, {0.0, 1.0}},
      {Family::kPoisson, {2.0}},
      {Family::kGeometric, {0.4}},
      {Family::kNegativeBinomial, {10.0, 0.2}},
      {Family::kCategorical, {0.2, 0.3, 0.5}},
  };
}

bool estimator_applies(const std::string& tag, const Distribution& d) {
  if (tag == "go") return true;
  if (tag == "reinforce") return d.family() != Family::kDelta;
  if (tag == "rep") return d.reparameterizable();
  return false;
}

}  // namespace

std::vector<SuiteRow> run_unbiasedness_suite(const ExperimentConfig& config) {
  config.validate();
  if (config.experiment != "unbiasedness_suite") {
    throw ConfigError(
        "experiment: run_unbiasedness_suite expects unbiasedness_suite");
  }
  const long n = config.suite_samples;
  RngStream rng(config.seed);

  struct Task {
    Family family;
    std::vector<double> params;
    SuiteIntegrand spec;
    std::string tag;
    std::uint64_t stream_index;
  };
  std::vector<Task> tasks;
  std::uint64_t stream_index = 0;
  for (const auto& entry : suite_grid()) {
    const auto dist = Distribution::make(entry.family, entry.params);
    for (const auto& spec : suite_integrands()) {
      for (const std::string tag : {"go", "reinforce", "rep"}) {
        if (!estimator_applies(tag, dist)) continue;
        tasks.push_back({entry.family, dist.params(), spec, tag,
                         stream_index++});
      }
    }
  }

  std::vector<SuiteRow> rows(tasks.size());
  auto run_task = [&](size_t ti) {
    const auto& task = tasks[ti];
    const auto dist = Distribution::make(task.family, task.params);
    IntegrandSpec f = scalar_integrand(task.spec.f, task.spec.df);
    SuiteRow row;
    row.family = family_name(task.family);
    row.params = dist.params();
    row.integrand = task.spec.name;
    row.estimator = task.tag;
    row.oracle = oracle::expectation_gradient(task.family, dist.params(),
                                              task.spec.f, task.spec.df);

    RngStream sub = rng.substream(task.stream_index);
    const size_t np = static_cast<size_t>(dist.param_count());
    std::vector<double> mean(np, 0.0);
    std::vector<double> m2(np, 0.0);
    for (long i = 0; i < n; ++i) {
      GradientEstimate est;
      if (task.tag == "go") {
        est = go_gradient({dist}, f, 1, sub);
      } else if (task.tag == "reinforce") {
        est = reinforce_gradient({dist}, f, 1, sub);
      } else {
        est = rep_gradient({dist}, f, 1, sub);
      }
      for (size_t k = 0; k < np; ++k) {
        const double delta = est.per_param[k] - mean[k];
        mean[k] += delta / static_cast<double>(i + 1);
        m2[k] += delta * (est.per_param[k] - mean[k]);
      }
    }
    row.estimate = mean;
    row.se.resize(np);
    row.pass = true;
    for (size_t k = 0; k < np; ++k) {
      row.se[k] = std::sqrt(m2[k] / static_cast<double>(n - 1) /
                            static_cast<double>(n));
      if (std::fabs(row.estimate[k] - row.oracle[k]) > 5.0 * row.se[k] + 1e-9) {
        row.pass = false;
      }
    }
    rows[ti] = std::move(row);
  };

  // Each row owns its substream, so fanning rows across threads leaves the
  // report identical to a single-threaded run.
  if (config.threads <= 1) {
    for (size_t ti = 0; ti < tasks.size(); ++ti) run_task(ti);
  } else {
    std::vector<std::thread> pool;
    std::atomic<size_t> next{0};
    for (int t = 0; t < config.threads; ++t) {
      pool.emplace_back([&] {
        for (size_t ti = next.fetch_add(1); ti < tasks.size();
             ti = next.fetch_add(1)) {
          run_task(ti);
        }
      });
    }
    for (auto& th : pool) th.join();
  }
  return rows;
}

std::string suite_report_json(const std::vector<SuiteRow>& rows) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows) {
    arr.push_back({{"family", r.family},
                   {"params", r.params},
                   {"integrand", r.integrand},
                   {"estimator", r.estimator},
                   {"oracle", r.oracle},
                   {"estimate", r.estimate},
                   {"se", r.se},
                   {"pass", r.pass}});
  }
  return arr.dump(2);
}

}  // namespace gograd
