#include "vibe/explain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace vibe {

ExtremeSets select_extremes(const VibeModel& model, const BodyRecord& body,
                            const Catalog& catalog, int m, std::vector<std::string>* warnings) {
  if (catalog.garments.empty()) throw data_error("select_extremes: empty garment pool");
  const std::size_t n = catalog.garments.size();
  ExtremeSets out;
  out.effective_m = m;
  if (2 * static_cast<std::size_t>(m) > n) {
    out.effective_m = static_cast<int>(n / 2);
    out.clamped = true;
    if (warnings)
      warnings->push_back("m = " + std::to_string(m) + " exceeds half the pool of " +
                          std::to_string(n) + " garments; clamped to " +
                          std::to_string(out.effective_m));
  }
  const std::vector<double> zb = embed_body(model, body);
  std::vector<std::pair<double, int>> order(n);
  for (std::size_t g = 0; g < n; ++g)
    order[g] = {euclidean_distance(zb, embed_garment(model, catalog.garments[g])),
                static_cast<int>(g)};
  std::sort(order.begin(), order.end(), [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    return catalog.garments[a.second].garment_id < catalog.garments[b.second].garment_id;
  });
  for (int i = 0; i < out.effective_m; ++i) out.suitable.push_back(order[i].second);
  for (std::size_t i = n - out.effective_m; i < n; ++i) out.unsuitable.push_back(order[i].second);
  return out;
}

ProbeResult fit_attribute_probe(const Catalog& catalog, std::span<const int> suitable,
                                std::span<const int> unsuitable, double ridge, int max_iter,
                                double tol) {
  if (suitable.empty() || unsuitable.empty())
    throw data_error("fit_attribute_probe: both classes must be nonempty");
  const std::size_t a_dim = catalog.attr_dim();
  const std::size_t n = suitable.size() + unsuitable.size();

  std::vector<const std::vector<double>*> rows;
  std::vector<double> labels;
  rows.reserve(n);
  for (const int g : suitable) {
    rows.push_back(&catalog.garments[g].attributes);
    labels.push_back(1.0);
  }
  for (const int g : unsuitable) {
    rows.push_back(&catalog.garments[g].attributes);
    labels.push_back(0.0);
  }

  // Step size from a Lipschitz bound: lambda_max(G)/(4n) + ridge with G the Gram
  // matrix of [1, x], lambda_max bounded by the max row sum (all entries >= 0).
  std::vector<double> row_weighted(a_dim, 0.0), col_count(a_dim, 0.0);
  for (const auto* r : rows) {
    double rowtotal = 0.0;
    for (std::size_t j = 0; j < a_dim; ++j) rowtotal += (*r)[j];
    for (std::size_t j = 0; j < a_dim; ++j)
      if ((*r)[j] != 0.0) {
        row_weighted[j] += rowtotal;
        col_count[j] += 1.0;
      }
  }
  double lmax = 1.0 + std::accumulate(col_count.begin(), col_count.end(), 0.0) /
                          static_cast<double>(n);
  for (std::size_t i = 0; i < a_dim; ++i)
    lmax = std::max(lmax, (col_count[i] + row_weighted[i]) / static_cast<double>(n));
  const double step = 1.0 / (lmax / 4.0 + ridge);

  ProbeResult res;
  res.weights.assign(a_dim, 0.0);
  std::vector<double> grad(a_dim, 0.0);
  double grad_b = 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (res.iterations = 0; res.iterations < max_iter; ++res.iterations) {
    std::fill(grad.begin(), grad.end(), 0.0);
    grad_b = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      const auto& x = *rows[r];
      double logit = res.intercept;
      for (std::size_t j = 0; j < a_dim; ++j) logit += res.weights[j] * x[j];
      const double p = logit >= 0.0 ? 1.0 / (1.0 + std::exp(-logit))
                                    : std::exp(logit) / (1.0 + std::exp(logit));
      const double d = (p - labels[r]) * inv_n;
      grad_b += d;
      for (std::size_t j = 0; j < a_dim; ++j)
        if (x[j] != 0.0) grad[j] += d;
    }
    double gnorm = grad_b * grad_b;
    for (std::size_t j = 0; j < a_dim; ++j) {
      grad[j] += ridge * res.weights[j];
      gnorm += grad[j] * grad[j];
    }
    if (std::sqrt(gnorm) < tol) break;
    res.intercept -= step * grad_b;
    for (std::size_t j = 0; j < a_dim; ++j) res.weights[j] -= step * grad[j];
  }

  std::size_t correct = 0;
  for (std::size_t r = 0; r < n; ++r) {
    const auto& x = *rows[r];
    double logit = res.intercept;
    for (std::size_t j = 0; j < a_dim; ++j) logit += res.weights[j] * x[j];
    const bool predicted = logit > 0.0;
    if (predicted == (labels[r] == 1.0)) ++correct;
  }
  res.train_accuracy = static_cast<double>(correct) / static_cast<double>(n);
  return res;
}

AttributeReport explain_report(const VibeModel& model, const BodyRecord& body,
                               const Catalog& catalog, int m, int top_k,
                               std::vector<std::string>* warnings) {
  if (top_k < 0) throw std::invalid_argument("explain_report: top_k must be >= 0");
  const ExtremeSets ext = select_extremes(model, body, catalog, m, warnings);
  const ProbeResult probe = fit_attribute_probe(catalog, ext.suitable, ext.unsuitable);

  AttributeReport rep;
  rep.body_id = body.body_id;
  rep.probe_accuracy = probe.train_accuracy;

  std::vector<int> idx(probe.weights.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](int a, int b) { return probe.weights[a] > probe.weights[b]; });
  std::vector<std::uint8_t> taken(probe.weights.size(), 0);
  for (int i = 0; i < top_k && i < static_cast<int>(idx.size()); ++i) {
    rep.suitable.emplace_back(catalog.attribute_vocabulary[idx[i]], probe.weights[idx[i]]);
    taken[idx[i]] = 1;
  }
  for (auto it = idx.rbegin(); it != idx.rend(); ++it) {
    if (static_cast<int>(rep.unsuitable.size()) >= top_k) break;
    if (taken[*it]) continue;  // keep the lists disjoint when 2k exceeds A
    rep.unsuitable.emplace_back(catalog.attribute_vocabulary[*it], probe.weights[*it]);
  }
  return rep;
}

std::string format_report_text(const AttributeReport& r) {
  std::ostringstream os;
  os << "body " << r.body_id << " (probe accuracy " << r.probe_accuracy << ")\n";
  os << "  most suitable attributes:\n";
  for (const auto& [name, w] : r.suitable) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "    %-24s %+.4f\n", name.c_str(), w);
    os << buf;
  }
  os << "  least suitable attributes:\n";
  for (const auto& [name, w] : r.unsuitable) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "    %-24s %+.4f\n", name.c_str(), w);
    os << buf;
  }
  return os.str();
}

std::string format_report_keyvalue(const AttributeReport& r) {
  std::string out;
  out += "body = " + r.body_id + "\n";
  out += "probe_accuracy = " + fmt_double(r.probe_accuracy) + "\n";
  for (std::size_t i = 0; i < r.suitable.size(); ++i)
    out += "suitable." + std::to_string(i) + " = " + r.suitable[i].first + " " +
           fmt_double(r.suitable[i].second) + "\n";
  for (std::size_t i = 0; i < r.unsuitable.size(); ++i)
    out += "unsuitable." + std::to_string(i) + " = " + r.unsuitable[i].first + " " +
           fmt_double(r.unsuitable[i].second) + "\n";
  return out;
}

}  // namespace vibe
