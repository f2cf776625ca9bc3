#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vibe/catalog.hpp"
#include "vibe/embedding.hpp"

namespace vibe {

// m nearest and m furthest garments to the embedded body, by Euclidean distance
// in the joint space; deterministic tie-break by garment id. If 2m exceeds the
// pool, m shrinks to floor(pool/2) with a warning.
struct ExtremeSets {
  std::vector<int> suitable, unsuitable;  // catalog garment indices
  int effective_m = 0;
  bool clamped = false;
};

ExtremeSets select_extremes(const VibeModel& model, const BodyRecord& body,
                            const Catalog& catalog, int m = 400,
                            std::vector<std::string>* warnings = nullptr);

// Logistic regression on raw binary attributes (suitable = 1), full-batch
// gradient descent with a small ridge penalty, run to gradient norm < tol.
struct ProbeResult {
  std::vector<double> weights;  // per attribute
  double intercept = 0.0;
  double train_accuracy = 0.0;
  int iterations = 0;
};

ProbeResult fit_attribute_probe(const Catalog& catalog, std::span<const int> suitable,
                                std::span<const int> unsuitable, double ridge = 1e-3,
                                int max_iter = 5000, double tol = 1e-6);

struct AttributeReport {
  std::string body_id;
  std::vector<std::pair<std::string, double>> suitable;    // top-k largest weights
  std::vector<std::pair<std::string, double>> unsuitable;  // top-k smallest weights
  double probe_accuracy = 0.0;
};

AttributeReport explain_report(const VibeModel& model, const BodyRecord& body,
                               const Catalog& catalog, int m = 400, int top_k = 10,
                               std::vector<std::string>* warnings = nullptr);

std::string format_report_text(const AttributeReport& r);
std::string format_report_keyvalue(const AttributeReport& r);

}  // namespace vibe
