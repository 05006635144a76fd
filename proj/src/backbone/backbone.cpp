// SPDX-License-Identifier: Apache-2.0

#include "streamseg/backbone/backbone.hpp"

#include <stdexcept>

namespace streamseg::backbone {

namespace {

uint64_t mix(uint64_t a, uint64_t b) {
  uint64_t h = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  h ^= h >> 33;
  h *= 0xff51afd7ed558ccdULL;
  h ^= h >> 33;
  return h;
}

}  // namespace

const Eigen::VectorXd& InstanceCodebook::centroid(uint32_t instance_id) {
  auto it = centroids_.find(instance_id);
  if (it != centroids_.end()) return it->second;
  Eigen::VectorXd c = Eigen::VectorXd::Zero(embed_dim_);
  if (instance_id != 0) {
    std::mt19937_64 rng(mix(seed_, instance_id));
    std::normal_distribution<double> g(0.0, 1.0);
    for (uint32_t i = 0; i < embed_dim_; ++i) c[i] = g(rng);
    // Small norm keeps centroids inside the near-linear range of tanh, so
    // memory-blended embeddings still decode to the right id.
    c *= 0.5 / c.norm();
  }
  return centroids_.emplace(instance_id, std::move(c)).first->second;
}

uint32_t InstanceCodebook::decode(const Eigen::VectorXd& embedding) const {
  uint32_t best_id = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (const auto& [id, c] : centroids_) {
    if (id == 0) continue;
    const double d = (c - embedding).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best_id = id;
    }
  }
  if (best_id == 0) {
    throw std::runtime_error("InstanceCodebook: decode with no instance centroids");
  }
  return best_id;
}

void InstanceCodebook::merge(const InstanceCodebook& other) {
  for (const auto& [id, c] : other.centroids_) {
    centroids_.emplace(id, c);
  }
}

double LatencySampler::next() {
  switch (model_.kind) {
    case LatencyModel::Kind::fixed:
      return model_.mean_ms;
    case LatencyModel::Kind::gaussian: {
      std::normal_distribution<double> g(model_.mean_ms, model_.stddev_ms);
      return std::max(0.0, g(rng_));
    }
  }
  return 0.0;
}

OracleBackbone::OracleBackbone(FeatureDims dims, NoiseModel noise, LatencyModel latency,
                               sim::ClassTable classes, uint64_t seed)
    : dims_(dims),
      noise_(noise),
      classes_(std::move(classes)),
      seed_(seed),
      latency_(latency),
      codebook_(dims.embed_dim, seed) {
  for (const auto& c : classes_.classes) {
    if (c.id != 0) class_ids_.push_back(c.id);
  }
  if (class_ids_.empty()) {
    throw std::invalid_argument("OracleBackbone: class table has no usable classes");
  }
}

SegmentResult OracleBackbone::segment(const sim::FrameSample& frame) {
  SegmentResult out;
  out.latency_ms = latency_.next();
  out.features.resize(frame.size());

  // Per-frame noise stream: reruns of the same frame flip the same points.
  std::mt19937_64 rng(mix(seed_, frame.frame_index));
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  for (std::size_t i = 0; i < frame.size(); ++i) {
    uint32_t cls = frame.semantic_id[i];
    if (noise_.label_flip_prob > 0.0 && u01(rng) < noise_.label_flip_prob) {
      // Uniform among the other classes.
      uint32_t pick = class_ids_[static_cast<std::size_t>(u01(rng) * class_ids_.size()) %
                                 class_ids_.size()];
      if (pick == cls) {
        pick = class_ids_[(std::find(class_ids_.begin(), class_ids_.end(), pick) -
                           class_ids_.begin() + 1) %
                          class_ids_.size()];
      }
      cls = pick;
    }
    FeatureVec f = FeatureVec::Zero(dims_.total());
    if (cls < dims_.n_classes) f[cls] = noise_.logit_margin;
    const uint32_t inst = frame.instance_id[i];
    Eigen::VectorXd e = codebook_.centroid(inst);
    if (noise_.embed_sigma > 0.0) {
      for (uint32_t d = 0; d < dims_.embed_dim; ++d) {
        e[d] += noise_.embed_sigma * gauss(rng);
      }
    }
    f.tail(dims_.embed_dim) = e;
    out.features[i] = std::move(f);
  }
  return out;
}

HeadOutput prediction_head(const std::vector<FeatureVec>& features,
                           const FeatureDims& dims, const InstanceCodebook& codebook,
                           const sim::ClassTable& classes) {
  HeadOutput out;
  out.semantic_id.resize(features.size());
  out.instance_id.resize(features.size());
  for (std::size_t i = 0; i < features.size(); ++i) {
    Eigen::Index argmax = 0;
    features[i].head(dims.n_classes).maxCoeff(&argmax);
    const auto cls = static_cast<uint32_t>(argmax);
    out.semantic_id[i] = cls;
    if (classes.is_thing(cls)) {
      out.instance_id[i] = codebook.decode(features[i].tail(dims.embed_dim));
    } else {
      out.instance_id[i] = 0;
    }
  }
  return out;
}

}  // namespace streamseg::backbone
