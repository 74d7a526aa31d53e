#include "kpnet/pipeline.hpp"

#include "kpnet/cloud_ops.hpp"
#include "kpnet/error.hpp"
#include "kpnet/image_io.hpp"
#include "kpnet/io.hpp"
#include "kpnet/rng.hpp"
#include "kpnet/transfer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>

namespace kpnet {

namespace fs = std::filesystem;

std::vector<std::size_t> Dataset::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i)
    if (manifest.entries[i].split == split) out.push_back(i);
  return out;
}

Dataset load_dataset(const fs::path& dir) {
  Dataset d;
  d.manifest = load_manifest(dir / "manifest.json");
  bool any_truth = false, all_truth = true;
  std::vector<AggregatedKeypointSet> truth;
  for (const auto& e : d.manifest.entries) {
    auto cloud = load_cloud(dir / e.path);
    if (cloud.id != e.id) throw Error(ErrorCode::SchemaError, "cloud file " + e.path + " holds model '" + cloud.id + "'");
    d.clouds.push_back(std::move(cloud));
    const fs::path ann = dir / "annotations" / (e.id + ".json");
    if (fs::exists(ann)) {
      d.annotations.push_back(load_annotations(ann));
    } else {
      d.annotations.push_back(RawAnnotationSet{e.id, {}});
    }
    const fs::path gt = dir / "gt" / (e.id + ".json");
    if (fs::exists(gt)) {
      truth.push_back(load_aggregated(gt));
      any_truth = true;
    } else {
      all_truth = false;
    }
  }
  if (any_truth && all_truth) d.truth = std::move(truth);
  return d;
}

nlohmann::json clusters_to_json(const ClusterResult& c, std::span<const ModelCloud> clouds) {
  nlohmann::json cands = nlohmann::json::array();
  for (std::size_t i = 0; i < c.candidates.size(); ++i) {
    const auto& cand = c.candidates[i];
    cands.push_back({{"model", clouds[cand.model].id},
                     {"point_index", cand.point},
                     {"fidelity", cand.fidelity},
                     {"xy", {c.coords(static_cast<Eigen::Index>(i), 0), c.coords(static_cast<Eigen::Index>(i), 1)}},
                     {"label", c.labels[i]}});
  }
  return {{"eps", c.eps},     {"min_samples", c.min_samples}, {"perplexity", c.perplexity},
          {"seed", c.seed},   {"clusters", c.cluster_count()}, {"candidates", cands}};
}

ClusterResult clusters_from_json(const nlohmann::json& j, std::span<const ModelCloud> clouds) {
  std::map<std::string, int> model_index;
  for (std::size_t m = 0; m < clouds.size(); ++m) model_index[clouds[m].id] = static_cast<int>(m);
  ClusterResult c;
  try {
    c.eps = j.at("eps").get<double>();
    c.min_samples = j.at("min_samples").get<int>();
    c.perplexity = j.at("perplexity").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    const auto& cands = j.at("candidates");
    c.coords.resize(static_cast<Eigen::Index>(cands.size()), 2);
    for (std::size_t i = 0; i < cands.size(); ++i) {
      const auto& e = cands[i];
      const auto it = model_index.find(e.at("model").get<std::string>());
      if (it == model_index.end()) throw Error(ErrorCode::SchemaError, "cluster candidate names an unknown model");
      c.candidates.push_back({it->second, e.at("point_index").get<int>(), e.at("fidelity").get<double>()});
      c.coords(static_cast<Eigen::Index>(i), 0) = e.at("xy").at(0).get<double>();
      c.coords(static_cast<Eigen::Index>(i), 1) = e.at("xy").at(1).get<double>();
      c.labels.push_back(e.at("label").get<int>());
    }
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::SchemaError, std::string("malformed clusters file: ") + ex.what());
  }
  return c;
}

void run_synth(const PipelineConfig& cfg, const fs::path& out) {
  cfg.validate();
  const auto& s = cfg.synth;
  const auto pool = make_annotator_pool(s.annotators, s.sigma, s.miss_rate, s.spurious_rate,
                                        stage_seed(cfg.seed, "synth/annotators"));
  std::vector<std::string> ids, cats;
  std::vector<SyntheticShape> shapes;
  for (int i = 0; i < s.models; ++i) {
    char id[64];
    std::snprintf(id, sizeof id, "%s_%03d", to_string(s.kind).c_str(), i);
    SyntheticShapeSpec spec{s.kind, stage_seed(stage_seed(cfg.seed, "synth/shape"), static_cast<std::uint64_t>(i)), id};
    shapes.push_back(generate_shape(spec));
    ids.push_back(id);
    cats.push_back(to_string(s.kind));
  }
  const auto splits = make_stratified_splits(ids, cats, {}, stage_seed(cfg.seed, "synth/splits"));

  DatasetManifest manifest;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const auto& shape = shapes[i];
    manifest.entries.push_back({ids[i], cats[i], splits[i], "clouds/" + ids[i] + ".json"});
    save_cloud(out / "clouds" / (ids[i] + ".json"), shape.cloud);
    save_aggregated(out / "gt" / (ids[i] + ".json"), shape.gt);
    const auto ann = simulate_annotations(shape, pool, stage_seed(stage_seed(cfg.seed, "synth/clicks"), i));
    save_annotations(out / "annotations" / (ids[i] + ".json"), ann);
  }
  save_manifest(out / "manifest.json", manifest);
  write_json(out / "config.json", cfg.to_json());
}

AggregateResult run_aggregate(const PipelineConfig& cfg, const fs::path& data, const fs::path& out) {
  cfg.validate();
  const auto ds = load_dataset(data);
  AggregateConfig ac = cfg.aggregate;
  ac.seed = stage_seed(cfg.seed, "aggregate");
  auto result = aggregate_run(ds.clouds, ds.annotations, ac);

  for (const auto& set : result.sets) save_aggregated(out / "aggregated" / (set.model_id + ".json"), set);
  if (cfg.aggregate.iterations > 0) {
    write_json(out / "clusters.json", clusters_to_json(result.clusters, ds.clouds));
    if (result.net) save_checkpoint(out / "gtheta.json", *result.net, {{"stage", "aggregate"}});
  }
  nlohmann::json diag = result.diagnostics.to_json(false);
  if (ds.truth) {
    const auto score = score_against_truth(result.sets, *ds.truth, ds.clouds);
    diag["truth"] = {{"precision", score.precision},
                     {"recall", score.recall},
                     {"consistency", score.consistency},
                     {"matched", score.matched}};
  }
  write_json(out / "diagnostics.json", diag);
  write_json(out / "timings.json", result.diagnostics.timings);
  write_json(out / "config.json", cfg.to_json());
  return result;
}

EmbedSummary run_train_embed(const PipelineConfig& cfg, const fs::path& data, const fs::path& aggregated,
                             const fs::path& out) {
  cfg.validate();
  const auto ds = load_dataset(data);
  auto train = ds.indices(Split::Train);
  if (train.size() < 2) {
    train.clear();
    for (std::size_t i = 0; i < ds.clouds.size(); ++i) train.push_back(i);
  }
  std::vector<PointMatrix> clouds;
  std::vector<AggregatedKeypointSet> sets;
  for (std::size_t i : train) {
    clouds.push_back(ds.clouds[i].points);
    sets.push_back(load_aggregated(aggregated / "aggregated" / (ds.clouds[i].id + ".json")));
  }
  TrainConfig tc = cfg.embed;
  tc.seed = stage_seed(cfg.seed, "embed");
  auto result = train_contrastive(clouds, sets, tc);

  EmbedSummary summary;
  summary.triplets = triplet_separation(result.net, clouds, sets);
  summary.loss_history = result.loss_history;
  summary.models = static_cast<int>(train.size());
  save_checkpoint(out / "embedding.json", result.net, {{"stage", "train-embed"}, {"models", summary.models}});
  write_json(out / "train_log.json", {{"loss_history", summary.loss_history},
                                      {"triplets", summary.triplets.triplets},
                                      {"triplets_satisfied", summary.triplets.satisfied},
                                      {"triplet_fraction", summary.triplets.fraction()}});
  write_json(out / "config.json", cfg.to_json());
  return summary;
}

namespace {

nlohmann::json viewpoint_json(const Viewpoint& v) {
  return {{"azimuth_deg", degrees(v.azimuth)}, {"elevation_deg", degrees(v.elevation)}, {"distance", v.distance}};
}

std::vector<Eigen::Vector2d> projected_orbit(const AggregatedKeypointSet& gt, const ModelCloud& cloud, int semantic,
                                             const Viewpoint& v, const CameraRig& rig) {
  std::map<int, int> point_of;
  for (const auto& k : gt.keypoints) point_of[k.semantic_index] = k.point_index;
  std::vector<Eigen::Vector2d> out;
  for (const auto& g : gt.symmetries) {
    if (std::find(g.members.begin(), g.members.end(), semantic) == g.members.end()) continue;
    if (g.kind == SymmetryKind::InfiniteRotation) {
      for (const auto& p : rotation_orbit_samples(cloud.point(point_of.at(semantic)), g.origin, g.direction))
        out.push_back(project_point(p, v, rig));
      continue;
    }
    for (int m : g.members)
      if (m != semantic && point_of.count(m)) out.push_back(project_point(cloud.point(point_of.at(m)), v, rig));
  }
  return out;
}

}  // namespace

void run_project(const PipelineConfig& cfg, const fs::path& data, const fs::path& embedding, const fs::path& out) {
  cfg.validate();
  const auto ds = load_dataset(data);
  if (!ds.truth) throw Error(ErrorCode::MissingFile, "project needs ground-truth keypoints under gt/");
  const auto& truth = *ds.truth;
  const auto net = load_checkpoint(embedding / "embedding.json");

  auto eval = ds.indices(Split::Test);
  auto protos = ds.indices(Split::Train);
  if (eval.empty())
    for (std::size_t i = 0; i < ds.clouds.size(); ++i) eval.push_back(i);
  if (protos.empty())
    for (std::size_t i = 0; i < ds.clouds.size(); ++i) protos.push_back(i);

  // prototype embedding per ground-truth index: mean over prototype models
  std::map<int, Eigen::RowVectorXd> prototype;
  std::map<int, int> proto_count;
  for (std::size_t i : protos) {
    const Eigen::MatrixXd field = net.forward(ds.clouds[i]);
    for (const auto& k : truth[i].keypoints) {
      auto it = prototype.find(k.semantic_index);
      if (it == prototype.end()) prototype[k.semantic_index] = field.row(k.point_index);
      else it->second += field.row(k.point_index);
      ++proto_count[k.semantic_index];
    }
  }
  for (auto& [s, p] : prototype) p /= proto_count[s];

  const auto rig = CameraRig::standard(cfg.project.resolution);
  FinetuneOptions ft = cfg.project.finetune;
  ft.radius = cfg.project.radius;
  Rng rng(stage_seed(cfg.seed, "project"));
  std::uniform_real_distribution<double> az(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> el(radians(cfg.project.min_elevation_deg),
                                            radians(cfg.project.max_elevation_deg));

  std::vector<ImagePredictions> images;
  nlohmann::json views = nlohmann::json::array();
  for (std::size_t i : eval) {
    const auto& cloud = ds.clouds[i];
    Viewpoint truth_vp;
    truth_vp.azimuth = az(rng);
    truth_vp.elevation = el(rng);
    truth_vp.distance = cfg.project.distance;

    const auto target = render_soft_silhouette(cloud.points, truth_vp, rig, cfg.project.radius);
    const BinRenderCache cache(cloud.points, rig, cfg.project.radius, cfg.project.distance);
    const auto coarse = coarse_bin_search(target, cache);
    const auto fine = finetune_viewpoint(target, cloud.points, rig, coarse.viewpoint, ft);

    const Eigen::MatrixXd field = net.forward(cloud);
    const auto image = transfer_embeddings_to_image(cloud.points, field, fine.viewpoint, rig, cfg.project.radius);
    const auto visible = visible_points(cloud.points, truth_vp, rig, cfg.project.radius);

    write_png_gray(out / "images" / (cloud.id + "_target.png"), target);
    write_f64_raw(out / "images" / (cloud.id + "_target.f64"),
                  std::span<const double>(target.values.data(), static_cast<std::size_t>(target.values.size())));
    write_png_rgb(out / "images" / (cloud.id + "_embedding.png"), rig.width, rig.height, embedding_preview(image));

    ImagePredictions pred;
    pred.image_id = cloud.id;
    pred.image_width = rig.width;
    pred.image_height = rig.height;
    int r0 = rig.height, r1 = -1, c0 = rig.width, c1 = -1;
    for (int r = 0; r < rig.height; ++r)
      for (int c = 0; c < rig.width; ++c)
        if (target.values(r, c) >= 0.5) {
          r0 = std::min(r0, r);
          r1 = std::max(r1, r);
          c0 = std::min(c0, c);
          c1 = std::max(c1, c);
        }
    pred.bbox_width = c1 >= c0 ? c1 - c0 + 1 : rig.width;
    pred.bbox_height = r1 >= r0 ? r1 - r0 + 1 : rig.height;

    for (const auto& k : truth[i].keypoints) {
      KeypointPrediction kp;
      kp.semantic_index = k.semantic_index;
      kp.truth = project_point(cloud.point(k.point_index), truth_vp, rig);
      kp.visible = visible[static_cast<std::size_t>(k.point_index)] != 0;
      kp.predicted = Eigen::Vector2d(rig.cx, rig.cy);
      const auto it = prototype.find(k.semantic_index);
      if (it != prototype.end()) {
        const int px = nearest_pixel(image, it->second);
        if (px >= 0) kp.predicted = Eigen::Vector2d(px % rig.width, px / rig.width);
      }
      kp.orbit = projected_orbit(truth[i], cloud, k.semantic_index, truth_vp, rig);
      pred.keypoints.push_back(std::move(kp));
    }
    images.push_back(std::move(pred));

    views.push_back({{"model", cloud.id},
                     {"truth", viewpoint_json(truth_vp)},
                     {"coarse_bin", {{"azimuth", coarse.bin.azimuth}, {"elevation", coarse.bin.elevation}}},
                     {"coarse", viewpoint_json(coarse.viewpoint)},
                     {"finetuned", viewpoint_json(fine.viewpoint)},
                     {"coarse_error_deg", degrees(angular_error(coarse.viewpoint, truth_vp))},
                     {"finetuned_error_deg", degrees(angular_error(fine.viewpoint, truth_vp))},
                     {"loss_initial", fine.initial_loss},
                     {"loss_final", fine.loss}});
  }
  write_json(out / "predictions.json", predictions_to_json(images));
  write_json(out / "viewpoints.json", views);
  write_json(out / "config.json", cfg.to_json());
}

PckReport run_evaluate(const PipelineConfig& cfg, const fs::path& predictions, const fs::path& out) {
  cfg.validate();
  const auto images = predictions_from_json(read_json(predictions));
  auto report = evaluate_pck(images, cfg.evaluate.alpha, cfg.evaluate.symmetric);
  write_text(out / "pck.csv", report.csv());
  auto summary = report.summary();
  summary["config"] = cfg.to_json();
  write_json(out / "pck_summary.json", summary);
  return report;
}

}  // namespace kpnet
