// Acceptance run: one PASS/FAIL line per primary criterion.
//   acceptance [work_dir]
#include "kpnet/aggregate.hpp"
#include "kpnet/cloud_ops.hpp"
#include "kpnet/dbscan.hpp"
#include "kpnet/embed_net.hpp"
#include "kpnet/embed_train.hpp"
#include "kpnet/error.hpp"
#include "kpnet/geo_graph.hpp"
#include "kpnet/io.hpp"
#include "kpnet/pck.hpp"
#include "kpnet/pipeline.hpp"
#include "kpnet/rng.hpp"
#include "kpnet/silhouette.hpp"
#include "kpnet/synth.hpp"
#include "kpnet/viewpoint_search.hpp"
#include "oracles.hpp"

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

using namespace kpnet;
namespace fs = std::filesystem;

namespace {

fs::path g_work;
int g_failed = 0;

void report(const std::string& name, bool pass, const std::string& detail) {
  std::printf("%s  %-26s %s\n", pass ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failed;
}

template <class... A>
std::string fmt(const char* f, A... a) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, a...);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

PointMatrix sample_rows(const PointMatrix& p, int n, std::uint64_t seed) {
  std::vector<int> idx(p.rows());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  PointMatrix out(n, 3);
  for (int i = 0; i < n; ++i) out.row(i) = p.row(idx[i]);
  return out;
}

// --- aggregation recovery -------------------------------------------------

void aggregation_recovery() {
  double worst_recall = 1.0, worst_consistency = 1.0, slowest = 0.0;
  int k_lo = 1 << 30, k_hi = 0;
  bool ok = true;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    PipelineConfig cfg;
    cfg.seed = seed;
    cfg.synth.kind = ShapeKind::Table;
    cfg.synth.models = 20;
    cfg.synth.annotators = 10;
    cfg.synth.sigma = 0.03;
    cfg.synth.miss_rate = 0.05;
    cfg.synth.spurious_rate = 0.05;
    const auto dir = g_work / ("recovery_" + std::to_string(seed));
    run_synth(cfg, dir / "data");
    const auto t0 = std::chrono::steady_clock::now();
    try {
      run_aggregate(cfg, dir / "data", dir / "agg");
    } catch (const Error& e) {
      ok = false;
      per_seed += fmt(" [seed %d: %s]", static_cast<int>(seed), e.what());
      continue;
    }
    const double secs = seconds_since(t0);
    // re-score from the written artifacts
    const auto ds = load_dataset(dir / "data");
    std::vector<AggregatedKeypointSet> rec;
    for (const auto& c : ds.clouds) rec.push_back(load_aggregated(dir / "agg" / "aggregated" / (c.id + ".json")));
    const auto score = score_against_truth(rec, *ds.truth, ds.clouds, 0.05);
    std::set<int> k;
    for (const auto& s : rec)
      for (const auto& kp : s.keypoints) k.insert(kp.semantic_index);
    const int clusters = static_cast<int>(k.size());
    worst_recall = std::min(worst_recall, score.recall);
    worst_consistency = std::min(worst_consistency, score.consistency);
    slowest = std::max(slowest, secs);
    k_lo = std::min(k_lo, clusters);
    k_hi = std::max(k_hi, clusters);
    ok = ok && score.recall >= 0.9 && std::abs(clusters - 8) <= 1 && score.consistency >= 0.9 && secs <= 600.0;
    per_seed += fmt(" [seed %d: recall %.3f K %d cons %.3f %.0fs]", static_cast<int>(seed), score.recall, clusters,
                    score.consistency, secs);
  }
  report("aggregation-recovery", ok,
         fmt("min recall %.3f, K in [%d, %d], min consistency %.3f, slowest %.0fs;", worst_recall, k_lo, k_hi,
             worst_consistency, slowest) +
             per_seed);
}

// --- exact recovery -------------------------------------------------------

void exact_recovery() {
  PipelineConfig cfg;
  cfg.seed = 7;
  cfg.synth.models = 20;
  cfg.synth.annotators = 1;
  cfg.synth.sigma = 0.0;
  cfg.synth.miss_rate = 0.0;
  cfg.synth.spurious_rate = 0.0;
  const auto dir = g_work / "exact";
  run_synth(cfg, dir / "data");
  bool ok = true;
  std::string detail;
  try {
    run_aggregate(cfg, dir / "data", dir / "agg");
    const auto ds = load_dataset(dir / "data");
    // recovered cluster -> annotator's click position; must be one bijection for all models
    std::map<int, int> cluster_to_click;
    std::set<int> clusters;
    int mismatched = 0, wrong_k = 0, inconsistent = 0;
    for (std::size_t m = 0; m < ds.clouds.size(); ++m) {
      const auto rec = load_aggregated(dir / "agg" / "aggregated" / (ds.clouds[m].id + ".json"));
      const auto clicks = snap_annotations(ds.clouds[m], ds.annotations[m]).at(0);
      std::set<int> want(clicks.begin(), clicks.end()), got;
      for (const auto& k : rec.keypoints) {
        got.insert(k.point_index);
        clusters.insert(k.semantic_index);
        const auto at = std::find(clicks.begin(), clicks.end(), k.point_index);
        if (at == clicks.end()) continue;
        const int pos = static_cast<int>(at - clicks.begin());
        const auto [it, fresh] = cluster_to_click.emplace(k.semantic_index, pos);
        if (!fresh && it->second != pos) ++inconsistent;
      }
      mismatched += got != want;
      wrong_k += rec.keypoints.size() != clicks.size();
    }
    std::set<int> positions;
    for (const auto& [c, p] : cluster_to_click) positions.insert(p);
    const bool bijective = positions.size() == cluster_to_click.size();
    ok = mismatched == 0 && wrong_k == 0 && inconsistent == 0 && bijective &&
         static_cast<int>(clusters.size()) == landmark_count(ShapeKind::Table);
    detail = fmt("%d models, K %d (want %d), set mismatches %d, K_m mismatches %d, index conflicts %d%s",
                 static_cast<int>(ds.clouds.size()), static_cast<int>(clusters.size()),
                 landmark_count(ShapeKind::Table), mismatched, wrong_k, inconsistent, bijective ? "" : ", not bijective");
  } catch (const Error& e) {
    ok = false;
    detail = e.what();
  }
  report("exact-recovery", ok, detail);
}

// --- gradient fidelity ----------------------------------------------------

std::vector<PointMatrix> random_clouds(int count, int points, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<PointMatrix> out(count, PointMatrix(points, 3));
  for (auto& c : out)
    for (Eigen::Index i = 0; i < c.size(); ++i) c.data()[i] = u(rng);
  return out;
}

std::vector<LabeledPoint> random_samples(int clouds, int points, int labels, int count, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_int_distribution<int> c(0, clouds - 1), p(0, points - 1), l(0, labels - 1);
  std::vector<LabeledPoint> out;
  for (int i = 0; i < count; ++i) out.push_back({c(rng), p(rng), i < labels ? i : l(rng)});
  return out;
}

double vector_relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& n) {
  return (a - n).norm() / std::max({a.norm(), n.norm(), 1e-12});
}

// squared margin placed mid-way in the widest gap between hardest-negative distances
double margin_off_kink(const EmbeddingNet& net, std::span<const PointMatrix> clouds,
                       std::span<const LabeledPoint> samples) {
  std::vector<Eigen::MatrixXd> f;
  for (const auto& c : clouds) f.push_back(net.forward(c));
  std::vector<double> d;
  for (const auto& a : samples) {
    double best = oracle::kInf;
    for (const auto& b : samples)
      if (b.label != a.label) best = std::min(best, (f[a.cloud].row(a.point) - f[b.cloud].row(b.point)).squaredNorm());
    d.push_back(best);
  }
  std::sort(d.begin(), d.end());
  std::size_t gap = 0;
  for (std::size_t i = 1; i + 1 < d.size(); ++i)
    if (d[i + 1] - d[i] > d[gap + 1] - d[gap]) gap = i;
  return std::sqrt(0.5 * (d[gap] + d[gap + 1]));
}

void gradient_fidelity() {
  const NetShape shape{3, 6, 8, 5, 4};
  NetShape metric = shape;
  metric.classes = 0;
  double worst_cls = 0.0, worst_con = 0.0, worst_ren = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto clouds = random_clouds(3, 30, 1000 + seed);

    const auto cls_samples = random_samples(3, 30, shape.classes, 14, 2000 + seed);
    const auto net = EmbeddingNet::random(shape, 3000 + seed);
    Eigen::VectorXd g;
    classification_loss(net, clouds, cls_samples, &g);
    const auto num = oracle::central_difference(
        [&](const Eigen::VectorXd& x) { return classification_loss(EmbeddingNet(shape, x), clouds, cls_samples); },
        net.params(), 1e-6);
    worst_cls = std::max(worst_cls, vector_relative_error(g, num));

    const auto con_samples = random_samples(3, 30, 3, 15, 4000 + seed);
    const auto mnet = EmbeddingNet::random(metric, 5000 + seed);
    const double margin = margin_off_kink(mnet, clouds, con_samples);
    contrastive_loss(mnet, clouds, con_samples, margin, &g);
    const auto num2 = oracle::central_difference(
        [&](const Eigen::VectorXd& x) {
          return contrastive_loss(EmbeddingNet(metric, x), clouds, con_samples, margin).total();
        },
        mnet.params(), 1e-6);
    worst_con = std::max(worst_con, vector_relative_error(g, num2));

    const auto chair = generate_shape({ShapeKind::Chair, 6000 + seed, "c"});
    const auto pts = sample_rows(chair.cloud.points, 400, 7000 + seed);
    const auto rig = CameraRig::standard(64);
    Rng rng(8000 + seed);
    std::uniform_real_distribution<double> az(0.0, 2 * std::numbers::pi), el(-0.5, 0.8), off(-0.15, 0.15);
    const Viewpoint truth{az(rng), el(rng), kDefaultDistance};
    const auto target = render_soft_silhouette(pts, truth, rig);
    const Viewpoint v{truth.azimuth + off(rng), truth.elevation + off(rng), kDefaultDistance};
    const auto pl = silhouette_pose_loss(target, pts, v, rig);
    const auto num3 = oracle::central_difference(
        [&](const Eigen::VectorXd& x) {
          return silhouette_pose_loss(target, pts, Viewpoint{x[0], x[1], kDefaultDistance}, rig, kDefaultSplatRadius,
                                      false)
              .loss;
        },
        Eigen::Vector2d(v.azimuth, v.elevation), 1e-5);
    worst_ren = std::max({worst_ren, oracle::relative_error(pl.d_azimuth, num3[0]),
                          oracle::relative_error(pl.d_elevation, num3[1])});
  }
  report("gradient-fidelity", worst_cls <= 1e-4 && worst_con <= 1e-4 && worst_ren <= 1e-3,
         fmt("20 seeds; worst relative error: classification %.2e, contrastive %.2e (limit 1e-4), renderer %.2e "
             "(limit 1e-3)",
             worst_cls, worst_con, worst_ren));
}

// --- end-to-end runs (shared by separation and determinism) ---------------

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(KPNET_CLI) + " " + args + " >> " + log.string() + " 2>&1";
  const int raw = std::system(cmd.c_str());
  return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

bool pipeline(const fs::path& dir, int seed) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto log = dir / "log.txt";
  const auto s = " --seed " + std::to_string(seed);
  const auto d = dir.string();
  return run_cli("synth" + s + " --out " + d + "/data", log) == 0 &&
         run_cli("aggregate" + s + " --in " + d + "/data --out " + d + "/agg", log) == 0 &&
         run_cli("train-embed" + s + " --in " + d + "/data --aggregated " + d + "/agg --out " + d + "/emb", log) == 0 &&
         run_cli("project" + s + " --in " + d + "/data --embedding " + d + "/emb --out " + d + "/proj", log) == 0 &&
         run_cli("evaluate" + s + " --predictions " + d + "/proj/predictions.json --out " + d + "/eval", log) == 0;
}

std::map<std::string, std::string> read_tree(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file() || e.path().filename() == "timings.json" || e.path().filename() == "log.txt") continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    out[fs::relative(e.path(), dir).string()] = ss.str();
  }
  return out;
}

void contrastive_separation(const fs::path& run) {
  const auto ds = load_dataset(run / "data");
  const auto net = load_checkpoint(run / "emb" / "embedding.json");
  // brute-force triplets over the train split the network was fitted on
  struct Kp {
    int model, label;
    Eigen::VectorXd e;
  };
  std::vector<Kp> kps;
  std::vector<PointMatrix> clouds;
  std::vector<LabeledPoint> samples;
  for (std::size_t i : ds.indices(Split::Train)) {
    const auto emb = net.forward(ds.clouds[i].points);
    const auto set = load_aggregated(run / "agg" / "aggregated" / (ds.clouds[i].id + ".json"));
    for (const auto& k : set.keypoints) {
      kps.push_back({static_cast<int>(i), k.semantic_index, emb.row(k.point_index).transpose()});
      samples.push_back({static_cast<int>(clouds.size()), k.point_index, k.semantic_index});
    }
    clouds.push_back(ds.clouds[i].points);
  }
  long triplets = 0, satisfied = 0;
  for (std::size_t a = 0; a < kps.size(); ++a) {
    double hardest = oracle::kInf;
    for (const auto& b : kps)
      if (b.label != kps[a].label) hardest = std::min(hardest, (kps[a].e - b.e).squaredNorm());
    for (std::size_t p = 0; p < kps.size(); ++p) {
      if (p == a || kps[p].label != kps[a].label || kps[p].model == kps[a].model) continue;
      ++triplets;
      satisfied += (kps[a].e - kps[p].e).squaredNorm() < hardest;
    }
  }
  const double frac = triplets ? static_cast<double>(satisfied) / triplets : 0.0;
  const auto zero = contrastive_loss(EmbeddingNet::zeros(NetShape{}), clouds, samples, TrainConfig{}.margin);
  report("contrastive-separation", triplets > 0 && frac >= 0.95 && zero.total() == 0.0,
         fmt("%ld/%ld triplets satisfied (%.4f, need 0.95); zero-init loss %.17g", satisfied, triplets, frac,
             zero.total()));
}

void determinism(const fs::path& a, bool ok_a) {
  const auto b = g_work / "run_b";
  const bool ok_b = pipeline(b, 1);
  if (!ok_a || !ok_b) {
    report("end-to-end-determinism", false, "a pipeline stage failed; see log.txt in the run directories");
    return;
  }
  const auto ta = read_tree(a), tb = read_tree(b);
  int differing = 0;
  std::string first;
  for (const auto& [name, bytes] : ta) {
    const auto it = tb.find(name);
    if (it == tb.end() || it->second != bytes) {
      if (!differing) first = name;
      ++differing;
    }
  }
  const bool same = differing == 0 && ta.size() == tb.size();
  report("end-to-end-determinism", same,
         fmt("%d artifacts compared (timings.json excluded), %d differ%s", static_cast<int>(ta.size()), differing,
             first.empty() ? "" : (", first: " + first).c_str()));
}

// --- viewpoint --------------------------------------------------------------

void viewpoint_pipeline() {
  // chairs: tables have a 4-fold symmetry that makes bins indistinguishable
  const auto rig = CameraRig::standard(128);
  int hits = 0;
  Rng rng(99);
  std::uniform_int_distribution<int> a(0, kAzimuthBins - 1), e(0, kElevationBins - 1);
  for (int t = 0; t < 100; ++t) {
    static std::optional<BinRenderCache> cache;
    static PointMatrix pts;
    if (t % 10 == 0) {
      pts = generate_shape({ShapeKind::Chair, static_cast<std::uint64_t>(200 + t / 10), "c"}).cloud.points;
      cache.emplace(pts, rig);
    }
    const ViewpointBin b{a(rng), e(rng)};
    const auto r = coarse_bin_search(render_soft_silhouette(pts, bin_center(b), rig), *cache);
    hits += r.bin == b;
  }

  std::vector<double> before, after;
  std::uniform_real_distribution<double> az(0, 2 * std::numbers::pi), el(radians(-15), radians(45)),
      dir(0, 2 * std::numbers::pi);
  for (int t = 0; t < 20; ++t) {
    const auto pts = generate_shape({ShapeKind::Chair, static_cast<std::uint64_t>(300 + t), "c"}).cloud.points;
    const Viewpoint truth{az(rng), el(rng), kDefaultDistance};
    const auto target = render_soft_silhouette(pts, truth, rig);
    // 5 degrees away from the truth in a random direction on the sphere
    const double phi = dir(rng);
    const Viewpoint init = Viewpoint{truth.azimuth + radians(5) * std::cos(phi) / std::cos(truth.elevation),
                                     truth.elevation + radians(5) * std::sin(phi), kDefaultDistance}
                               .normalized();
    const auto r = finetune_viewpoint(target, pts, rig, init);
    before.push_back(degrees(angular_error(init, truth)));
    after.push_back(degrees(angular_error(r.viewpoint, truth)));
  }
  const double mb = median(before), ma = median(after);
  report("viewpoint-pipeline", hits == 100 && ma <= 0.5 * mb,
         fmt("coarse %d/100 bin centres; fine-tune median error %.4f -> %.4f deg (%.0f%% reduction, need 50%%)", hits,
             mb, ma, 100.0 * (1.0 - ma / mb)));
}

// --- oracle equivalence ---------------------------------------------------

void oracle_equivalence() {
  int dbscan_bad = 0;
  {
    Rng rng(42);
    std::uniform_int_distribution<int> count(1, 80), dims(1, 4), minpts(1, 6);
    std::uniform_real_distribution<double> eps(0.05, 0.6), u(0.0, 2.0);
    for (int t = 0; t < 100; ++t) {
      Eigen::MatrixXd x(count(rng), dims(rng));
      for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = u(rng);
      if (x.rows() > 3) x.row(1) = x.row(0);
      const double e = eps(rng);
      const int m = minpts(rng);
      dbscan_bad += !oracle::same_partition(dbscan_labels(x, e, m), oracle::dbscan(x, e, m));
    }
  }

  int geo_bad = 0;
  double smooth_err = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(100 + seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    PointMatrix p(50, 3);
    for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = u(rng);
    const auto g = build_knn_graph(p, kDefaultGraphK);
    const auto geo = oracle::floyd_warshall(oracle::knn_adjacency(p, kDefaultGraphK));
    for (int s = 0; s < 50; ++s) {
      const auto nb = geodesic_neighborhood(g, s, 25);
      const auto want = oracle::neighborhood(geo, s, 25);
      bool same = nb.indices == want;
      for (std::size_t t = 0; same && t < want.size(); ++t)
        same = std::abs(nb.distances[t] - geo[s][want[t]]) <= 1e-12 * std::max(1.0, geo[s][want[t]]);
      geo_bad += !same;
    }
    std::vector<double> v(50);
    for (auto& x : v) x = u(rng);
    for (double h : {0.03, 0.2, 1.0}) {
      const auto got = graph_gaussian_smooth(v, g, h, 12);
      const auto want = oracle::dense_smooth(v, geo, 12, h);
      for (int i = 0; i < 50; ++i) smooth_err = std::max(smooth_err, std::abs(got[i] - want[i]));
    }
  }

  double pck_err = 0.0;
  int pck_cases = 0;
  {
    Rng rng(7);
    std::uniform_real_distribution<double> size(20, 400), u(0, 1), jitter(-60, 60);
    for (int t = 0; t < 200; ++t) {
      std::vector<ImagePredictions> lib;
      std::vector<oracle::PckImage> ref;
      bool any = false;
      for (int i = 0; i < 4; ++i) {
        ImagePredictions img;
        img.image_id = std::to_string(i);
        img.image_width = img.bbox_width = size(rng);
        img.image_height = img.bbox_height = size(rng);
        oracle::PckImage r{img.image_width, img.image_height, {}};
        for (int k = 0; k < 8; ++k) {
          KeypointPrediction kp;
          kp.truth = {u(rng) * img.image_width, u(rng) * img.image_height};
          kp.predicted = kp.truth + Eigen::Vector2d(jitter(rng), jitter(rng));
          kp.visible = u(rng) > 0.2;
          any = any || kp.visible;
          r.kps.push_back({kp.predicted.x(), kp.predicted.y(), kp.truth.x(), kp.truth.y(), kp.visible, {}});
          img.keypoints.push_back(kp);
        }
        lib.push_back(img);
        ref.push_back(r);
      }
      if (!any) continue;
      for (double alpha : {0.05, 0.1, 0.2}) {
        pck_err = std::max(pck_err, std::abs(pck_score(lib, {alpha, PckNorm::Image, false}) - oracle::pck(ref, alpha, false)));
        ++pck_cases;
      }
    }
  }
  report("oracle-equivalence", dbscan_bad == 0 && geo_bad == 0 && pck_err <= 1e-12 && smooth_err <= 1e-10,
         fmt("dbscan %d/100 partitions differ; geodesic %d/1000 neighbourhoods differ; pck max err %.1e over %d; "
             "smoothing max err %.1e",
             dbscan_bad, geo_bad, pck_err, pck_cases, smooth_err));
}

// --- fixtures ---------------------------------------------------------------

void fixture_statistics() {
  const fs::path fx = KPNET_FIXTURES;
  const auto m = load_manifest(fx / "manifest_table3.json");
  const auto t = m.totals();
  std::vector<AggregatedKeypointSet> air;
  for (const auto& j : read_json(fx / "keypoints" / "airplane.json")) air.push_back(aggregated_from_json(j));
  const auto s = keypoint_count_stats(air);
  const bool ok = t == SplitCounts{5757, 824, 1653} && t.total() == 8234 && s.minimum == 5 && s.maximum == 17 &&
                  s.median == 14.0;
  report("fixture-statistics", ok,
         fmt("totals %d/%d/%d = %d; airplane keypoints min %d max %d median %g", t.train, t.val, t.test, t.total(),
             s.minimum, s.maximum, s.median));
}

}  // namespace

int main(int argc, char** argv) {
  g_work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "kpnet_acceptance";
  fs::remove_all(g_work);
  fs::create_directories(g_work);
  const auto t0 = std::chrono::steady_clock::now();

  aggregation_recovery();
  exact_recovery();
  gradient_fidelity();
  const auto run_a = g_work / "run_a";
  const bool ok_a = pipeline(run_a, 1);
  if (ok_a) {
    contrastive_separation(run_a);
  } else {
    report("contrastive-separation", false, "pipeline run failed; see " + (run_a / "log.txt").string());
  }
  viewpoint_pipeline();
  oracle_equivalence();
  fixture_statistics();
  determinism(run_a, ok_a);

  std::printf("%d of 8 criteria failed (%.0fs)\n", g_failed, seconds_since(t0));
  return g_failed == 0 ? 0 : 1;
}
