// kpnet command line: synth, aggregate, train-embed, project, evaluate, serve.
#include "kpnet/error.hpp"
#include "kpnet/pipeline.hpp"
#include "kpnet/service.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitConfig = 3;

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "JSON file overriding pipeline defaults");
    app->add_option("--seed", seed, "root seed (overrides the config)");
  }

  kpnet::PipelineConfig load() const {
    kpnet::PipelineConfig cfg;
    if (!config_path.empty()) cfg = kpnet::PipelineConfig::load(config_path);
    if (seed) cfg.seed = *seed;
    return cfg;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Keypoint aggregation, dense embedding and viewpoint transfer toolkit"};
  app.require_subcommand(1);

  Common synth_common, agg_common, embed_common, project_common, eval_common, serve_common;

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset with simulated annotators");
  synth_common.attach(synth);
  std::string synth_out, kind;
  std::optional<int> models, annotators;
  std::optional<double> sigma, miss, spurious;
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--kind", kind, "table, chair or airplane-toy");
  synth->add_option("--models", models, "number of models");
  synth->add_option("--annotators", annotators, "annotators per model");
  synth->add_option("--sigma", sigma, "annotator noise");
  synth->add_option("--miss", miss, "annotator miss rate");
  synth->add_option("--spurious", spurious, "annotator spurious click rate");

  auto* agg = app.add_subcommand("aggregate", "aggregate raw annotations into consensus keypoints");
  agg_common.attach(agg);
  std::string agg_in, agg_out;
  std::optional<int> iterations;
  agg->add_option("--in", agg_in, "dataset directory")->required();
  agg->add_option("--out", agg_out, "output directory")->required();
  agg->add_option("--iterations", iterations, "alternation iterations");

  auto* embed = app.add_subcommand("train-embed", "train dense contrastive embeddings on aggregated keypoints");
  embed_common.attach(embed);
  std::string embed_in, embed_agg, embed_out;
  std::optional<int> epochs;
  embed->add_option("--in", embed_in, "dataset directory")->required();
  embed->add_option("--aggregated", embed_agg, "aggregate output directory")->required();
  embed->add_option("--out", embed_out, "output directory")->required();
  embed->add_option("--epochs", epochs, "training epochs");

  auto* project = app.add_subcommand("project", "recover viewpoints and transfer embeddings onto images");
  project_common.attach(project);
  std::string project_in, project_embed, project_out;
  project->add_option("--in", project_in, "dataset directory")->required();
  project->add_option("--embedding", project_embed, "train-embed output directory")->required();
  project->add_option("--out", project_out, "output directory")->required();

  auto* evaluate = app.add_subcommand("evaluate", "PCK of keypoint predictions");
  eval_common.attach(evaluate);
  std::string eval_pred, eval_out;
  std::optional<double> alpha;
  bool symmetric = false;
  evaluate->add_option("--predictions", eval_pred, "predictions.json from project")->required();
  evaluate->add_option("--out", eval_out, "output directory")->required();
  evaluate->add_option("--alpha", alpha, "tolerance factor");
  evaluate->add_flag("--symmetric", symmetric, "score against symmetry orbits");

  auto* serve = app.add_subcommand("serve", "HTTP API for annotation and verification");
  serve_common.attach(serve);
  std::string serve_data, serve_agg, journal, host = "127.0.0.1";
  int port = 8080;
  serve->add_option("--data", serve_data, "dataset directory")->required();
  serve->add_option("--aggregated", serve_agg, "aggregate output directory");
  serve->add_option("--journal", journal, "append-only journal file");
  serve->add_option("--host", host, "bind address");
  serve->add_option("--port", port, "port");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return kExitUsage;
  }

  try {
    if (*synth) {
      auto cfg = synth_common.load();
      if (!kind.empty()) cfg.synth.kind = kpnet::shape_kind_from_string(kind);
      if (models) cfg.synth.models = *models;
      if (annotators) cfg.synth.annotators = *annotators;
      if (sigma) cfg.synth.sigma = *sigma;
      if (miss) cfg.synth.miss_rate = *miss;
      if (spurious) cfg.synth.spurious_rate = *spurious;
      cfg.validate();
      kpnet::run_synth(cfg, synth_out);
      std::cout << "wrote " << cfg.synth.models << " models to " << synth_out << "\n";
    } else if (*agg) {
      auto cfg = agg_common.load();
      if (iterations) cfg.aggregate.iterations = *iterations;
      cfg.validate();
      const auto r = kpnet::run_aggregate(cfg, agg_in, agg_out);
      std::cout << "clusters: " << r.diagnostics.clusters << ", candidates: " << r.diagnostics.pooled_candidates
                << "\n";
    } else if (*embed) {
      auto cfg = embed_common.load();
      if (epochs) cfg.embed.epochs = *epochs;
      cfg.validate();
      const auto s = kpnet::run_train_embed(cfg, embed_in, embed_agg, embed_out);
      std::printf("triplets satisfied: %ld / %ld (%.4f)\n", s.triplets.satisfied, s.triplets.triplets,
                  s.triplets.fraction());
    } else if (*project) {
      auto cfg = project_common.load();
      cfg.validate();
      kpnet::run_project(cfg, project_in, project_embed, project_out);
      std::cout << "wrote predictions to " << project_out << "\n";
    } else if (*evaluate) {
      auto cfg = eval_common.load();
      if (alpha) cfg.evaluate.alpha = *alpha;
      if (symmetric) cfg.evaluate.symmetric = true;
      cfg.validate();
      const auto r = kpnet::run_evaluate(cfg, eval_pred, eval_out);
      std::printf("PCK (img/bbox) @ %.3g: %.4f/%.4f over %d keypoints\n", r.alpha, r.pck_img, r.pck_bbox, r.keypoints);
    } else if (*serve) {
      auto cfg = serve_common.load();
      cfg.validate();
      kpnet::ServiceOptions opts{serve_data, serve_agg, journal, cfg};
      kpnet::KeypointService service(opts);
      std::cout << "serving on " << host << ":" << port << std::endl;
      kpnet::serve_forever(service, host, port);
    }
  } catch (const kpnet::Error& e) {
    std::cerr << "error [" << kpnet::to_string(e.code()) << "]: " << e.what() << "\n";
    return e.code() == kpnet::ErrorCode::InvalidConfig ? kExitConfig : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
