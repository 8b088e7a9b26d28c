#include "frontal/checkpoint.hpp"
#include "frontal/dataset.hpp"
#include "frontal/evaluator.hpp"
#include "frontal/image_io.hpp"
#include "frontal/losses.hpp"
#include "frontal/networks.hpp"
#include "frontal/parsing.hpp"
#include "frontal/selfcheck.hpp"
#include "frontal/toygen.hpp"
#include "frontal/trainer.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <tuple>

namespace {

using namespace frontal;

void run_toygen(const std::string& spec_path, const std::string& out_dir) {
  const ToySpec spec = load_toy_spec(spec_path);
  const std::vector<ImageRecord> records = generate_toy_dataset(spec, out_dir);
  std::cout << "generated " << records.size() << " images ("
            << spec.n_identities << " identities, " << spec.poses.size() << " poses, "
            << spec.attributes.size() << " attributes, " << spec.illuminations.size()
            << " illuminations)\n";
  std::cout << (std::filesystem::path(out_dir) / "manifest.jsonl").string() << "\n";
}

void run_protocol_build(const std::string& manifest_path, int train_subjects,
                        std::uint64_t seed, const std::string& out_dir) {
  const std::vector<ImageRecord> records = load_manifest(manifest_path, ManifestMode::strict);
  const ProtocolSplit split = build_protocol(records, train_subjects, seed);

  ProtocolDir protocol;
  protocol.seed = seed;
  protocol.train_subject_count = train_subjects;
  protocol.image_root =
      std::filesystem::absolute(std::filesystem::path(manifest_path)).parent_path().string();
  protocol.train = select_records(records, split.train);
  protocol.probes = select_records(records, split.probes);
  protocol.gallery = select_records(records, split.gallery);
  write_protocol_dir(out_dir, protocol);

  std::cout << "train records:   " << protocol.train.size() << "\n";
  std::cout << "probe records:   " << protocol.probes.size() << "\n";
  std::cout << "gallery records: " << protocol.gallery.size() << "\n";
  const std::filesystem::path root(out_dir);
  std::cout << (root / "protocol.json").string() << "\n";
  std::cout << (root / "train.jsonl").string() << "\n";
  std::cout << (root / "probes.jsonl").string() << "\n";
  std::cout << (root / "gallery.jsonl").string() << "\n";
}

void run_train(const std::string& protocol_dir, const std::string& config_path,
               const std::string& checkpoint_dir, bool resume, const std::string& extractor_id) {
  const ProtocolDir protocol = read_protocol_dir(protocol_dir);
  const TrainConfig config = load_train_config(config_path);
  const auto extractor = make_extractor(extractor_id);
  TrainRig rig = make_default_rig(config.image_size, config.seed);
  LandmarkStandInParser parser;
  PairedDiskSource source(protocol.train, protocol.image_root, config.image_size, parser);
  Trainer trainer(rig.gen, rig.d1, rig.d2, *extractor, config);
  const FitResult result = trainer.fit(source, checkpoint_dir, resume);

  std::cout << "trained " << result.traces.size() << " steps (through epoch "
            << result.final_epoch << ", global step " << result.final_step << ", "
            << source.size() << " sample pairs)\n";
  for (const std::string& file : result.checkpoint_files) std::cout << file << "\n";
  std::cout << (std::filesystem::path(checkpoint_dir) / "trace.jsonl").string() << "\n";
}

void run_synthesize(const std::string& checkpoint_path, const std::string& manifest_path,
                    const std::string& out_dir) {
  const TrainState state = load_checkpoint(checkpoint_path);
  const std::vector<ImageRecord> records = load_manifest(manifest_path, ManifestMode::lax);
  const std::filesystem::path image_root =
      std::filesystem::absolute(std::filesystem::path(manifest_path)).parent_path();
  const std::filesystem::path out_root(out_dir);
  std::filesystem::create_directories(out_root);
  const int size = state.meta.image_size;

  // Frontal ground truth per (subject, attribute, illumination), when present.
  using Key = std::tuple<int, std::string, std::string>;
  std::map<Key, std::size_t> frontals;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (records[i].is_frontal())
      frontals.emplace(Key{records[i].subject_id, records[i].attribute,
                           records[i].illumination},
                       i);

  long written = 0;
  for (const ImageRecord& rec : records) {
    if (rec.is_frontal()) continue;
    const Tensor raw = read_image((image_root / rec.image_ref).string());
    const Tensor x = align_face(raw, rec.landmarks, size);
    const Tensor y_hat = state.gen.forward(x);

    std::vector<const Tensor*> panels = {&x, &y_hat};
    Tensor y;
    const auto it = frontals.find(Key{rec.subject_id, rec.attribute, rec.illumination});
    if (it != frontals.end()) {
      const ImageRecord& fr = records[it->second];
      y = align_face(read_image((image_root / fr.image_ref).string()), fr.landmarks, size);
      panels.push_back(&y);
    }
    Tensor strip(3, size, size * static_cast<int>(panels.size()));
    for (std::size_t p = 0; p < panels.size(); ++p)
      for (int c = 0; c < 3; ++c)
        for (int yy = 0; yy < size; ++yy)
          for (int xx = 0; xx < size; ++xx)
            strip(c, yy, static_cast<int>(p) * size + xx) = (*panels[p])(c, yy, xx);

    const std::string stem = std::filesystem::path(rec.image_ref).stem().string();
    write_image((out_root / ("fr_" + stem + ".ppm")).string(), y_hat);
    write_image((out_root / ("sbs_" + stem + ".ppm")).string(), strip);
    ++written;
  }
  std::cout << "synthesized " << written << " frontalized images (fr_*.ppm, with sbs_*.ppm "
            << "input|output|target strips) in " << out_root.string() << "\n";
}

void run_eval_rank1(const std::string& checkpoint_path, const std::string& protocol_dir,
                    const std::string& extractor_id, const std::string& report_path,
                    const std::string& mode_name) {
  FusionMode mode;
  if (mode_name == "fused") {
    mode = FusionMode::fused;
  } else if (mode_name == "original") {
    mode = FusionMode::original_only;
  } else if (mode_name == "generated") {
    mode = FusionMode::generated_only;
  } else {
    fail_usage("--mode must be fused, original, or generated");
  }

  const TrainState state = load_checkpoint(checkpoint_path);
  const ProtocolDir protocol = read_protocol_dir(protocol_dir);
  const auto extractor = make_extractor(extractor_id);
  const int size = state.meta.image_size;

  const EmbeddingSet probes_orig =
      embed_records(protocol.probes, protocol.image_root, size, *extractor, nullptr, true);
  const EmbeddingSet probes_gen =
      embed_records(protocol.probes, protocol.image_root, size, *extractor, &state.gen, true);
  const EmbeddingSet gallery_orig =
      embed_records(protocol.gallery, protocol.image_root, size, *extractor, nullptr, false);
  const EmbeddingSet gallery_gen =
      embed_records(protocol.gallery, protocol.image_root, size, *extractor, &state.gen, false);

  const Rank1Result result = rank1(probes_orig, probes_gen, gallery_orig, gallery_gen, mode);

  std::ofstream report(report_path, std::ios::trunc);
  if (!report) fail_runtime("evaluation", "cannot open report file: " + report_path);
  report << rank1_report_csv(result);
  report.flush();
  if (!report) fail_runtime("evaluation", "write failed: " + report_path);

  std::cout << rank1_report_grid(result);
  std::cout << report_path << "\n";
}

int run_verify() {
  const std::vector<CheckResult> results = run_all_checks();
  return report_checks(results, std::cout);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pose-robust face frontalization: data, training, and evaluation toolkit"};
  app.require_subcommand(1);

  std::string spec_path, out_dir;
  CLI::App* toygen = app.add_subcommand("toygen", "Generate a synthetic labeled face corpus");
  toygen->add_option("--spec", spec_path, "JSON corpus description")->required();
  toygen->add_option("--out", out_dir, "output directory")->required();

  CLI::App* protocol = app.add_subcommand("protocol", "Dataset protocol operations");
  protocol->require_subcommand(1);
  std::string manifest_path, protocol_out;
  int train_subjects = 162;
  std::uint64_t protocol_seed = 0;
  CLI::App* build = protocol->add_subcommand(
      "build", "Split a manifest into train records, probes, and a gallery");
  build->add_option("--manifest", manifest_path, "JSONL manifest")->required();
  build->add_option("--train-subjects", train_subjects, "number of training subjects")
      ->required();
  build->add_option("--seed", protocol_seed, "split seed");
  build->add_option("--out", protocol_out, "output directory")->required();

  std::string train_protocol, train_config, train_ckpts, train_extractor = "toy:0";
  bool train_resume = false;
  CLI::App* train = app.add_subcommand("train", "Train the frontalization networks");
  train->add_option("--protocol", train_protocol, "protocol directory")->required();
  train->add_option("--config", train_config, "training configuration JSON")->required();
  train->add_option("--checkpoints", train_ckpts, "checkpoint directory")->required();
  train->add_flag("--resume", train_resume, "continue from the latest checkpoint");
  train->add_option("--extractor", train_extractor,
                    "identity extractor id (pixel, toy, toy:<seed>)");

  std::string syn_ckpt, syn_manifest, syn_out;
  CLI::App* synthesize =
      app.add_subcommand("synthesize", "Frontalize every non-frontal manifest record");
  synthesize->add_option("--checkpoint", syn_ckpt, "checkpoint file")->required();
  synthesize->add_option("--manifest", syn_manifest, "JSONL manifest")->required();
  synthesize->add_option("--out", syn_out, "output directory")->required();

  CLI::App* eval = app.add_subcommand("eval", "Evaluation operations");
  eval->require_subcommand(1);
  std::string eval_ckpt, eval_protocol, eval_extractor = "toy:0", eval_report,
              eval_mode = "fused";
  CLI::App* rank1_cmd = eval->add_subcommand(
      "rank1", "Rank-1 identification over a protocol's probes and gallery");
  rank1_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  rank1_cmd->add_option("--protocol", eval_protocol, "protocol directory")->required();
  rank1_cmd->add_option("--extractor", eval_extractor,
                        "identity extractor id (pixel, toy, toy:<seed>)")
      ->required();
  rank1_cmd->add_option("--report", eval_report, "CSV report output path")->required();
  rank1_cmd->add_option("--mode", eval_mode, "distance mode: fused, original, or generated");

  CLI::App* verify = app.add_subcommand("verify", "Run the built-in verification suites");

  toygen->callback([&]() { run_toygen(spec_path, out_dir); });
  build->callback(
      [&]() { run_protocol_build(manifest_path, train_subjects, protocol_seed, protocol_out); });
  train->callback([&]() {
    run_train(train_protocol, train_config, train_ckpts, train_resume, train_extractor);
  });
  synthesize->callback([&]() { run_synthesize(syn_ckpt, syn_manifest, syn_out); });
  rank1_cmd->callback(
      [&]() { run_eval_rank1(eval_ckpt, eval_protocol, eval_extractor, eval_report, eval_mode); });
  verify->callback([&]() {
    if (run_verify() != 0) fail_validation("verify", "verification checks failed");
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;  // help/version exit 0; bad usage exits 1
  } catch (const frontal::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(frontal::ErrorKind::runtime);
  }
  return 0;
}
